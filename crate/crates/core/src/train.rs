//! Training protocol: loss-weight annealing, learning-rate schedule,
//! mini-batch Adam epochs with validation, and best-of-restarts selection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{pair_rows, Dataset, TRAIN, VALIDATION};
use crate::error::{Error, Result};
use crate::loss::{total_loss_grad, LossComponents, LossWeights};
use crate::matrix::Matrix;
use crate::model::{build_model, ModelParams, ModelSpec, Variant};
use crate::nn::{AdamState, Mode};
use crate::seed::{self, SeededRng};

/// Annealing controller for the covariance (or KL) weight. The weight is
/// stored as a step count so that it is always an exact multiple of `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnealState {
    pub count: u32,
    pub step: f64,
    pub target: f64,
    pub stopped: bool,
    pub stopped_epoch: Option<usize>,
}

impl AnnealState {
    pub fn new(step: f64, target: f64) -> Self {
        AnnealState {
            count: 0,
            step,
            target,
            stopped: false,
            stopped_epoch: None,
        }
    }

    pub fn weight(&self) -> f64 {
        self.count as f64 * self.step
    }
}

/// End-of-epoch annealing update: stop (and freeze) once the observed loss
/// reaches the target, otherwise raise the weight by one step.
pub fn anneal_update(state: AnnealState, observed: f64, epoch: usize) -> AnnealState {
    if state.stopped {
        return state;
    }
    if observed <= state.target {
        AnnealState {
            stopped: true,
            stopped_epoch: Some(epoch),
            ..state
        }
    } else {
        AnnealState {
            count: state.count + 1,
            ..state
        }
    }
}

/// Which split's regularizer loss drives annealing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AnnealSource {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub restarts: usize,
    pub seed: u64,
    pub lr_halving_period: usize,
    pub fallback_lr_start_epoch: usize,
    pub anneal_step: f64,
    pub anneal_target: f64,
    pub anneal_source: AnnealSource,
    /// Drop the last partial batch of each epoch.
    pub drop_last: bool,
}

impl TrainConfig {
    /// Benchmark settings for a variant.
    pub fn for_variant(variant: Variant) -> Self {
        let large = matches!(variant, Variant::Diresa | Variant::Crae);
        TrainConfig {
            epochs: 200,
            batch_size: if large { 512 } else { 128 },
            base_lr: 1e-3,
            restarts: 10,
            seed: 0,
            lr_halving_period: 10,
            fallback_lr_start_epoch: 50,
            anneal_step: 0.2,
            anneal_target: 2e-5,
            anneal_source: AnnealSource::Validation,
            drop_last: large,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("training: {what}")));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.base_lr > 0.0) {
            return bad("base_lr must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.lr_halving_period == 0 {
            return bad("lr_halving_period must be positive");
        }
        if !(self.anneal_step > 0.0) || !(self.anneal_target >= 0.0) {
            return bad("anneal_step must be positive and anneal_target non-negative");
        }
        Ok(())
    }

    pub fn new_anneal(&self) -> AnnealState {
        AnnealState::new(self.anneal_step, self.anneal_target)
    }
}

/// Learning rate of `epoch`: `base_lr` until the trigger epoch, then halved
/// at every `lr_halving_period` boundary after it. The trigger is the epoch
/// annealing stopped at for annealed variants (no decay while annealing is
/// still running), and `fallback_lr_start_epoch` otherwise.
pub fn lr_for_epoch(config: &TrainConfig, epoch: usize, anneal: &AnnealState, annealed: bool) -> f64 {
    let trigger = if annealed {
        match anneal.stopped_epoch {
            Some(e) => e,
            None => return config.base_lr,
        }
    } else {
        config.fallback_lr_start_epoch
    };
    if epoch < trigger {
        return config.base_lr;
    }
    let halvings = (epoch - trigger) / config.lr_halving_period;
    config.base_lr / libm::pow(2.0, halvings as f64)
}

/// Batch-averaged loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossMeans {
    pub recon: f64,
    pub cov: Option<f64>,
    pub dist: Option<f64>,
    pub kl: Option<f64>,
    pub total: f64,
    pub batches: usize,
    /// Batches whose correlation distance term was undefined and skipped.
    pub dist_skipped: usize,
}

#[derive(Default)]
struct Accumulator {
    recon: f64,
    cov: Option<f64>,
    dist: Option<f64>,
    dist_n: usize,
    kl: Option<f64>,
    total: f64,
    n: usize,
    skipped: usize,
}

impl Accumulator {
    fn add(&mut self, c: &LossComponents, total: f64) {
        self.n += 1;
        self.recon += c.recon;
        self.total += total;
        if let Some(v) = c.cov {
            *self.cov.get_or_insert(0.0) += v;
        }
        if let Some(v) = c.dist {
            *self.dist.get_or_insert(0.0) += v;
            self.dist_n += 1;
        }
        if let Some(v) = c.kl {
            *self.kl.get_or_insert(0.0) += v;
        }
        if c.dist_skipped {
            self.skipped += 1;
        }
    }

    fn finish(self) -> LossMeans {
        let n = self.n.max(1) as f64;
        LossMeans {
            recon: self.recon / n,
            cov: self.cov.map(|v| v / n),
            dist: self.dist.map(|v| v / self.dist_n.max(1) as f64),
            kl: self.kl.map(|v| v / n),
            total: self.total / n,
            batches: self.n,
            dist_skipped: self.skipped,
        }
    }
}

impl LossMeans {
    fn components(&self) -> LossComponents {
        LossComponents {
            recon: self.recon,
            cov: self.cov,
            dist: self.dist,
            kl: self.kl,
            dist_skipped: false,
        }
    }

    /// Weighted total of the averaged components under `w`.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.components().weighted_total(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Annealed weight in force during this epoch.
    pub anneal_weight: f64,
    /// Regularizer loss the annealing controller observed at the end of the
    /// epoch, if the variant is annealed.
    pub anneal_observed: Option<f64>,
    pub train: LossMeans,
    pub validation: LossMeans,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub anneal_stopped_epoch: Option<usize>,
}

/// A finished training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub seed: u64,
    pub data_seed: u64,
    pub final_weights: LossWeights,
    pub anneal: AnnealState,
    /// Validation loss of the final parameters, weighted with
    /// `final_weights`; the restart selection criterion.
    pub validation_loss: f64,
}

/// A failed run keeps the history recorded up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub history: TrainHistory,
    pub seed: u64,
}

impl core::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "training with seed {} failed after {} epoch(s): {}",
            self.seed,
            self.history.records.len(),
            self.error
        )
    }
}

/// Train/validation matrices, plus their fixed twin permutations for the
/// distance-regularized variant.
///
/// Validation rows are held in one fixed random order so that each
/// validation batch is a representative sample of the split; contiguous
/// trajectory segments would bias per-batch covariance statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub train: Matrix,
    pub train_twin: Option<Matrix>,
    pub validation: Matrix,
    pub validation_twin: Option<Matrix>,
    pub data_seed: u64,
}

/// Seed of the fixed twin and validation permutations for a run with global
/// seed `seed`.
pub fn data_seed(seed: u64) -> u64 {
    seed::derive_seed(seed, "twin-permutation")
}

impl TrainData {
    /// Extracts the train and validation splits. The permutations are built
    /// once, from `data_seed`.
    pub fn from_dataset(dataset: &Dataset, variant: Variant, data_seed: u64) -> Result<Self> {
        let train = dataset.split(TRAIN)?;
        let validation = dataset.split(VALIDATION)?;
        Self::new(train, validation, variant, data_seed)
    }

    pub fn new(train: Matrix, validation: Matrix, variant: Variant, data_seed: u64) -> Result<Self> {
        if train.rows() == 0 || validation.rows() == 0 {
            return Err(Error::Config("training needs nonempty train and validation splits".into()));
        }
        let vp = pair_rows(validation, seed::derive_seed(data_seed, "validation-order"), VALIDATION)?;
        let validation = vp.shuffled;
        if variant != Variant::Diresa {
            return Ok(TrainData {
                train,
                train_twin: None,
                validation,
                validation_twin: None,
                data_seed,
            });
        }
        let tp = pair_rows(train, data_seed, TRAIN)?;
        let vt = pair_rows(validation, seed::derive_seed(data_seed, VALIDATION), VALIDATION)?;
        Ok(TrainData {
            train: tp.primary,
            train_twin: Some(tp.shuffled),
            validation: vt.primary,
            validation_twin: Some(vt.shuffled),
            data_seed,
        })
    }
}

/// Loss, components and flat parameter gradient of one batch in train mode.
/// Running batch-norm statistics are not touched.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    batch: &Matrix,
    twin: Option<&Matrix>,
    weights: &LossWeights,
    rng: &mut SeededRng,
) -> Result<(f64, LossComponents, Vec<f64>, crate::model::ForwardTape)> {
    let (bundle, tape) = params.forward_taped(batch, twin, Some(rng), Mode::Train)?;
    let (total, comps, grads) = total_loss_grad(&bundle, batch, weights, params.spec())?;
    let flat = params.backward(&bundle, &tape, &grads)?;
    Ok((total, comps, flat, tape))
}

/// Row ranges of the batches over `n` rows.
fn batch_ranges(n: usize, batch_size: usize, drop_last: bool) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n)
        .step_by(batch_size)
        .map(|s| (s, (s + batch_size).min(n)))
        .collect();
    if drop_last && out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s < batch_size) {
        out.pop();
    }
    out
}

/// Inference-mode loss averaged over validation batches of the training
/// batch size.
pub fn evaluate_loss(
    params: &ModelParams,
    data: &Matrix,
    twin: Option<&Matrix>,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<LossMeans> {
    let mut acc = Accumulator::default();
    for (s, e) in batch_ranges(data.rows(), config.batch_size, config.drop_last) {
        let batch = data.slice_rows(s, e);
        let tb = twin.map(|t| t.slice_rows(s, e));
        let bundle = params.forward(&batch, tb.as_ref(), None, Mode::Infer)?;
        let (total, comps, _) = total_loss_grad(&bundle, &batch, weights, params.spec())?;
        acc.add(&comps, total);
    }
    Ok(acc.finish())
}

/// Seed of restart `index` for a run with global seed `seed`.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    seed::derive_indexed(seed, "restart", index as u64)
}

/// One training run from freshly initialized parameters.
pub fn train(spec: &ModelSpec, data: &TrainData, config: &TrainConfig, run_seed: u64) -> core::result::Result<TrainedModel, TrainFailure> {
    let mut history = TrainHistory::default();
    let fail = |error: Error, history: TrainHistory| TrainFailure {
        error,
        history,
        seed: run_seed,
    };
    if let Err(e) = config.validate().and_then(|_| spec.validate()) {
        return Err(fail(e, history));
    }
    let mut params = match build_model(spec, seed::derive_seed(run_seed, "init")) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, history)),
    };
    let variant = spec.variant;
    let annealed = variant.is_annealed();
    let mut anneal = config.new_anneal();
    let mut adam = AdamState::new(params.param_count(), config.base_lr);
    let mut shuffle_rng = seed::rng(seed::derive_seed(run_seed, "batch-shuffle"));
    let mut noise_rng = seed::rng(seed::derive_seed(run_seed, "vae-noise"));
    let n = data.train.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut flat = params.params_flat();

    for epoch in 0..config.epochs {
        let lr = lr_for_epoch(config, epoch, &anneal, annealed);
        adam.lr = lr;
        let weights = LossWeights::for_variant(variant, if annealed { anneal.weight() } else { 0.0 });
        order.shuffle(&mut shuffle_rng);
        let mut acc = Accumulator::default();
        for (s, e) in batch_ranges(n, config.batch_size, config.drop_last) {
            let idx = &order[s..e];
            let batch = data.train.select_rows(idx);
            let twin = data.train_twin.as_ref().map(|t| t.select_rows(idx));
            let step = batch_loss_and_grad(&params, &batch, twin.as_ref(), &weights, &mut noise_rng)
                .and_then(|(total, comps, grad, tape)| {
                    adam.step(&mut flat, &grad)?;
                    params.read_params(&flat)?;
                    params.commit_running_stats(&tape)?;
                    Ok((total, comps))
                });
            match step {
                Ok((total, comps)) => acc.add(&comps, total),
                Err(e) => return Err(fail(e, history)),
            }
        }
        let train_means = acc.finish();
        let val = match evaluate_loss(&params, &data.validation, data.validation_twin.as_ref(), &weights, config) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, history)),
        };
        if !params.is_finite() {
            return Err(fail(
                Error::Divergence {
                    context: format!("parameters after epoch {epoch}"),
                    index: epoch,
                },
                history,
            ));
        }
        let observed = if annealed {
            let src = match config.anneal_source {
                AnnealSource::Train => &train_means,
                AnnealSource::Validation => &val,
            };
            if variant == Variant::Vae { src.kl } else { src.cov }
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            lr,
            anneal_weight: weights.cov.max(weights.kl),
            anneal_observed: observed,
            train: train_means,
            validation: val,
        });
        if let Some(o) = observed {
            anneal = anneal_update(anneal, o, epoch);
        }
    }
    history.anneal_stopped_epoch = anneal.stopped_epoch;
    let final_weights = LossWeights::for_variant(variant, if annealed { anneal.weight() } else { 0.0 });
    let validation_loss = history
        .records
        .last()
        .map_or(f64::INFINITY, |r| r.validation.weighted_total(&final_weights));
    Ok(TrainedModel {
        params,
        history,
        seed: run_seed,
        data_seed: data.data_seed,
        final_weights,
        anneal,
        validation_loss,
    })
}

/// Outcome of one restart in a selection.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RestartSummary {
    pub index: usize,
    pub seed: u64,
    pub validation_loss: Option<f64>,
    pub error: Option<String>,
}

/// Picks the run with the smallest finite validation loss (ties go to the
/// earliest restart).
pub fn select_best(
    runs: Vec<core::result::Result<TrainedModel, TrainFailure>>,
) -> Result<(TrainedModel, Vec<RestartSummary>)> {
    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<TrainedModel> = None;
    for (index, run) in runs.into_iter().enumerate() {
        match run {
            Ok(m) => {
                summaries.push(RestartSummary {
                    index,
                    seed: m.seed,
                    validation_loss: Some(m.validation_loss),
                    error: None,
                });
                let better = m.validation_loss.is_finite()
                    && best.as_ref().is_none_or(|b| m.validation_loss < b.validation_loss);
                if better {
                    best = Some(m);
                }
            }
            Err(f) => summaries.push(RestartSummary {
                index,
                seed: f.seed,
                validation_loss: None,
                error: Some(format!("{}", f.error)),
            }),
        }
    }
    match best {
        Some(b) => Ok((b, summaries)),
        None => Err(Error::Divergence {
            context: format!("all {} restart(s) failed", summaries.len()),
            index: 0,
        }),
    }
}

/// Runs `config.restarts` independent seeds sequentially and keeps the best.
pub fn train_restarts(spec: &ModelSpec, data: &TrainData, config: &TrainConfig) -> Result<(TrainedModel, Vec<RestartSummary>)> {
    config.validate()?;
    let runs = (0..config.restarts)
        .map(|k| train(spec, data, config, restart_seed(config.seed, k)))
        .collect();
    select_best(runs)
}
