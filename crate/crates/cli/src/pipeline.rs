//! The `generate`, `train`, `evaluate`, `analyze` and `bench` commands.
//!
//! Every command writes its files through a [`Recorder`] and finishes with a
//! manifest. Independent method trainings, restarts and anchors run on the
//! current rayon pool; results are always collected in a fixed order, so
//! outputs do not depend on the thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use diresa_core::data::{scale_01, Dataset};
use diresa_core::latent::{component_delta_signed, order_components, scatter_points, ComponentOrdering};
use diresa_core::lorenz::generate_dataset;
use diresa_core::matrix::mean_squared_error;
use diresa_core::metrics::{aggregate, kpi_values, sample_kpis, AnchorSelection, Kpi, KpiConfig, KpiReport, SampleKpis};
use diresa_core::pca::fit_pca;
use diresa_core::reducer::{Identity, Reducer};
use diresa_core::stats::{welch_ttest, WelchTest};
use diresa_core::train::{self, RestartSummary, TrainData, TrainFailure, TrainedModel};
use diresa_core::Matrix;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset_io;
use crate::error::{CliError, Result};
use crate::fsutil;
use crate::manifest::{Recorder, RunManifest};
use crate::method::{Fitted, Method};
use crate::report;

pub const DATASET_FILE: &str = "dataset.drsa";

pub fn checkpoint_rel(label: &str) -> String {
    format!("checkpoints/{label}.ckpt")
}

/// Loads or generates the configured dataset and returns it with the bytes
/// of its binary encoding (for checksums).
pub fn resolve_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = match &cfg.dataset.path {
        None => generate_dataset(&cfg.lorenz_params())?,
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => dataset_io::import_csv(p)?,
        Some(p) => dataset_io::load_dataset(p)?,
    };
    if ds.scaling.is_none() && cfg.dataset.path.is_some() && cfg.dataset.scale.unwrap_or(true) {
        let (scaled, meta) = scale_01(&ds.data).map_err(|e| CliError::config("dataset.scale", e.to_string()))?;
        ds.data = scaled;
        ds.scaling = Some(meta);
    }
    if ds.splits.is_empty() {
        let f = cfg.dataset.split.unwrap_or([0.8, 0.1, 0.1]);
        let n = ds.n_samples();
        let train = (n as f64 * f[0]).floor() as usize;
        let validation = ((n as f64 * f[1]).floor() as usize).min(n - train);
        ds.assign_splits(train, validation, n - train - validation)?;
    }
    Ok(ds)
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
    pub cols: usize,
    pub manifest: RunManifest,
}

/// Writes the configured dataset (generated, or imported from a file) as a
/// binary dataset file.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateOutput> {
    let mut rec = Recorder::new("generate", cfg);
    let (path, bytes, ds) = generate_into(cfg, &mut rec)?;
    Ok(GenerateOutput {
        path,
        sha256: fsutil::sha256_hex(&bytes),
        rows: ds.n_samples(),
        cols: ds.n_features(),
        manifest: rec.finish()?,
    })
}

fn generate_into(cfg: &RunConfig, rec: &mut Recorder) -> Result<(PathBuf, Vec<u8>, Dataset)> {
    rec.timed("generate", |rec| {
        if let Some(p) = &cfg.dataset.path {
            rec.input(&p.display().to_string(), &fsutil::read(p)?);
        }
        let ds = resolve_dataset(cfg)?;
        let bytes = dataset_io::encode_dataset(&ds);
        let path = rec.write(DATASET_FILE, &bytes)?;
        Ok((path, bytes, ds))
    })
}

/// Records the dataset a command works on as a manifest input.
fn dataset_for(cfg: &RunConfig, rec: &mut Recorder) -> Result<Dataset> {
    let ds = resolve_dataset(cfg)?;
    let label = match &cfg.dataset.path {
        Some(p) => p.display().to_string(),
        None => "generated:lorenz".into(),
    };
    rec.input(&label, &dataset_io::encode_dataset(&ds));
    Ok(ds)
}

/// Outcome of fitting one method.
#[derive(Debug)]
pub struct MethodRun {
    pub method: Method,
    pub checkpoint: Option<Checkpoint>,
    pub error: Option<CliError>,
    /// Files to write, relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    pub seconds: f64,
}

fn restarts_csv(runs: &[RestartSummary]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.seed.to_string(),
                report::opt(r.validation_loss),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    report::csv_bytes(&["restart", "seed", "validation_loss", "error"], &rows)
}

/// Runs every restart on the pool and keeps the best.
pub fn train_restarts_parallel(
    spec: &diresa_core::model::ModelSpec,
    data: &TrainData,
    config: &diresa_core::train::TrainConfig,
) -> std::result::Result<(TrainedModel, Vec<RestartSummary>), Vec<TrainFailure>> {
    let runs: Vec<std::result::Result<TrainedModel, TrainFailure>> = (0..config.restarts)
        .into_par_iter()
        .map(|k| train::train(spec, data, config, train::restart_seed(config.seed, k)))
        .collect();
    if runs.iter().all(|r| r.is_err()) {
        return Err(runs.into_iter().filter_map(|r| r.err()).collect());
    }
    Ok(train::select_best(runs).expect("at least one restart succeeded"))
}

fn fit_method(cfg: &RunConfig, ds: &Dataset, method: Method) -> MethodRun {
    let start = Instant::now();
    let label = method.label();
    let mut files = Vec::new();
    let result: Result<Option<Checkpoint>> = (|| match method {
        Method::Identity => Ok(None),
        Method::Pca => {
            let train_split = ds.split(diresa_core::data::TRAIN)?;
            let pca = fit_pca(&train_split, cfg.model.latent_dim)?;
            Ok(Some(Checkpoint::from_pca(&label, pca, BTreeMap::new())))
        }
        Method::Network { .. } => {
            let spec = method
                .spec(ds.n_features(), &cfg.model.hidden_widths, cfg.model.latent_dim)
                .expect("network method");
            spec.validate().map_err(|e| CliError::config("model", e.to_string()))?;
            let tc = cfg.train_config(&method).expect("network method");
            let data = TrainData::from_dataset(ds, spec.variant, train::data_seed(tc.seed))?;
            match train_restarts_parallel(&spec, &data, &tc) {
                Ok((best, restarts)) => {
                    files.push((format!("history/{label}.csv"), report::history_csv(&best.history)));
                    files.push((format!("history/{label}.restarts.csv"), restarts_csv(&restarts)));
                    let mut seeds = BTreeMap::new();
                    seeds.insert("train".into(), tc.seed);
                    Ok(Some(Checkpoint::from_trained(&label, best, restarts, &tc, seeds)))
                }
                Err(failures) => {
                    // keep the partial histories for diagnosis
                    for (k, f) in failures.iter().enumerate() {
                        files.push((format!("history/{label}.restart{k}.failed.csv"), report::history_csv(&f.history)));
                    }
                    let summary: Vec<String> = failures.iter().map(ToString::to_string).collect();
                    Err(CliError::Divergence(format!("{label}: all restarts failed: {}", summary.join("; "))))
                }
            }
        }
    })();
    let (checkpoint, error) = match result {
        Ok(c) => (c, None),
        Err(e) => (None, Some(e)),
    };
    MethodRun {
        method,
        checkpoint,
        error,
        files,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Fits every configured method on the pool, then writes checkpoints and
/// histories in method order.
fn train_all(cfg: &RunConfig, ds: &Dataset, rec: &mut Recorder) -> Result<Vec<MethodRun>> {
    let methods = cfg.methods()?;
    let start = Instant::now();
    let mut runs: Vec<MethodRun> = methods.par_iter().map(|&m| fit_method(cfg, ds, m)).collect();
    for run in &mut runs {
        let label = run.method.label();
        for (rel, bytes) in run.files.drain(..) {
            rec.write(&rel, &bytes)?;
        }
        if let Some(c) = &run.checkpoint {
            let bytes = c.encode()?;
            rec.write(&checkpoint_rel(&label), &bytes)?;
        }
        match &run.error {
            Some(e) => rec.note(format!("{label}: failed: {e}")),
            None if run.method == Method::Identity => rec.note(format!("{label}: nothing to fit")),
            None => {}
        }
        if let Some(c) = &run.checkpoint {
            if let Some(t) = &c.header.training {
                rec.note(format!("{label}: selected seed {} with validation loss {}", c.header.seeds["run"], t.validation_loss));
            }
        }
        *rec.manifest_timing(&format!("train/{label}")) = run.seconds;
    }
    *rec.manifest_timing("train") = start.elapsed().as_secs_f64();
    Ok(runs)
}

#[derive(Debug)]
pub struct TrainOutput {
    pub runs: Vec<MethodRun>,
    pub manifest: RunManifest,
}

/// Trains (or fits) every configured method. Fails with the first method
/// error after all methods have run and the manifest is written.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    let mut rec = Recorder::new("train", cfg);
    let ds = dataset_for(cfg, &mut rec)?;
    let mut runs = train_all(cfg, &ds, &mut rec)?;
    let manifest = rec.finish()?;
    if let Some(pos) = runs.iter().position(|r| r.error.is_some()) {
        return Err(runs.swap_remove(pos).error.unwrap());
    }
    Ok(TrainOutput { runs, manifest })
}

/// A model ready for evaluation, with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedMethod {
    pub label: String,
    pub model: Fitted,
    pub checkpoint: Option<Checkpoint>,
    pub checkpoint_sha256: Option<String>,
}

fn load_checkpoint(path: &Path, rec: &mut Recorder) -> Result<LoadedMethod> {
    let bytes = fsutil::read(path)?;
    rec.input(&path.display().to_string(), &bytes);
    let c = Checkpoint::decode(&bytes, path)?;
    Ok(LoadedMethod {
        label: c.header.method.clone(),
        model: c.model.clone(),
        checkpoint_sha256: Some(fsutil::sha256_hex(&bytes)),
        checkpoint: Some(c),
    })
}

/// Explicit checkpoints, or else the configured methods from the output
/// directory. Input and latent dimensions must agree.
fn load_methods(cfg: &RunConfig, ds: &Dataset, checkpoints: &[PathBuf], rec: &mut Recorder) -> Result<Vec<LoadedMethod>> {
    let mut out = Vec::new();
    if checkpoints.is_empty() {
        for m in cfg.methods()? {
            if m == Method::Identity {
                out.push(LoadedMethod {
                    label: m.label(),
                    model: Fitted::Identity(Identity { dim: ds.n_features() }),
                    checkpoint: None,
                    checkpoint_sha256: None,
                });
            } else {
                out.push(load_checkpoint(&rec.path(&checkpoint_rel(&m.label())), rec)?);
            }
        }
    } else {
        for p in checkpoints {
            out.push(load_checkpoint(p, rec)?);
        }
    }
    for m in &out {
        if m.model.input_dim() != ds.n_features() {
            return Err(CliError::config(
                "dataset",
                format!("{} expects {} features, dataset has {}", m.label, m.model.input_dim(), ds.n_features()),
            ));
        }
    }
    if let Some(first) = out.first() {
        let k = first.model.latent_dim();
        if let Some(m) = out.iter().find(|m| m.model.latent_dim() != k) {
            return Err(CliError::config(
                "model.methods",
                format!("latent dimension mismatch: {} has {k}, {} has {}", first.label, m.label, m.model.latent_dim()),
            ));
        }
    }
    Ok(out)
}

/// KPI samples for every anchor, computed on the pool in anchor order.
pub fn evaluate_parallel(data: &Matrix, latent: &Matrix, config: &KpiConfig) -> diresa_core::Result<Vec<SampleKpis>> {
    config.validate(data.rows())?;
    config
        .anchors(data.rows())
        .into_par_iter()
        .map(|a| sample_kpis(data, latent, a, config))
        .collect()
}

/// Largest off-diagonal entry of the latent covariance, in magnitude.
pub fn max_abs_latent_cov(latent: &Matrix) -> f64 {
    let c = latent.covariance();
    let k = c.rows();
    (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .fold(0.0, |m, (i, j)| m.max(c[(i, j)].abs()))
}

#[derive(Debug, Clone)]
pub struct MethodEvaluation {
    pub label: String,
    pub report: KpiReport,
    pub samples: Vec<SampleKpis>,
    pub mse: f64,
    pub latent_cov_max_abs: f64,
    /// Last-epoch validation covariance loss and KL, if recorded.
    pub final_val_cov: Option<f64>,
    pub final_val_kl: Option<f64>,
    pub checkpoint_sha256: Option<String>,
}

/// Welch tests for every method pair and KPI.
pub fn pairwise_tests(evals: &[MethodEvaluation]) -> Vec<(String, String, Vec<Option<WelchTest>>)> {
    let mut out = Vec::new();
    for (i, a) in evals.iter().enumerate() {
        for b in &evals[i + 1..] {
            let tests = Kpi::ALL
                .iter()
                .map(|&k| welch_ttest(&kpi_values(&a.samples, k), &kpi_values(&b.samples, k)).ok())
                .collect();
            out.push((a.label.clone(), b.label.clone(), tests));
        }
    }
    out
}

fn evaluate_into(cfg: &RunConfig, ds: &Dataset, methods: &[LoadedMethod], rec: &mut Recorder) -> Result<Vec<MethodEvaluation>> {
    let split = ds.split(&cfg.evaluation.split)?;
    let kc = cfg.kpi_config();
    kc.validate(split.rows()).map_err(|e| CliError::config("evaluation", e.to_string()))?;
    let mut evals = Vec::new();
    for m in methods {
        let e = rec.timed(&format!("evaluate/{}", m.label), |_| {
            let latent = m.model.encode(&split)?;
            let recon = m.model.decode(&latent)?;
            let samples = evaluate_parallel(&split, &latent, &kc)?;
            let last = m
                .checkpoint
                .as_ref()
                .and_then(|c| c.header.training.as_ref())
                .and_then(|t| t.history.records.last());
            Ok(MethodEvaluation {
                label: m.label.clone(),
                report: aggregate(&samples, kc.location_param)?,
                mse: mean_squared_error(&split, &recon)?,
                latent_cov_max_abs: max_abs_latent_cov(&latent),
                final_val_cov: last.and_then(|r| r.validation.cov),
                final_val_kl: last.and_then(|r| r.validation.kl),
                checkpoint_sha256: m.checkpoint_sha256.clone(),
                samples,
            })
        })?;
        rec.write(&format!("evaluation/samples/{}.csv", e.label), &report::samples_csv(&e.samples, kc.location_param))?;
        evals.push(e);
    }
    let reports: Vec<(String, KpiReport)> = evals.iter().map(|e| (e.label.clone(), e.report.clone())).collect();
    rec.write("evaluation/kpi_report.csv", &report::kpi_report_csv(&reports))?;
    rec.write("evaluation/pvalues.csv", &report::pvalues_csv(&pairwise_tests(&evals), kc.location_param))?;
    let rows: Vec<Vec<String>> = evals
        .iter()
        .map(|e| {
            vec![
                e.label.clone(),
                report::num(e.mse),
                report::num(e.latent_cov_max_abs),
                report::opt(e.final_val_cov),
                report::opt(e.final_val_kl),
            ]
        })
        .collect();
    rec.write(
        "evaluation/reconstruction.csv",
        &report::csv_bytes(&["method", "mse", "latent_cov_max_abs", "final_val_cov", "final_val_kl"], &rows),
    )?;
    Ok(evals)
}

#[derive(Debug)]
pub struct EvaluateOutput {
    pub evaluations: Vec<MethodEvaluation>,
    pub manifest: RunManifest,
}

/// Encodes the evaluation split with each method and writes the KPI
/// report, per-anchor samples, reconstruction errors and pairwise p-values.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<EvaluateOutput> {
    let mut rec = Recorder::new("evaluate", cfg);
    let ds = dataset_for(cfg, &mut rec)?;
    let methods = load_methods(cfg, &ds, checkpoints, &mut rec)?;
    let evaluations = evaluate_into(cfg, &ds, &methods, &mut rec)?;
    Ok(EvaluateOutput {
        evaluations,
        manifest: rec.finish()?,
    })
}

#[derive(Debug, Clone)]
pub struct MethodAnalysis {
    pub label: String,
    pub ordering: ComponentOrdering,
    /// Decoded ±σ difference per latent index.
    pub deltas: Vec<Vec<f64>>,
    pub scatter: Vec<(f64, f64)>,
}

fn analyze_into(cfg: &RunConfig, ds: &Dataset, methods: &[LoadedMethod], rec: &mut Recorder) -> Result<Vec<MethodAnalysis>> {
    let split = ds.split(&cfg.analysis.split)?;
    let l = cfg.evaluation.location_param;
    if l >= split.rows() {
        return Err(CliError::config("evaluation.location_param", format!("needs more than {} rows", split.rows())));
    }
    let anchors = KpiConfig {
        samples: AnchorSelection::Subset(cfg.analysis.scatter_anchors.min(split.rows())),
        rng_seed: cfg.scatter_seed(),
        ..cfg.kpi_config()
    }
    .anchors(split.rows());
    let mut out = Vec::new();
    for m in methods {
        let a = rec.timed(&format!("analyze/{}", m.label), |_| {
            let ordering = order_components(&m.model, &split)?;
            let deltas = (0..m.model.latent_dim())
                .into_par_iter()
                .map(|j| component_delta_signed(&m.model, &split, j, 1.0))
                .collect::<diresa_core::Result<Vec<_>>>()?;
            let latent = m.model.encode(&split)?;
            let scatter = scatter_points(&split, &latent, &anchors, l)?;
            Ok(MethodAnalysis {
                label: m.label.clone(),
                ordering,
                deltas,
                scatter,
            })
        })?;
        rec.write(&format!("analysis/{}.components.csv", a.label), &report::components_csv(&a.ordering))?;
        rec.write(&format!("analysis/{}.deltas.csv", a.label), &report::deltas_csv(&a.ordering, &a.deltas))?;
        rec.write(&format!("analysis/{}.scatter.csv", a.label), &report::scatter_csv(&a.scatter))?;
        out.push(a);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct AnalyzeOutput {
    pub analyses: Vec<MethodAnalysis>,
    pub manifest: RunManifest,
}

/// Component ordering, explained variance, decoded component deltas and
/// distance scatter data for each method.
pub fn cmd_analyze(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<AnalyzeOutput> {
    let mut rec = Recorder::new("analyze", cfg);
    let ds = dataset_for(cfg, &mut rec)?;
    let methods = load_methods(cfg, &ds, checkpoints, &mut rec)?;
    let analyses = analyze_into(cfg, &ds, &methods, &mut rec)?;
    Ok(AnalyzeOutput {
        analyses,
        manifest: rec.finish()?,
    })
}

/// One summary row; `evaluation` is `None` for a failed method.
#[derive(Debug)]
pub struct SummaryRow {
    pub label: String,
    pub status: String,
    pub evaluation: Option<MethodEvaluation>,
}

fn summary_csv(rows: &[SummaryRow], l: usize) -> Vec<u8> {
    let mut header: Vec<String> = ["method", "status", "test_mse", "latent_cov_max_abs", "final_val_cov", "final_val_kl"]
        .map(String::from)
        .to_vec();
    for block in ["mean", "median"] {
        header.extend(Kpi::ALL.iter().map(|k| format!("{}_{block}", k.label(l))));
    }
    header.push("checkpoint_sha256".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone(), r.status.clone()];
            match &r.evaluation {
                Some(e) => {
                    row.extend([
                        report::num(e.mse),
                        report::num(e.latent_cov_max_abs),
                        report::opt(e.final_val_cov),
                        report::opt(e.final_val_kl),
                    ]);
                    row.extend(Kpi::ALL.iter().map(|&k| report::num(e.report.get(k).mean)));
                    row.extend(Kpi::ALL.iter().map(|&k| report::num(e.report.get(k).median)));
                    row.push(e.checkpoint_sha256.clone().unwrap_or_default());
                }
                None => row.extend(std::iter::repeat_n(String::new(), header.len() - 2)),
            }
            row
        })
        .collect();
    report::csv_bytes(&header, &body)
}

#[derive(Debug)]
pub struct BenchOutput {
    pub rows: Vec<SummaryRow>,
    pub summary_sha256: String,
    pub analyses: Vec<MethodAnalysis>,
    pub manifest: RunManifest,
}

/// Generate, train, evaluate and analyze every configured method, then
/// write `summary.csv`. A failing method becomes a `failed` summary row;
/// the command fails only if no method succeeds.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchOutput> {
    let mut rec = Recorder::new("bench", cfg);
    let (_, _, ds) = generate_into(cfg, &mut rec)?;
    let runs = train_all(cfg, &ds, &mut rec)?;
    let mut loaded = Vec::new();
    let mut failed: BTreeMap<String, String> = BTreeMap::new();
    for run in &runs {
        let label = run.method.label();
        match (&run.error, &run.checkpoint) {
            (Some(e), _) => {
                failed.insert(label, format!("failed: {e}"));
            }
            (None, Some(c)) => {
                let bytes = c.encode()?;
                loaded.push(LoadedMethod {
                    label,
                    model: c.model.clone(),
                    checkpoint: Some(c.clone()),
                    checkpoint_sha256: Some(fsutil::sha256_hex(&bytes)),
                });
            }
            (None, None) => loaded.push(LoadedMethod {
                label,
                model: Fitted::Identity(Identity { dim: ds.n_features() }),
                checkpoint: None,
                checkpoint_sha256: None,
            }),
        }
    }
    if loaded.is_empty() {
        rec.finish()?;
        return Err(CliError::Divergence(format!("every method failed: {failed:?}")));
    }
    let evals = evaluate_into(cfg, &ds, &loaded, &mut rec)?;
    let analyses = analyze_into(cfg, &ds, &loaded, &mut rec)?;
    let mut by_label: BTreeMap<String, MethodEvaluation> = evals.into_iter().map(|e| (e.label.clone(), e)).collect();
    let rows: Vec<SummaryRow> = runs
        .iter()
        .map(|r| {
            let label = r.method.label();
            SummaryRow {
                status: failed.get(&label).cloned().unwrap_or_else(|| "ok".into()),
                evaluation: by_label.remove(&label),
                label,
            }
        })
        .collect();
    let summary = summary_csv(&rows, cfg.evaluation.location_param);
    rec.write("summary.csv", &summary)?;
    Ok(BenchOutput {
        rows,
        summary_sha256: fsutil::sha256_hex(&summary),
        analyses,
        manifest: rec.finish()?,
    })
}
