//! Declarative run configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use diresa_core::lorenz::LorenzParams;
use diresa_core::metrics::{AnchorSelection, KpiConfig};
use diresa_core::seed;
use diresa_core::train::{AnnealSource, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsutil;
use crate::method::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainOverrides,
    /// Per-method training overrides keyed by method name.
    #[serde(default)]
    pub training_overrides: BTreeMap<String, TrainOverrides>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either a Lorenz generator (the default) or an input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// A `.drsa` dataset or a `.csv` file. Relative paths resolve against
    /// the config file's directory.
    pub path: Option<PathBuf>,
    pub lorenz: Option<LorenzSection>,
    /// Train/validation/test fractions for files without splits.
    pub split: Option<[f64; 3]>,
    /// Scale features to [0,1] when the file carries no scaling metadata.
    pub scale: Option<bool>,
}

/// Lorenz generator parameters; omitted fields take the benchmark values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzSection {
    pub sigma: Option<f64>,
    pub r: Option<f64>,
    pub b: Option<f64>,
    pub dt: Option<f64>,
    pub initial: Option<[f64; 3]>,
    pub transient_steps: Option<usize>,
    pub total_steps: Option<usize>,
}

impl LorenzSection {
    pub fn params(&self) -> LorenzParams {
        let d = LorenzParams::benchmark();
        LorenzParams {
            sigma: self.sigma.unwrap_or(d.sigma),
            r: self.r.unwrap_or(d.r),
            b: self.b.unwrap_or(d.b),
            dt: self.dt.unwrap_or(d.dt),
            initial: self.initial.unwrap_or(d.initial),
            transient_steps: self.transient_steps.unwrap_or(d.transient_steps),
            total_steps: self.total_steps.unwrap_or(d.total_steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
}

fn default_methods() -> Vec<String> {
    vec!["PCA".into(), "DIRESA_MSE".into()]
}

fn default_hidden() -> Vec<usize> {
    vec![40, 20]
}

fn default_latent() -> usize {
    2
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            methods: default_methods(),
            hidden_widths: default_hidden(),
            latent_dim: default_latent(),
        }
    }
}

/// Optional overrides of the per-variant training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub restarts: Option<usize>,
    pub lr_halving_period: Option<usize>,
    pub fallback_lr_start_epoch: Option<usize>,
    pub anneal_step: Option<f64>,
    pub anneal_target: Option<f64>,
    pub anneal_source: Option<AnnealSource>,
    pub drop_last: Option<bool>,
}

impl TrainOverrides {
    fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(epochs, batch_size, base_lr, restarts, lr_halving_period, fallback_lr_start_epoch, anneal_step, anneal_target, anneal_source, drop_last);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_test")]
    pub split: String,
    #[serde(default = "default_location")]
    pub location_param: usize,
    /// Number of random anchors; all rows when omitted.
    pub anchors: Option<usize>,
    #[serde(default = "default_log_offset")]
    pub log_offset: f64,
}

fn default_test() -> String {
    "test".into()
}

fn default_location() -> usize {
    50
}

fn default_log_offset() -> f64 {
    1.0
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            split: default_test(),
            location_param: default_location(),
            anchors: None,
            log_offset: default_log_offset(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_test")]
    pub split: String,
    /// Anchors in the scatter export; each contributes `location_param` rows.
    #[serde(default = "default_scatter")]
    pub scatter_anchors: usize,
}

fn default_scatter() -> usize {
    200
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            split: default_test(),
            scatter_anchors: default_scatter(),
        }
    }
}

/// Parses TOML, reporting the key path of any error.
pub fn parse(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(path, e.into_inner().message().to_string())
    })
}

/// Reads and validates a config file; a relative dataset path is resolved
/// against the file's directory.
pub fn load(path: &Path) -> Result<RunConfig> {
    let bytes = fsutil::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::config(".", format!("config is not UTF-8: {e}")))?;
    let mut cfg = parse(&text)?;
    if let Some(p) = &cfg.dataset.path {
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.dataset.path = Some(base.join(p));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Methods in configured order.
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for (i, name) in self.model.methods.iter().enumerate() {
            let m = Method::parse(name).map_err(|e| CliError::config(format!("model.methods[{i}]"), e))?;
            if out.contains(&m) {
                return Err(CliError::config(format!("model.methods[{i}]"), format!("duplicate method {m}")));
            }
            out.push(m);
        }
        if out.is_empty() {
            return Err(CliError::config("model.methods", "at least one method is required"));
        }
        Ok(out)
    }

    /// Training configuration of `method`: variant defaults, then the
    /// `[training]` overrides, then the method's own overrides. The seed is
    /// derived from the global seed and the method label.
    pub fn train_config(&self, method: &Method) -> Option<TrainConfig> {
        let Method::Network { variant, .. } = method else {
            return None;
        };
        let mut c = TrainConfig::for_variant(*variant);
        self.training.apply(&mut c);
        let label = method.label();
        if let Some((_, o)) = self.training_overrides.iter().find(|(k, _)| Method::parse(k).ok() == Some(*method)) {
            o.apply(&mut c);
        }
        c.seed = self.train_seed(&label);
        Some(c)
    }

    pub fn train_seed(&self, label: &str) -> u64 {
        seed::derive_seed(self.seed, &format!("train/{label}"))
    }

    pub fn kpi_config(&self) -> KpiConfig {
        KpiConfig {
            location_param: self.evaluation.location_param,
            samples: match self.evaluation.anchors {
                Some(k) => AnchorSelection::Subset(k),
                None => AnchorSelection::All,
            },
            rng_seed: seed::derive_seed(self.seed, "kpi-anchors"),
            log_offset: self.evaluation.log_offset,
        }
    }

    pub fn scatter_seed(&self) -> u64 {
        seed::derive_seed(self.seed, "scatter-anchors")
    }

    /// Every named seed, for the manifest.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        s.insert("global".into(), self.seed);
        s.insert("kpi-anchors".into(), self.kpi_config().rng_seed);
        s.insert("scatter-anchors".into(), self.scatter_seed());
        if let Ok(methods) = self.methods() {
            for m in methods {
                if let Some(c) = self.train_config(&m) {
                    s.insert(format!("train/{}", m.label()), c.seed);
                }
            }
        }
        s
    }

    pub fn lorenz_params(&self) -> LorenzParams {
        self.dataset.lorenz.clone().unwrap_or_default().params()
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        fsutil::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        let methods = self.methods()?;
        let d = &self.dataset;
        match (&d.path, &d.lorenz) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("dataset", "set either `path` or `[dataset.lorenz]`, not both"));
            }
            (Some(p), None) => {
                if !p.is_file() {
                    return Err(CliError::config("dataset.path", format!("{} does not exist", p.display())));
                }
            }
            (None, _) => self
                .lorenz_params()
                .validate()
                .map_err(|e| CliError::config("dataset.lorenz", e.to_string()))?,
        }
        if let Some(f) = d.split {
            if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(CliError::config("dataset.split", "fractions must be non-negative and sum to 1"));
            }
        }
        if self.model.hidden_widths.is_empty() || self.model.hidden_widths.contains(&0) {
            return Err(CliError::config("model.hidden_widths", "must be nonempty and positive"));
        }
        if self.model.latent_dim == 0 {
            return Err(CliError::config("model.latent_dim", "must be positive"));
        }
        for key in self.training_overrides.keys() {
            Method::parse(key).map_err(|e| CliError::config(format!("training_overrides.{key}"), e))?;
        }
        for m in &methods {
            if let Some(c) = self.train_config(m) {
                let has_override = self.training_overrides.keys().any(|k| Method::parse(k).ok() == Some(*m));
                let path = if has_override { format!("training_overrides.{m}") } else { "training".into() };
                c.validate().map_err(|e| CliError::config(path, e.to_string()))?;
            }
        }
        let e = &self.evaluation;
        if e.location_param < 2 {
            return Err(CliError::config("evaluation.location_param", "must be at least 2"));
        }
        if e.anchors == Some(0) {
            return Err(CliError::config("evaluation.anchors", "must be positive"));
        }
        if !(e.log_offset > 0.0) {
            return Err(CliError::config("evaluation.log_offset", "must be positive"));
        }
        for (key, split) in [("evaluation.split", &e.split), ("analysis.split", &self.analysis.split)] {
            if !["train", "validation", "test"].contains(&split.as_str()) {
                return Err(CliError::config(key, format!("unknown split '{split}'")));
            }
        }
        if self.analysis.scatter_anchors == 0 {
            return Err(CliError::config("analysis.scatter_anchors", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_path_of(text: &str) -> String {
        match parse(text) {
            Err(CliError::Config { path, .. }) => path,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_config_takes_defaults() {
        let c = parse("").unwrap();
        c.validate().unwrap();
        assert_eq!(c.lorenz_params(), LorenzParams::benchmark());
        assert_eq!(c.kpi_config().location_param, 50);
        assert_eq!(c.methods().unwrap(), vec![Method::Pca, Method::parse("DIRESA_MSE").unwrap()]);
    }

    #[test]
    fn unknown_keys_report_their_path() {
        assert_eq!(config_path_of("sede = 1"), "sede");
        assert_eq!(config_path_of("[training]\nepochz = 3"), "training.epochz");
        assert_eq!(config_path_of("[dataset.lorenz]\nsigmaa = 3.0"), "dataset.lorenz.sigmaa");
        assert_eq!(config_path_of("[training_overrides.VAE]\nrestart = 3"), "training_overrides.VAE.restart");
        assert_eq!(config_path_of("[training]\nepochs = \"many\""), "training.epochs");
    }

    #[test]
    fn overrides_layer_in_order() {
        let c = parse(
            "seed = 4\n[training]\nepochs = 7\nrestarts = 2\n[training_overrides.vae]\nrestarts = 1\nbatch_size = 64\n",
        )
        .unwrap();
        let vae = c.train_config(&Method::parse("VAE").unwrap()).unwrap();
        assert_eq!((vae.epochs, vae.restarts, vae.batch_size), (7, 1, 64));
        let ae = c.train_config(&Method::parse("AE").unwrap()).unwrap();
        assert_eq!((ae.epochs, ae.restarts, ae.batch_size), (7, 2, 128));
        let diresa = c.train_config(&Method::parse("DIRESA_MSE").unwrap()).unwrap();
        assert_eq!(diresa.batch_size, 512);
        assert_ne!(ae.seed, vae.seed);
        assert!(c.train_config(&Method::Pca).is_none());
    }

    #[test]
    fn semantic_validation_paths() {
        let bad = |text: &str| match parse(text).unwrap().validate() {
            Err(CliError::Config { path, .. }) => path,
            other => panic!("{text}: {other:?}"),
        };
        assert_eq!(bad("[model]\nmethods = [\"PCA\", \"tsne\"]"), "model.methods[1]");
        assert_eq!(bad("[model]\nmethods = []"), "model.methods");
        assert_eq!(bad("[dataset]\npath = \"/nonexistent/x.drsa\""), "dataset.path");
        assert_eq!(bad("[dataset.lorenz]\ndt = -1.0"), "dataset.lorenz");
        assert_eq!(bad("[training]\nepochs = 0"), "training");
        assert_eq!(bad("[model]\nmethods = [\"AE\"]\n[training_overrides.AE]\nbatch_size = 0"), "training_overrides.AE");
        assert_eq!(bad("[evaluation]\nlocation_param = 1"), "evaluation.location_param");
        assert_eq!(bad("[analysis]\nsplit = \"dev\""), "analysis.split");
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse("seed = 1").unwrap();
        assert_eq!(a.hash(), parse("seed = 1\n").unwrap().hash());
        assert_ne!(a.hash(), parse("seed = 2").unwrap().hash());
    }
}
