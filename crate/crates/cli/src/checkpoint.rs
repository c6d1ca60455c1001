//! Checkpoint container: a u64 LE length, that many bytes of UTF-8 JSON
//! header, then the parameter blob as f64 LE values.
//!
//! Network blobs hold the flat parameters in layer order followed by the
//! batch-normalization running statistics. PCA blobs (kind `"PCA"`) hold the
//! mean, the component rows and the full eigenvalue spectrum.

use std::collections::BTreeMap;
use std::path::Path;

use diresa_core::loss::LossWeights;
use diresa_core::model::{build_model, ModelSpec};
use diresa_core::pca::PcaModel;
use diresa_core::train::{AnnealState, RestartSummary, TrainConfig, TrainHistory, TrainedModel};
use diresa_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsutil;
use crate::method::Fitted;

pub const FORMAT: &str = "diresa-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ModelKind {
    #[serde(rename = "PCA")]
    Pca { input_dim: usize, latent_dim: usize },
    #[serde(rename = "network")]
    Network { spec: ModelSpec },
}

/// How a network checkpoint was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    pub history: TrainHistory,
    pub restarts: Vec<RestartSummary>,
    pub final_weights: LossWeights,
    pub anneal: AnnealState,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub model: ModelKind,
    pub blob_len: usize,
    /// Named seeds that produced this checkpoint.
    pub seeds: BTreeMap<String, u64>,
    pub training: Option<TrainingRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Fitted,
}

impl Checkpoint {
    pub fn from_pca(method: &str, pca: PcaModel, seeds: BTreeMap<String, u64>) -> Self {
        let d = pca.mean.len();
        Checkpoint {
            header: CheckpointHeader {
                format: FORMAT.into(),
                version: VERSION,
                method: method.into(),
                model: ModelKind::Pca {
                    input_dim: d,
                    latent_dim: pca.components.rows(),
                },
                blob_len: d + pca.components.as_slice().len() + d,
                seeds,
                training: None,
            },
            model: Fitted::Pca(pca),
        }
    }

    pub fn from_trained(
        method: &str,
        trained: TrainedModel,
        restarts: Vec<RestartSummary>,
        config: &TrainConfig,
        mut seeds: BTreeMap<String, u64>,
    ) -> Self {
        seeds.insert("run".into(), trained.seed);
        seeds.insert("data".into(), trained.data_seed);
        let p = &trained.params;
        Checkpoint {
            header: CheckpointHeader {
                format: FORMAT.into(),
                version: VERSION,
                method: method.into(),
                model: ModelKind::Network { spec: p.spec().clone() },
                blob_len: p.param_count() + p.state_len(),
                seeds,
                training: Some(TrainingRecord {
                    config: config.clone(),
                    history: trained.history,
                    restarts,
                    final_weights: trained.final_weights,
                    anneal: trained.anneal,
                    validation_loss: trained.validation_loss,
                }),
            },
            model: Fitted::Network(trained.params),
        }
    }

    fn blob(&self) -> Vec<f64> {
        match &self.model {
            Fitted::Pca(p) => {
                let mut v = p.mean.clone();
                v.extend_from_slice(p.components.as_slice());
                v.extend_from_slice(&p.all_eigenvalues);
                v
            }
            Fitted::Network(m) => {
                let mut v = m.params_flat();
                m.write_state(&mut v);
                v
            }
            Fitted::Identity(_) => Vec::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)
            .map_err(|e| CliError::config("checkpoint", format!("header does not serialize: {e}")))?;
        let blob = self.blob();
        let mut out = Vec::with_capacity(8 + header.len() + 8 * blob.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        let err = |offset: usize, msg: String| CliError::format(path, offset as u64, msg);
        if bytes.len() < 8 {
            return Err(err(bytes.len(), "truncated header length".into()));
        }
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| l.checked_add(8))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| err(bytes.len(), format!("truncated header: declared {len} bytes")))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..end])
            .map_err(|e| err(8 + e.column().saturating_sub(1), format!("invalid header JSON: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(err(8, format!("unsupported checkpoint {} v{}", header.format, header.version)));
        }
        let blob_bytes = &bytes[end..];
        if blob_bytes.len() != 8 * header.blob_len {
            return Err(err(
                bytes.len(),
                format!("parameter blob has {} bytes, header declares {} values", blob_bytes.len(), header.blob_len),
            ));
        }
        let blob: Vec<f64> = blob_bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let model = match &header.model {
            ModelKind::Pca { input_dim: d, latent_dim: k } => {
                let (d, k) = (*d, *k);
                if blob.len() != d + k * d + d || k == 0 || k > d {
                    return Err(err(end, format!("PCA blob does not match {k}×{d}")));
                }
                let all_eigenvalues = blob[d + k * d..].to_vec();
                Fitted::Pca(PcaModel {
                    mean: blob[..d].to_vec(),
                    components: Matrix::from_vec(k, d, blob[d..d + k * d].to_vec())?,
                    eigenvalues: all_eigenvalues[..k].to_vec(),
                    all_eigenvalues,
                })
            }
            ModelKind::Network { spec } => {
                let mut m = build_model(spec, 0).map_err(|e| err(8, format!("invalid model spec: {e}")))?;
                let n = m.param_count();
                if blob.len() != n + m.state_len() {
                    return Err(err(end, format!("blob has {} values, model needs {}", blob.len(), n + m.state_len())));
                }
                m.read_params(&blob[..n])?;
                m.read_state(&blob[n..])?;
                Fitted::Network(m)
            }
        };
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<Vec<u8>> {
        let bytes = self.encode()?;
        fsutil::atomic_write(path, &bytes)?;
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::decode(&fsutil::read(path)?, path)
    }
}
