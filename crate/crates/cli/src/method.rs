//! Named dimensionality-reduction methods and their fitted forms.

use std::fmt;

use diresa_core::model::{DistanceLoss, ModelParams, ModelSpec, Variant};
use diresa_core::pca::PcaModel;
use diresa_core::reducer::{Identity, Reducer};
use diresa_core::{Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    /// Latent = input; a sanity baseline for the metrics.
    Identity,
    Network {
        variant: Variant,
        distance_loss: Option<DistanceLoss>,
    },
}

impl Method {
    /// Accepts `PCA`, `identity`, `AE`, `BNAE`, `CRAE`, `VAE`, `DIRESA`
    /// (MSE distance loss) and `DIRESA_<loss>`, case-insensitively.
    pub fn parse(name: &str) -> std::result::Result<Method, String> {
        let upper = name.to_ascii_uppercase();
        match upper.as_str() {
            "PCA" => return Ok(Method::Pca),
            "IDENTITY" => return Ok(Method::Identity),
            "DIRESA" => {
                return Ok(Method::Network {
                    variant: Variant::Diresa,
                    distance_loss: Some(DistanceLoss::Mse),
                })
            }
            _ => {}
        }
        if let Some(loss) = upper.strip_prefix("DIRESA_") {
            let loss: DistanceLoss = loss.parse().map_err(|e: diresa_core::Error| e.to_string())?;
            return Ok(Method::Network {
                variant: Variant::Diresa,
                distance_loss: Some(loss),
            });
        }
        match name.parse::<Variant>() {
            Ok(v) if v != Variant::Diresa => Ok(Method::Network {
                variant: v,
                distance_loss: None,
            }),
            _ => Err(format!("unknown method '{name}'")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Method::Pca => "PCA".into(),
            Method::Identity => "identity".into(),
            Method::Network { variant, distance_loss } => ModelSpec {
                variant: *variant,
                input_dim: 0,
                hidden_widths: Vec::new(),
                latent_dim: 0,
                distance_loss: *distance_loss,
            }
            .label(),
        }
    }

    pub fn spec(&self, input_dim: usize, hidden_widths: &[usize], latent_dim: usize) -> Option<ModelSpec> {
        match self {
            Method::Network { variant, distance_loss } => Some(ModelSpec {
                variant: *variant,
                input_dim,
                hidden_widths: hidden_widths.to_vec(),
                latent_dim,
                distance_loss: *distance_loss,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A fitted reducer of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Pca(PcaModel),
    Network(ModelParams),
    Identity(Identity),
}

impl Reducer for Fitted {
    fn input_dim(&self) -> usize {
        match self {
            Fitted::Pca(m) => m.input_dim(),
            Fitted::Network(m) => Reducer::input_dim(m),
            Fitted::Identity(m) => m.input_dim(),
        }
    }

    fn latent_dim(&self) -> usize {
        match self {
            Fitted::Pca(m) => m.latent_dim(),
            Fitted::Network(m) => Reducer::latent_dim(m),
            Fitted::Identity(m) => m.latent_dim(),
        }
    }

    fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        match self {
            Fitted::Pca(m) => m.encode(batch),
            Fitted::Network(m) => Reducer::encode(m, batch),
            Fitted::Identity(m) => m.encode(batch),
        }
    }

    fn decode(&self, latent: &Matrix) -> Result<Matrix> {
        match self {
            Fitted::Pca(m) => m.decode(latent),
            Fitted::Network(m) => Reducer::decode(m, latent),
            Fitted::Identity(m) => m.decode(latent),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in ["PCA", "identity", "AE", "BNAE", "CRAE", "VAE", "DIRESA_MSE", "DIRESA_MSLE", "DIRESA_Corr", "DIRESA_LogCorr"] {
            let m = Method::parse(name).unwrap();
            assert_eq!(m.label(), name);
            assert_eq!(Method::parse(&name.to_lowercase()).unwrap(), m);
        }
        assert_eq!(Method::parse("diresa").unwrap().label(), "DIRESA_MSE");
        assert!(Method::parse("DIRESA_L1").is_err());
        assert!(Method::parse("tsne").is_err());
    }
}
