use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::rng::standard_normal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMapKind {
    Identity,
    RandomFourier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub output_dim: usize,
    pub kind: FeatureMapKind,
    #[serde(default)]
    pub seed: u64,
}

/// A feature map bound to a key dimension, with its random projection drawn.
///
/// Random Fourier features are `[cos(Ωk); sin(Ωk)] / sqrt(D/2)` where `Ω` is
/// a `D/2 × d_k` standard normal matrix drawn from the configured seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    config: FeatureMapConfig,
    input_dim: usize,
    omega: Option<DMatrix<f64>>,
}

impl FeatureMap {
    pub fn new(config: FeatureMapConfig, input_dim: usize) -> Result<Self> {
        if config.output_dim == 0 {
            return Err(Error::Config("feature map output_dim must be at least 1".into()));
        }
        let omega = match config.kind {
            FeatureMapKind::Identity => {
                if config.output_dim != input_dim {
                    return Err(Error::Config(format!(
                        "identity feature map needs output_dim == key dim ({} != {input_dim})",
                        config.output_dim
                    )));
                }
                None
            }
            FeatureMapKind::RandomFourier => {
                if config.output_dim % 2 != 0 {
                    return Err(Error::Config(
                        "random Fourier feature map needs an even output_dim".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let rows = config.output_dim / 2;
                Some(DMatrix::from_fn(rows, input_dim, |_, _| standard_normal(&mut rng)))
            }
        };
        Ok(Self {
            config,
            input_dim,
            omega,
        })
    }

    pub fn config(&self) -> &FeatureMapConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn apply(&self, k: &DVector<f64>) -> Result<DVector<f64>> {
        if k.len() != self.input_dim {
            return Err(Error::Config(format!(
                "feature map expects keys of length {}, got {}",
                self.input_dim,
                k.len()
            )));
        }
        Ok(match &self.omega {
            None => k.clone(),
            Some(omega) => {
                let proj = omega * k;
                let half = proj.len();
                let scale = 1.0 / (half as f64).sqrt();
                DVector::from_fn(2 * half, |i, _| {
                    if i < half {
                        proj[i].cos() * scale
                    } else {
                        proj[i - half].sin() * scale
                    }
                })
            }
        })
    }
}

/// One-shot form of [`FeatureMap::apply`]; draws the projection from the seed
/// on every call.
pub fn apply_feature_map(cfg: &FeatureMapConfig, k: &DVector<f64>) -> Result<DVector<f64>> {
    FeatureMap::new(cfg.clone(), k.len())?.apply(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rff(seed: u64) -> FeatureMapConfig {
        FeatureMapConfig {
            output_dim: 8,
            kind: FeatureMapKind::RandomFourier,
            seed,
        }
    }

    #[test]
    fn identity_passes_through() {
        let cfg = FeatureMapConfig {
            output_dim: 3,
            kind: FeatureMapKind::Identity,
            seed: 0,
        };
        let k = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(apply_feature_map(&cfg, &k).unwrap(), k);
    }

    #[test]
    fn random_fourier_norm_is_bounded() {
        for i in 0..50 {
            let k = DVector::from_fn(5, |j, _| ((i * 7 + j * 3) as f64).sin() * 40.0);
            let z = apply_feature_map(&rff(3), &k).unwrap();
            assert_eq!(z.len(), 8);
            assert!(z.norm() <= 2f64.sqrt());
        }
    }

    #[test]
    fn random_fourier_is_deterministic() {
        let k = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let a = apply_feature_map(&rff(9), &k).unwrap();
        let b = apply_feature_map(&rff(9), &k).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        let c = apply_feature_map(&rff(10), &k).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let odd = FeatureMapConfig {
            output_dim: 7,
            kind: FeatureMapKind::RandomFourier,
            seed: 0,
        };
        assert!(FeatureMap::new(odd, 3).is_err());
        let zero = FeatureMapConfig {
            output_dim: 0,
            kind: FeatureMapKind::Identity,
            seed: 0,
        };
        assert!(FeatureMap::new(zero, 3).is_err());
        let fm = FeatureMap::new(rff(1), 3).unwrap();
        assert!(fm.apply(&DVector::zeros(4)).is_err());
    }
}
