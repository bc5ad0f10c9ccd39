use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::feature::FeatureMap;
use super::memory::{AgentId, KeyValuePair, MemoryMatrix};
use crate::error::{Error, Result};

/// The linear-memory retrieval costs `ℓ(X, k, v) + R(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    LinearAttention,
    GatedLinearAttention,
    DeltaNet,
    SoftmaxNoNorm,
    SoftmaxWithNorm,
    GatedSoftmax,
}

impl LossVariant {
    pub const ALL: [LossVariant; 6] = [
        LossVariant::LinearAttention,
        LossVariant::GatedLinearAttention,
        LossVariant::DeltaNet,
        LossVariant::SoftmaxNoNorm,
        LossVariant::SoftmaxWithNorm,
        LossVariant::GatedSoftmax,
    ];

    pub fn is_gated(self) -> bool {
        matches!(self, LossVariant::GatedLinearAttention | LossVariant::GatedSoftmax)
    }

    pub fn uses_feature_map(self) -> bool {
        matches!(
            self,
            LossVariant::SoftmaxNoNorm | LossVariant::SoftmaxWithNorm | LossVariant::GatedSoftmax
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::LinearAttention => "linear_attention",
            LossVariant::GatedLinearAttention => "gated_linear_attention",
            LossVariant::DeltaNet => "deltanet",
            LossVariant::SoftmaxNoNorm => "softmax_no_norm",
            LossVariant::SoftmaxWithNorm => "softmax_with_norm",
            LossVariant::GatedSoftmax => "gated_softmax",
        }
    }
}

/// Per-row curvature of the regularizer: `R(X) = ½ Σ_i c_i ‖X_{i,:}‖²`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RowRegularizer {
    None,
    Uniform,
    Gated(Vec<f64>),
}

/// Which loss an agent uses, with the extras its variant needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub variant: LossVariant,
    /// Binary gating vector `ψ` of length `d_v`; gated variants only.
    pub gating: Option<Vec<f64>>,
    /// `φ`; softmax variants only.
    pub feature_map: Option<FeatureMap>,
    /// Gradient-norm bound `G_n`. `None` means "estimate from the stream".
    pub grad_bound: Option<f64>,
}

impl LossSpec {
    pub fn new(variant: LossVariant) -> Self {
        Self {
            variant,
            gating: None,
            feature_map: None,
            grad_bound: None,
        }
    }

    pub fn deltanet() -> Self {
        Self::new(LossVariant::DeltaNet)
    }

    pub fn with_gating(mut self, gating: Vec<f64>) -> Self {
        self.gating = Some(gating);
        self
    }

    pub fn with_feature_map(mut self, fm: FeatureMap) -> Self {
        self.feature_map = Some(fm);
        self
    }

    pub fn with_grad_bound(mut self, g: f64) -> Self {
        self.grad_bound = Some(g);
        self
    }

    /// Checks that the variant has what it needs and that `ψ`/`G_n` are sane.
    pub fn validate(&self) -> Result<()> {
        if self.variant.is_gated() {
            let psi = self.gating.as_ref().ok_or_else(|| {
                Error::Config(format!("{} requires a gating vector", self.variant.name()))
            })?;
            if psi.iter().any(|&p| p != 0.0 && p != 1.0) {
                return Err(Error::Config("gating entries must be 0 or 1".into()));
            }
        }
        if self.variant.uses_feature_map() && self.feature_map.is_none() {
            return Err(Error::Config(format!(
                "{} requires a feature map",
                self.variant.name()
            )));
        }
        if let Some(g) = self.grad_bound {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gradient bound must be positive and finite, got {g}")));
            }
        }
        Ok(())
    }

    /// Key dimension the memory matrix is multiplied against.
    pub fn feature_dim(&self, key_dim: usize) -> usize {
        match (&self.feature_map, self.variant.uses_feature_map()) {
            (Some(fm), true) => fm.output_dim(),
            _ => key_dim,
        }
    }

    /// `φ(k)` for softmax variants, `k` otherwise.
    pub fn features<'a>(&self, k: &'a DVector<f64>) -> Result<Cow<'a, DVector<f64>>> {
        if self.variant.uses_feature_map() {
            let fm = self.feature_map.as_ref().ok_or_else(|| {
                Error::Config(format!("{} requires a feature map", self.variant.name()))
            })?;
            Ok(Cow::Owned(fm.apply(k)?))
        } else {
            Ok(Cow::Borrowed(k))
        }
    }

    pub(crate) fn regularizer(&self) -> RowRegularizer {
        match self.variant {
            LossVariant::LinearAttention | LossVariant::DeltaNet | LossVariant::SoftmaxNoNorm => {
                RowRegularizer::None
            }
            LossVariant::SoftmaxWithNorm => RowRegularizer::Uniform,
            LossVariant::GatedLinearAttention | LossVariant::GatedSoftmax => RowRegularizer::Gated(
                self.gating
                    .as_ref()
                    .map(|psi| psi.iter().map(|p| 1.0 - p).collect())
                    .unwrap_or_default(),
            ),
        }
    }

    fn check(&self, x: &DMatrix<f64>, kv: &KeyValuePair) -> Result<()> {
        self.validate()?;
        let (d_v, d_k) = x.shape();
        if kv.value.len() != d_v {
            return Err(Error::Config(format!(
                "value length {} does not match memory rows {d_v}",
                kv.value.len()
            )));
        }
        let expected = self.feature_dim(kv.key.len());
        if expected != d_k {
            return Err(Error::Config(format!(
                "feature length {expected} does not match memory columns {d_k}"
            )));
        }
        if let Some(psi) = self.gating.as_ref().filter(|_| self.variant.is_gated()) {
            if psi.len() != d_v {
                return Err(Error::Config(format!(
                    "gating vector has length {}, expected {d_v}",
                    psi.len()
                )));
            }
        }
        Ok(())
    }
}

fn regularizer_value(reg: &RowRegularizer, x: &DMatrix<f64>) -> f64 {
    match reg {
        RowRegularizer::None => 0.0,
        RowRegularizer::Uniform => 0.5 * x.norm_squared(),
        RowRegularizer::Gated(c) => {
            0.5 * x
                .row_iter()
                .zip(c)
                .map(|(row, &ci)| ci * row.norm_squared())
                .sum::<f64>()
        }
    }
}

fn add_regularizer_grad(reg: &RowRegularizer, x: &DMatrix<f64>, grad: &mut DMatrix<f64>) {
    match reg {
        RowRegularizer::None => {}
        RowRegularizer::Uniform => *grad += x,
        RowRegularizer::Gated(c) => {
            for (i, &ci) in c.iter().enumerate() {
                if ci != 0.0 {
                    let row = x.row(i) * ci;
                    let mut g = grad.row_mut(i);
                    g += row;
                }
            }
        }
    }
}

/// `f(X) = ℓ(X, k, v) + R(X)` for the configured variant.
pub fn eval_loss(spec: &LossSpec, x: &MemoryMatrix, kv: &KeyValuePair) -> Result<f64> {
    eval_loss_raw(spec, x.matrix(), kv)
}

pub(crate) fn eval_loss_raw(spec: &LossSpec, x: &DMatrix<f64>, kv: &KeyValuePair) -> Result<f64> {
    spec.check(x, kv)?;
    let z = spec.features(&kv.key)?;
    Ok(loss_with_features(spec, x, &z, &kv.value))
}

pub(crate) fn loss_with_features(
    spec: &LossSpec,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    v: &DVector<f64>,
) -> f64 {
    let recalled = x * z;
    let data = match spec.variant {
        LossVariant::DeltaNet => 0.5 * (recalled - v).norm_squared(),
        _ => -recalled.dot(v),
    };
    data + regularizer_value(&spec.regularizer(), x)
}

/// Analytic gradient of [`eval_loss`] with respect to `X`.
pub fn eval_grad(spec: &LossSpec, x: &MemoryMatrix, kv: &KeyValuePair) -> Result<DMatrix<f64>> {
    eval_grad_raw(spec, x.matrix(), kv)
}

pub(crate) fn eval_grad_raw(spec: &LossSpec, x: &DMatrix<f64>, kv: &KeyValuePair) -> Result<DMatrix<f64>> {
    spec.check(x, kv)?;
    let z = spec.features(&kv.key)?;
    Ok(grad_with_features(spec, x, &z, &kv.value))
}

pub(crate) fn grad_with_features(
    spec: &LossSpec,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    v: &DVector<f64>,
) -> DMatrix<f64> {
    let mut grad = match spec.variant {
        LossVariant::DeltaNet => (x * z - v) * z.transpose(),
        _ => -(v * z.transpose()),
    };
    add_regularizer_grad(&spec.regularizer(), x, &mut grad);
    grad
}

/// `Σ_{m ∈ W_n} w_{n,m} f_{m,t}(X)` for a single step. `batch[m]` is agent
/// `m`'s sample at that step.
pub fn weighted_cost(
    n: AgentId,
    x: &MemoryMatrix,
    batch: &[&KeyValuePair],
    weights: &[f64],
    specs: &[LossSpec],
) -> Result<f64> {
    let mut total = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let kv = batch
            .get(m)
            .filter(|kv| kv.agent == m)
            .ok_or_else(|| Error::Data(format!("agent {n} needs a sample from agent {m}")))?;
        let spec = specs
            .get(m)
            .ok_or_else(|| Error::Config(format!("no loss spec for agent {m}")))?;
        total += w * eval_loss(spec, x, kv)?;
    }
    Ok(total)
}

/// Upper bound on `‖∇f(X)‖_F` over the ball of the given radius, maximized
/// over the supplied samples.
pub fn ball_grad_bound<'a>(
    spec: &LossSpec,
    samples: impl IntoIterator<Item = &'a KeyValuePair>,
    radius: f64,
) -> Result<f64> {
    let reg = match spec.regularizer() {
        RowRegularizer::None => 0.0,
        _ => radius,
    };
    let mut best: f64 = 0.0;
    for kv in samples {
        let z = spec.features(&kv.key)?;
        let zn = z.norm();
        let bound = match spec.variant {
            LossVariant::DeltaNet => zn * (radius * zn + kv.value.norm()),
            _ => kv.value.norm() * zn + reg,
        };
        best = best.max(bound);
    }
    // G_n must be strictly positive
    Ok(best.max(1e-12))
}
