//! Linear associative-memory kernels: losses, gradients, feature maps and the
//! projection onto the bounded design domain.

mod feature;
mod loss;
mod memory;

pub use feature::{apply_feature_map, FeatureMap, FeatureMapConfig, FeatureMapKind};
pub use loss::{
    ball_grad_bound, eval_grad, eval_loss, weighted_cost, LossSpec, LossVariant,
};
pub use memory::{project, AgentId, KeyValuePair, MemoryMatrix, TimeStep};

pub(crate) use loss::{eval_grad_raw, loss_with_features, RowRegularizer};
#[cfg(test)]
pub(crate) use loss::eval_loss_raw;
pub(crate) use memory::project_in_place;
