//! Online protocols: full-information OGD, consensus C-DOGD and delayed
//! tree-routed DDAM-TOGD, with learning rates and regret-bound constants.

mod baseline;
mod rates;
mod state;
mod strategy;
mod togd;

pub use baseline::{cdogd_step, ogd_step, run_cdogd, run_ogd};
pub use rates::{
    bound_constants, lr_cdogd, lr_ogd, lr_togd, theoretical_bound, BoundConstants, BoundInputs, BoundKind, Decay,
    Etas,
};
pub use state::{AgentState, Environment, InFlightMessage, MessageKind, Trajectory};
pub use strategy::{protocol_registry, Cdogd, Ogd, Protocol, Setup, Togd};
pub use togd::{run_togd, MessageEvent, TogdNetwork};
