//! Decentralized associative memory: online learning of linear associative
//! memories over a communication graph, with delayed tree-routed feedback.

pub mod am;
pub mod analytics;
pub mod datagen;
mod error;
pub mod harness;
pub mod protocols;
pub mod registry;
pub mod topology;

pub use error::{Error, Result};
