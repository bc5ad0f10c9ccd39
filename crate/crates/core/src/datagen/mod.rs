//! Synthetic streams, logical-weight sampling and traffic ingestion.

mod periodic;
pub mod rng;
mod synthetic;
mod traffic;

pub use periodic::{ap_name, gen_periodic_traffic, gen_periodic_traffic_with, periodic_start, PeriodicTrafficConfig};
pub use synthetic::{
    gen_drifting_stream, gen_ground_truth, gen_stream, gen_weights, GroundTruth, Streams, SyntheticConfig,
};
pub use traffic::{
    ap_embedding, build_kv, hour_embedding, load_traffic, sinusoidal_embedding, traffic_to_csv, EmbedConfig,
    TrafficRecord, TrafficStreams, TIMESTAMP_FORMAT,
};
