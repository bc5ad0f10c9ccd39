//! Experiment configuration, sweep execution and output files.

mod config;
mod emit;
mod gen;
mod run;
mod trees;

pub use config::{
    apply_override, load_config, parse_config, ExperimentConfig, Figure, GraphSource, LearningRate, LossConfig,
    PeriodicSection, Scenario, Sweep, SyntheticSection, TrafficSection, WeightsSource,
};
pub use emit::{emit_plotdata, selected_figures, write_outputs};
pub use gen::{gen_data, streams_to_csv, DataRequest};
pub use run::{run_experiment, ExperimentReport};
pub use trees::{compare_designs, tree_report, TreeReport, TreeRow};
