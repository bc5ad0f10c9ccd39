//! Hindsight comparators, regret, prediction error, bound trajectories and
//! report files.

mod bounds;
mod comparator;
mod regret;
mod report;

pub use bounds::{bound_trajectory, grad_bounds, scaled_path_length, BoundPoint};
pub use comparator::{hindsight_optimum, hindsight_optimum_pgd, ComparatorMode, ComparatorSequence, Window};
pub use regret::{dynamic_regret, nmse, path_length, regret, static_regret, Nmse, NmseMode, RegretBreakdown};
pub use report::{config_hash, read_report, report_to_csv, write_report, RegretRow, RunMetadata, RunRecord};
