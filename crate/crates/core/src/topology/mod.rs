//! Communication graph, logical weights, routing trees and link accounting.

mod designer;
mod graph;
mod steiner;
mod sumdelay;
mod tree;
mod weights;

pub use designer::{design_trees, designer_registry, SteinerDesigner, SumDelayDesigner, TreeDesigner};
pub use graph::{all_pairs_hops, Edge, EdgeId, PhysicalGraph, ShortestPaths};
pub use steiner::steiner_tree;
pub use sumdelay::{
    sumdelay_search, sumdelay_tree, SumDelayOptions, SumDelayOutcome, EXACT_MAX_EDGES, EXACT_MAX_NODES,
};
pub use tree::{
    delay_summaries, delay_summary, edge_loads, link_capacity, DelaySummary, RoutingTree,
    CDOGD_LINK_CAPACITY,
};
pub use weights::{
    check_doubly_stochastic, metropolis_mixing, mixing_alpha, validate_weights, weights_from_rows,
    LogicalWeights, ROW_SUM_TOL,
};
