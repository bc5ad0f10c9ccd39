use std::fmt;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::topology::{
    delay_summaries, design_trees, designer_registry, link_capacity, LogicalWeights, PhysicalGraph, TreeDesigner,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRow {
    pub agent: usize,
    pub design: String,
    /// `a-b` pairs separated by `;`.
    pub edges: String,
    pub tau_sum: u64,
    pub tau_max: u64,
    pub delta_tau: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeReport {
    pub rows: Vec<TreeRow>,
    /// `(design, C_max)`
    pub link_capacity: Vec<(String, u64)>,
}

/// Trees of every registered designer for every agent.
pub fn compare_designs(g: &PhysicalGraph, w: &LogicalWeights) -> Result<TreeReport> {
    let registry = designer_registry();
    let designers: Vec<&dyn TreeDesigner> = registry
        .names()
        .into_iter()
        .map(|n| registry.get(n))
        .collect::<Result<_>>()?;
    let mut per_design = Vec::new();
    let mut caps = Vec::new();
    for d in &designers {
        let trees = design_trees(g, w, *d)?;
        let summaries = delay_summaries(&trees, w)?;
        caps.push((d.name().to_string(), link_capacity(g, &trees, w)?));
        per_design.push((d.name(), trees, summaries));
    }
    let mut rows = Vec::new();
    for n in 0..w.n_agents() {
        for (name, trees, summaries) in &per_design {
            let edges = trees
                .get(&n)
                .map(|t| {
                    t.edges()
                        .iter()
                        .map(|&e| {
                            let e = g.edge(e);
                            format!("{}-{}", e.a, e.b)
                        })
                        .collect::<Vec<_>>()
                        .join(";")
                })
                .unwrap_or_default();
            let s = summaries[n];
            rows.push(TreeRow {
                agent: n,
                design: name.to_string(),
                edges,
                tau_sum: s.tau_sum,
                tau_max: s.tau_max,
                delta_tau: s.delta_tau,
            });
        }
    }
    Ok(TreeReport {
        rows,
        link_capacity: caps,
    })
}

/// Tree comparison for the configured graph, with the weights of the first
/// seed and `y0`.
pub fn tree_report(cfg: &ExperimentConfig) -> Result<TreeReport> {
    let g = cfg.graph.build(&cfg.base_dir)?;
    let w = cfg.build_weights(g.n_nodes(), cfg.seeds[0], cfg.sweep.y0[0])?;
    compare_designs(&g, &w)
}

impl TreeReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Emission(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Emission(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Emission(e.to_string()))
    }
}

impl fmt::Display for TreeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5}  {:<9} {:>7} {:>7} {:>9}  edges", "agent", "design", "tau_sum", "tau_max", "delta_tau")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>5}  {:<9} {:>7} {:>7} {:>9}  {}",
                r.agent, r.design, r.tau_sum, r.tau_max, r.delta_tau, r.edges
            )?;
        }
        for (d, c) in &self.link_capacity {
            writeln!(f, "C_max[{d}] = {c}")?;
        }
        Ok(())
    }
}
