use std::collections::BTreeMap;

use super::graph::PhysicalGraph;
use super::steiner::steiner_tree;
use super::sumdelay::{sumdelay_search, SumDelayOptions};
use super::tree::RoutingTree;
use super::weights::LogicalWeights;
use crate::am::AgentId;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

/// A routing-tree construction strategy.
pub trait TreeDesigner: Named + Send + Sync {
    fn design(&self, g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<RoutingTree>;
}

pub struct SteinerDesigner;

impl Named for SteinerDesigner {
    fn name(&self) -> &'static str {
        "steiner"
    }
}

impl TreeDesigner for SteinerDesigner {
    fn design(&self, g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<RoutingTree> {
        steiner_tree(g, root, terminals)
    }
}

#[derive(Default)]
pub struct SumDelayDesigner {
    pub options: SumDelayOptions,
}

impl Named for SumDelayDesigner {
    fn name(&self) -> &'static str {
        "sumdelay"
    }
}

impl TreeDesigner for SumDelayDesigner {
    fn design(&self, g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<RoutingTree> {
        sumdelay_search(g, root, terminals, self.options).map(|o| o.tree)
    }
}

pub fn designer_registry() -> Registry<dyn TreeDesigner> {
    let mut r: Registry<dyn TreeDesigner> = Registry::new("tree designer");
    r.register(Box::new(SteinerDesigner))
        .register(Box::new(SumDelayDesigner::default()));
    r
}

/// One tree per agent with remote interest, spanning `W_n \ {n}`.
pub fn design_trees(
    g: &PhysicalGraph,
    w: &LogicalWeights,
    designer: &dyn TreeDesigner,
) -> Result<BTreeMap<AgentId, RoutingTree>> {
    if w.n_agents() != g.n_nodes() {
        return Err(Error::Validation(format!(
            "weights cover {} agents but the graph has {} nodes",
            w.n_agents(),
            g.n_nodes()
        )));
    }
    let mut out = BTreeMap::new();
    for n in 0..w.n_agents() {
        let remote = w.remote_support(n);
        if remote.is_empty() {
            continue;
        }
        let t = designer.design(g, n, &remote).map_err(|e| match e {
            Error::Topology(msg) => Error::Topology(format!("agent {n}: {msg}")),
            other => other,
        })?;
        out.insert(n, t);
    }
    Ok(out)
}
