use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::graph::{EdgeId, PhysicalGraph};
use super::weights::LogicalWeights;
use crate::am::AgentId;
use crate::error::{Error, Result};

/// Routing tree rooted at one agent. Paths and hop counts are derived from
/// the edge set at construction and never stored inconsistently.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingTree {
    root: AgentId,
    edges: Vec<EdgeId>,
    nodes: BTreeSet<AgentId>,
    path_to: BTreeMap<AgentId, Vec<EdgeId>>,
    hop_count: BTreeMap<AgentId, u64>,
}

impl RoutingTree {
    /// Builds a tree from an edge subset. The edges must be acyclic, connected
    /// and touch the root and every target.
    pub fn from_edges(
        g: &PhysicalGraph,
        root: AgentId,
        edges: impl IntoIterator<Item = EdgeId>,
        targets: &[AgentId],
    ) -> Result<Self> {
        if root >= g.n_nodes() {
            return Err(Error::Topology(format!("root {root} is not a node")));
        }
        let edges: BTreeSet<EdgeId> = edges.into_iter().collect();
        let mut adj: BTreeMap<AgentId, Vec<(AgentId, EdgeId)>> = BTreeMap::new();
        adj.entry(root).or_default();
        for &id in &edges {
            let e = g.edge(id);
            adj.entry(e.a).or_default().push((e.b, id));
            adj.entry(e.b).or_default().push((e.a, id));
        }
        let nodes: BTreeSet<AgentId> = adj.keys().copied().collect();
        if edges.len() + 1 != nodes.len() {
            return Err(Error::Topology(format!(
                "{} edges over {} nodes is not a tree",
                edges.len(),
                nodes.len()
            )));
        }
        let mut path_to = BTreeMap::new();
        let mut hop_count = BTreeMap::new();
        path_to.insert(root, Vec::new());
        hop_count.insert(root, 0);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            let base = path_to[&u].clone();
            let d = hop_count[&u];
            for &(v, id) in &adj[&u] {
                if path_to.contains_key(&v) {
                    continue;
                }
                let mut p = base.clone();
                p.push(id);
                path_to.insert(v, p);
                hop_count.insert(v, d + u64::from(g.edge(id).delay));
                stack.push(v);
            }
        }
        if path_to.len() != nodes.len() {
            return Err(Error::Topology("tree edges are not connected".into()));
        }
        for &t in targets {
            if !nodes.contains(&t) {
                return Err(Error::Topology(format!("tree rooted at {root} misses target {t}")));
            }
        }
        Ok(Self {
            root,
            edges: edges.into_iter().collect(),
            nodes,
            path_to,
            hop_count,
        })
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn nodes(&self) -> &BTreeSet<AgentId> {
        &self.nodes
    }

    pub fn path_to(&self, m: AgentId) -> Option<&[EdgeId]> {
        self.path_to.get(&m).map(Vec::as_slice)
    }

    /// One-way delay `τ̃` from the root.
    pub fn hop_count(&self, m: AgentId) -> Option<u64> {
        self.hop_count.get(&m).copied()
    }

    /// Round-trip delay `τ = 2τ̃`.
    pub fn round_trip(&self, m: AgentId) -> Option<u64> {
        self.hop_count(m).map(|h| 2 * h)
    }

    pub fn total_delay(&self, g: &PhysicalGraph) -> u64 {
        self.edges.iter().map(|&id| u64::from(g.edge(id).delay)).sum()
    }

    /// Sum of root-to-target path delays.
    pub fn path_sum(&self, targets: &[AgentId]) -> u64 {
        targets.iter().filter_map(|&t| self.hop_count(t)).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DelaySummary {
    pub tau_min: u64,
    pub tau_max: u64,
    pub delta_tau: u64,
    pub tau_sum: u64,
}

/// Round-trip delay statistics over the targets; the root counts with delay 0
/// when it is one of them.
pub fn delay_summary(t: &RoutingTree, targets: &[AgentId]) -> Result<DelaySummary> {
    let taus = targets
        .iter()
        .map(|&m| {
            if m == t.root() {
                Ok(0)
            } else {
                t.round_trip(m)
                    .ok_or_else(|| Error::Topology(format!("target {m} not reachable in tree")))
            }
        })
        .collect::<Result<Vec<u64>>>()?;
    let tau_min = taus.iter().copied().min().unwrap_or(0);
    let tau_max = taus.iter().copied().max().unwrap_or(0);
    Ok(DelaySummary {
        tau_min,
        tau_max,
        delta_tau: tau_max - tau_min,
        tau_sum: taus.iter().sum(),
    })
}

/// Per-agent delay summaries over each agent's support; agents with no
/// remote interest get the all-zero summary.
pub fn delay_summaries(
    trees: &BTreeMap<AgentId, RoutingTree>,
    w: &LogicalWeights,
) -> Result<Vec<DelaySummary>> {
    (0..w.n_agents())
        .map(|n| {
            let support = w.support(n);
            match trees.get(&n) {
                Some(t) => delay_summary(t, &support),
                None if w.remote_support(n).is_empty() => Ok(DelaySummary::default()),
                None => Err(Error::Topology(format!("no routing tree for agent {n}"))),
            }
        })
        .collect()
}

/// Per-edge usage count `Σ_n Σ_{m∈W_n} C_{n,m,e}`.
pub fn edge_loads(
    g: &PhysicalGraph,
    trees: &BTreeMap<AgentId, RoutingTree>,
    w: &LogicalWeights,
) -> Result<Vec<u64>> {
    let mut load = vec![0u64; g.edges().len()];
    for n in 0..w.n_agents() {
        let remote = w.remote_support(n);
        if remote.is_empty() {
            continue;
        }
        let t = trees
            .get(&n)
            .ok_or_else(|| Error::Topology(format!("no routing tree for agent {n}")))?;
        for m in remote {
            let path = t
                .path_to(m)
                .ok_or_else(|| Error::Topology(format!("tree of {n} misses {m}")))?;
            for &e in path {
                load[e] += 1;
            }
        }
    }
    Ok(load)
}

/// `C_max = 2 · max_e Σ_n Σ_{m∈W_n} C_{n,m,e}`.
pub fn link_capacity(
    g: &PhysicalGraph,
    trees: &BTreeMap<AgentId, RoutingTree>,
    w: &LogicalWeights,
) -> Result<u64> {
    Ok(2 * edge_loads(g, trees, w)?.into_iter().max().unwrap_or(0))
}

/// Per-link load of the consensus protocol, which exchanges one parameter
/// matrix in each direction of every edge per step.
pub const CDOGD_LINK_CAPACITY: u64 = 2;
