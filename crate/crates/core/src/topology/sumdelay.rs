use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::Serialize;

use super::graph::{EdgeId, PhysicalGraph};
use super::steiner::{is_acyclic_with, prune_leaves, required_nodes};
use super::tree::RoutingTree;
use crate::am::AgentId;
use crate::error::{Error, Result};

pub const EXACT_MAX_NODES: usize = 20;
pub const EXACT_MAX_EDGES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SumDelayOptions {
    /// Maximum number of branch-and-bound nodes to expand.
    pub node_budget: usize,
    /// Seed the incumbent with the canonical shortest-path tree.
    pub warm_start: bool,
}

impl Default for SumDelayOptions {
    fn default() -> Self {
        Self {
            node_budget: 1_000_000,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumDelayOutcome {
    pub tree: RoutingTree,
    /// Σ of root-to-terminal path delays inside the tree.
    pub objective: u64,
    pub lower_bound: u64,
    pub nodes_explored: usize,
    /// False when the instance exceeded the exact-search limits and the
    /// heuristic answer was returned.
    pub exact: bool,
}

impl SumDelayOutcome {
    pub fn gap(&self) -> f64 {
        if self.lower_bound == 0 {
            0.0
        } else {
            (self.objective - self.lower_bound) as f64 / self.lower_bound as f64
        }
    }
}

/// Tree minimising the sum of root-to-terminal delays, with default options.
pub fn sumdelay_tree(g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<RoutingTree> {
    sumdelay_search(g, root, terminals, SumDelayOptions::default()).map(|o| o.tree)
}

/// Union of canonical shortest paths over the allowed edges, together with
/// its path-sum (which equals the sum of distances).
fn shortest_path_union(
    g: &PhysicalGraph,
    root: AgentId,
    req: &[AgentId],
    allowed: impl Fn(EdgeId) -> bool,
) -> Option<(BTreeSet<EdgeId>, u64)> {
    let sp = g.shortest_paths(root, allowed);
    let mut edges = BTreeSet::new();
    let mut total = 0;
    for &t in req {
        total += sp.dist[t]?;
        let mut v = t;
        while let Some((p, id)) = sp.parent[v] {
            if !edges.insert(id) {
                break;
            }
            v = p;
        }
    }
    Some((edges, total))
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Node {
    // Ordered for a max-heap: smallest bound first, then deepest, then oldest.
    key: (Reverse<u64>, usize, Reverse<u64>),
    included: u64,
    excluded: u64,
}

/// Evaluates a complete assignment: the component of the root among the
/// included edges, pruned to the required nodes.
fn evaluate_leaf(g: &PhysicalGraph, root: AgentId, req: &[AgentId], included: u64) -> Option<(BTreeSet<EdgeId>, u64)> {
    let mut edges: BTreeSet<EdgeId> = (0..g.edges().len()).filter(|&i| included >> i & 1 == 1).collect();
    let sp = g.shortest_paths(root, |id| edges.contains(&id));
    if req.iter().any(|&t| sp.dist[t].is_none()) {
        return None;
    }
    edges.retain(|&id| sp.dist[g.edge(id).a].is_some());
    prune_leaves(g, &mut edges, req);
    let tree = RoutingTree::from_edges(g, root, edges.iter().copied(), req).ok()?;
    Some((edges, tree.path_sum(req)))
}

/// Exact branch-and-bound over binary edge selections.
///
/// Each node fixes a prefix of the edges (in index order) as included or
/// excluded. Included edges must stay acyclic. The bound is the sum of
/// root-to-terminal distances in the graph without the excluded edges.
pub fn sumdelay_search(
    g: &PhysicalGraph,
    root: AgentId,
    terminals: &[AgentId],
    opts: SumDelayOptions,
) -> Result<SumDelayOutcome> {
    let req = required_nodes(g, root, terminals)?;
    let Some((spt_edges, lower_bound)) = shortest_path_union(g, root, &req, |_| true) else {
        let sp = g.shortest_paths(root, |_| true);
        let bad = req.iter().find(|&&t| sp.dist[t].is_none()).copied().unwrap_or(root);
        return Err(Error::Topology(format!("node {bad} is unreachable from {root}")));
    };

    let m = g.edges().len();
    if g.n_nodes() > EXACT_MAX_NODES || m > EXACT_MAX_EDGES {
        let tree = RoutingTree::from_edges(g, root, spt_edges, &req)?;
        let objective = tree.path_sum(&req);
        return Ok(SumDelayOutcome {
            tree,
            objective,
            lower_bound,
            nodes_explored: 0,
            exact: false,
        });
    }

    let mut incumbent: Option<(BTreeSet<EdgeId>, u64)> = opts.warm_start.then(|| (spt_edges, lower_bound));
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        key: (Reverse(lower_bound), 0, Reverse(seq)),
        included: 0,
        excluded: 0,
    });
    let mut explored = 0usize;

    while let Some(node) = heap.pop() {
        let (Reverse(bound), depth, _) = node.key;
        if incumbent.as_ref().is_some_and(|(_, best)| bound >= *best) {
            // Best-first order: every remaining node is at least as bad.
            break;
        }
        explored += 1;
        if explored > opts.node_budget {
            return Err(Error::Resource {
                budget: opts.node_budget,
                best: incumbent.map(|(_, v)| v),
            });
        }
        if depth == m {
            if let Some((edges, value)) = evaluate_leaf(g, root, &req, node.included) {
                if incumbent.as_ref().is_none_or(|(_, best)| value < *best) {
                    incumbent = Some((edges, value));
                }
            }
            continue;
        }
        let bit = 1u64 << depth;
        let mut children = Vec::with_capacity(2);
        let with_edge = node.included | bit;
        if is_acyclic_with(g, (0..m).filter(|&i| with_edge >> i & 1 == 1)) {
            children.push((with_edge, node.excluded, bound));
        }
        let without = node.excluded | bit;
        if let Some((_, b)) = shortest_path_union(g, root, &req, |id| without >> id & 1 == 0) {
            children.push((node.included, without, b));
        }
        for (included, excluded, b) in children {
            if incumbent.as_ref().is_some_and(|(_, best)| b >= *best) {
                continue;
            }
            seq += 1;
            heap.push(Node {
                key: (Reverse(b), depth + 1, Reverse(seq)),
                included,
                excluded,
            });
        }
    }

    let (edges, objective) = incumbent.ok_or_else(|| {
        Error::Topology(format!("no tree connects root {root} to its terminals"))
    })?;
    let tree = RoutingTree::from_edges(g, root, edges, &req)?;
    Ok(SumDelayOutcome {
        tree,
        objective,
        lower_bound,
        nodes_explored: explored,
        exact: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::steiner::steiner_tree;
    use crate::topology::steiner::tests::enumerate_trees;

    fn brute_force_path_sum(g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> u64 {
        let req = required_nodes(g, root, terminals).unwrap();
        enumerate_trees(g, &req)
            .into_iter()
            .map(|ids| {
                RoutingTree::from_edges(g, root, ids, &req)
                    .unwrap()
                    .path_sum(&req)
            })
            .min()
            .unwrap()
    }

    #[test]
    fn star_center_gives_star() {
        let g = PhysicalGraph::star(6, 0).unwrap();
        let out = sumdelay_search(&g, 0, &[1, 2, 3, 4, 5], SumDelayOptions::default()).unwrap();
        assert_eq!(out.tree.edges().len(), 5);
        assert_eq!(out.objective, 5);
    }

    #[test]
    fn tree_input_has_no_freedom() {
        let g = PhysicalGraph::path(5).unwrap();
        let out = sumdelay_search(&g, 1, &[0, 4], SumDelayOptions::default()).unwrap();
        assert_eq!(out.objective, 1 + 3);
        assert_eq!(out.tree.edges(), &[0, 1, 2, 3]);
    }

    #[test]
    fn matches_brute_force_without_warm_start() {
        let opts = SumDelayOptions {
            warm_start: false,
            ..Default::default()
        };
        for seed in [5u64, 6, 7] {
            let g = PhysicalGraph::erdos_renyi(8, 0.3, seed).unwrap();
            let terminals = [2, 5, 7];
            let out = sumdelay_search(&g, 0, &terminals, opts).unwrap();
            assert_eq!(out.objective, brute_force_path_sum(&g, 0, &terminals), "seed {seed}");
            assert!(out.exact);
        }
    }

    #[test]
    fn weighted_graph_matches_brute_force() {
        let g = PhysicalGraph::new(
            6,
            [(0, 1, 1), (1, 2, 1), (0, 2, 3), (2, 3, 2), (3, 4, 1), (1, 4, 5), (4, 5, 2), (0, 5, 6)],
        )
        .unwrap();
        let opts = SumDelayOptions {
            warm_start: false,
            ..Default::default()
        };
        let out = sumdelay_search(&g, 0, &[3, 4, 5], opts).unwrap();
        assert_eq!(out.objective, brute_force_path_sum(&g, 0, &[3, 4, 5]));
    }

    #[test]
    fn never_worse_than_steiner() {
        for seed in 0..50u64 {
            let n = 6 + (seed % 5) as usize;
            let g = PhysicalGraph::erdos_renyi(n, 0.35, seed).unwrap();
            let terminals: Vec<_> = (1..n).step_by(2).collect();
            let st = steiner_tree(&g, 0, &terminals).unwrap();
            let sd = sumdelay_tree(&g, 0, &terminals).unwrap();
            assert!(sd.path_sum(&terminals) <= st.path_sum(&terminals));
        }
    }

    #[test]
    fn budget_exhaustion_is_a_resource_error() {
        let g = PhysicalGraph::erdos_renyi(8, 0.5, 5).unwrap();
        let opts = SumDelayOptions {
            node_budget: 2,
            warm_start: false,
        };
        assert!(matches!(
            sumdelay_search(&g, 0, &[3, 6, 7], opts),
            Err(Error::Resource { budget: 2, .. })
        ));
    }

    #[test]
    fn large_instance_uses_heuristic() {
        let g = PhysicalGraph::path(25).unwrap();
        let out = sumdelay_search(&g, 0, &[24], SumDelayOptions::default()).unwrap();
        assert!(!out.exact);
        assert_eq!(out.gap(), 0.0);
    }
}
