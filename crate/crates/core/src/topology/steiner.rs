use std::collections::BTreeSet;

use super::graph::{EdgeId, PhysicalGraph};
use super::tree::RoutingTree;
use crate::am::AgentId;
use crate::error::{Error, Result};

pub(crate) fn required_nodes(g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<Vec<AgentId>> {
    let mut req: BTreeSet<AgentId> = terminals.iter().copied().collect();
    req.insert(root);
    if let Some(&bad) = req.iter().find(|&&x| x >= g.n_nodes()) {
        return Err(Error::Topology(format!("node {bad} is not in the graph")));
    }
    Ok(req.into_iter().collect())
}

/// Removes non-required leaves until every leaf is required.
pub(crate) fn prune_leaves(g: &PhysicalGraph, edges: &mut BTreeSet<EdgeId>, required: &[AgentId]) {
    loop {
        let mut deg = vec![0usize; g.n_nodes()];
        for &id in edges.iter() {
            deg[g.edge(id).a] += 1;
            deg[g.edge(id).b] += 1;
        }
        let drop: Vec<EdgeId> = edges
            .iter()
            .copied()
            .filter(|&id| {
                let e = g.edge(id);
                (deg[e.a] == 1 && required.binary_search(&e.a).is_err())
                    || (deg[e.b] == 1 && required.binary_search(&e.b).is_err())
            })
            .collect();
        if drop.is_empty() {
            return;
        }
        for id in drop {
            edges.remove(&id);
        }
    }
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Metric-closure MST 2-approximation of the minimum-delay Steiner tree on
/// `{root} ∪ terminals`.
pub fn steiner_tree(g: &PhysicalGraph, root: AgentId, terminals: &[AgentId]) -> Result<RoutingTree> {
    let req = required_nodes(g, root, terminals)?;
    let sps: Vec<_> = req.iter().map(|&s| g.shortest_paths(s, |_| true)).collect();
    for (i, sp) in sps.iter().enumerate() {
        if let Some(&t) = req.iter().find(|&&t| sp.dist[t].is_none()) {
            return Err(Error::Topology(format!("node {t} is unreachable from {}", req[i])));
        }
    }

    // Prim over the metric closure from the root; ties go to the attachment
    // point nearest the root, then to the smaller node index.
    let k = req.len();
    let start = req.binary_search(&root).expect("root is required");
    let from_root = &sps[start].dist;
    let mut in_tree = vec![false; k];
    in_tree[start] = true;
    let mut closure_edges = Vec::new();
    for _ in 1..k {
        let mut best: Option<((u64, u64, AgentId, AgentId), usize, usize)> = None;
        for i in (0..k).filter(|&i| in_tree[i]) {
            for j in (0..k).filter(|&j| !in_tree[j]) {
                let d = sps[i].dist[req[j]].expect("checked reachable");
                let key = (d, from_root[req[i]].expect("checked reachable"), req[i], req[j]);
                if best.is_none_or(|b| key < b.0) {
                    best = Some((key, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("nonempty frontier");
        in_tree[j] = true;
        closure_edges.push((i, j));
    }

    // Expand closure edges into graph paths.
    let mut union = BTreeSet::new();
    for (i, j) in closure_edges {
        let mut v = req[j];
        while let Some((p, id)) = sps[i].parent[v] {
            union.insert(id);
            v = p;
        }
    }

    // MST of the expanded subgraph, grown from the root with the same ties.
    let mut edges = BTreeSet::new();
    let mut reached = vec![false; g.n_nodes()];
    reached[root] = true;
    loop {
        let next = union
            .iter()
            .filter_map(|&id| {
                let e = g.edge(id);
                let (inside, outside) = match (reached[e.a], reached[e.b]) {
                    (true, false) => (e.a, e.b),
                    (false, true) => (e.b, e.a),
                    _ => return None,
                };
                Some(((e.delay, from_root[inside], inside, outside), id, outside))
            })
            .min();
        let Some((_, id, v)) = next else { break };
        reached[v] = true;
        edges.insert(id);
    }
    prune_leaves(g, &mut edges, &req);
    RoutingTree::from_edges(g, root, edges, &req)
}

pub(crate) fn is_acyclic_with(g: &PhysicalGraph, edges: impl IntoIterator<Item = EdgeId>) -> bool {
    let mut ds = DisjointSet::new(g.n_nodes());
    edges.into_iter().all(|id| ds.union(g.edge(id).a, g.edge(id).b))
}
