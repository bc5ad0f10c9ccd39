use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::am::AgentId;
use crate::datagen::rng::{stream_rng, uniform, Stream};
use crate::error::{Error, Result};

/// Undirected edge with `a < b` and a positive per-hop delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: AgentId,
    pub b: AgentId,
    pub delay: u32,
}

impl Edge {
    pub fn other(&self, node: AgentId) -> AgentId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, node: AgentId) -> bool {
        self.a == node || self.b == node
    }
}

pub type EdgeId = usize;

/// Connected, undirected, simple communication graph.
///
/// Edges are stored sorted by `(a, b)`; an [`EdgeId`] is a position in that
/// order and is the tie-breaking key for every deterministic choice made on
/// the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(AgentId, EdgeId)>>,
}

/// Single-source shortest paths with canonical parents.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<Option<u64>>,
    /// `(parent node, edge to parent)`; `None` for the source and unreachable nodes.
    pub parent: Vec<Option<(AgentId, EdgeId)>>,
}

impl PhysicalGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (AgentId, AgentId, u32)>) -> Result<Self> {
        let g = Self::build(n, edges)?;
        if !g.is_connected() {
            return Err(Error::Topology(format!("graph on {n} nodes is not connected")));
        }
        Ok(g)
    }

    /// Unit-delay convenience constructor.
    pub fn with_unit_delays(n: usize, pairs: &[(AgentId, AgentId)]) -> Result<Self> {
        Self::new(n, pairs.iter().map(|&(a, b)| (a, b, 1)))
    }

    fn build(n: usize, edges: impl IntoIterator<Item = (AgentId, AgentId, u32)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for (i, j, delay) in edges {
            if i == j {
                return Err(Error::Topology(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::Topology(format!("edge ({i},{j}) references a node outside 0..{n}")));
            }
            if delay == 0 {
                return Err(Error::Topology(format!("edge ({i},{j}) has zero delay")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if !seen.insert((a, b)) {
                return Err(Error::Topology(format!("duplicate edge ({a},{b})")));
            }
            list.push(Edge { a, b, delay });
        }
        list.sort();
        let mut adj = vec![Vec::new(); n];
        for (id, e) in list.iter().enumerate() {
            adj[e.a].push((e.b, id));
            adj[e.b].push((e.a, id));
        }
        for nbrs in &mut adj {
            nbrs.sort();
        }
        Ok(Self { n, edges: list, adj })
    }

    pub fn path(n: usize) -> Result<Self> {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::with_unit_delays(n, &pairs)
    }

    pub fn star(n: usize, center: AgentId) -> Result<Self> {
        let pairs: Vec<_> = (0..n).filter(|&i| i != center).map(|i| (center, i)).collect();
        Self::with_unit_delays(n, &pairs)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        Self::with_unit_delays(n, &pairs)
    }

    /// G(n, p) with unit delays, redrawn until connected.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0,1]")));
        }
        let mut rng = stream_rng(seed, Stream::Graph);
        for _ in 0..10_000 {
            let mut pairs = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if uniform(&mut rng, 0.0, 1.0) < p {
                        pairs.push((i, j));
                    }
                }
            }
            let g = Self::build(n, pairs.iter().map(|&(a, b)| (a, b, 1)))?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Topology(format!(
            "no connected G({n}, {p}) sample found in 10000 draws"
        )))
    }

    /// Hand-authored 20-node, 58-edge unit-delay graph with a few hub nodes.
    /// It is an approximation of the synthetic-experiment topology, not a copy.
    pub fn reference_20() -> Self {
        const EDGES: [(usize, usize); 58] = [
            (0, 1), (0, 4), (0, 9), (0, 10), (0, 14), (0, 17), (1, 2), (1, 3), (1, 7), (1, 9),
            (1, 10), (1, 13), (1, 14), (1, 15), (1, 17), (1, 18), (2, 5), (2, 8), (3, 6), (3, 7),
            (3, 10), (4, 6), (4, 7), (4, 12), (4, 18), (5, 9), (5, 12), (6, 8), (6, 11), (7, 8),
            (7, 9), (7, 10), (7, 16), (7, 19), (8, 9), (8, 10), (8, 12), (8, 13), (8, 16), (8, 17),
            (8, 19), (9, 10), (9, 15), (9, 18), (9, 19), (10, 13), (10, 16), (10, 17), (10, 18),
            (11, 12), (11, 16), (12, 13), (12, 19), (13, 14), (14, 18), (14, 19), (15, 17),
            (16, 18),
        ];
        Self::with_unit_delays(20, &EDGES).expect("reference graph is valid")
    }

    /// Reads an edge list with header `i,j,delay`. The node count is
    /// `max index + 1` unless given.
    pub fn from_csv(path: &Path, n: Option<usize>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let expected = ["i", "j", "delay"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header `i,j,delay`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut edges = Vec::new();
        for (idx, rec) in reader.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let parse = |col: usize| -> Result<u64> {
                rec.get(col)
                    .map(str::trim)
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.into(),
                        line,
                        msg: format!("column {} is not a nonnegative integer", expected[col]),
                    })
            };
            edges.push((parse(0)? as usize, parse(1)? as usize, parse(2)? as u32));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(0));
        Self::new(n, edges)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("i,j,delay\n");
        for e in &self.edges {
            out.push_str(&format!("{},{},{}\n", e.a, e.b, e.delay));
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn neighbors(&self, node: AgentId) -> &[(AgentId, EdgeId)] {
        &self.adj[node]
    }

    pub fn degree(&self, node: AgentId) -> usize {
        self.adj[node].len()
    }

    pub fn edge_between(&self, a: AgentId, b: AgentId) -> Option<EdgeId> {
        self.adj.get(a)?.iter().find(|&&(m, _)| m == b).map(|&(_, id)| id)
    }

    fn is_connected(&self) -> bool {
        self.shortest_paths(0, |_| true).dist.iter().all(Option::is_some)
    }

    /// Dijkstra from `source` over the edges accepted by `allowed`. Among
    /// equal-length paths the parent with the smaller node index wins.
    pub fn shortest_paths(&self, source: AgentId, allowed: impl Fn(EdgeId) -> bool) -> ShortestPaths {
        let mut dist: Vec<Option<u64>> = vec![None; self.n];
        let mut parent: Vec<Option<(AgentId, EdgeId)>> = vec![None; self.n];
        let mut done = vec![false; self.n];
        let mut heap = BinaryHeap::new();
        dist[source] = Some(0);
        heap.push(Reverse((0u64, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, id) in &self.adj[u] {
                if !allowed(id) || done[v] {
                    continue;
                }
                let nd = d + u64::from(self.edges[id].delay);
                let better = match (dist[v], parent[v]) {
                    (None, _) => true,
                    (Some(old), _) if nd < old => true,
                    (Some(old), Some((p, _))) => nd == old && u < p,
                    _ => false,
                };
                if better {
                    dist[v] = Some(nd);
                    parent[v] = Some((u, id));
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        ShortestPaths { dist, parent }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.into(),
        line,
        msg: e.to_string(),
    }
}

/// Minimal path delays between every pair of nodes.
pub fn all_pairs_hops(g: &PhysicalGraph) -> Result<Vec<Vec<u64>>> {
    (0..g.n_nodes())
        .map(|s| {
            g.shortest_paths(s, |_| true)
                .dist
                .into_iter()
                .enumerate()
                .map(|(t, d)| {
                    d.ok_or_else(|| Error::Topology(format!("node {t} unreachable from {s}")))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floyd_warshall(g: &PhysicalGraph) -> Vec<Vec<u64>> {
        let n = g.n_nodes();
        let inf = u64::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for e in g.edges() {
            d[e.a][e.b] = d[e.a][e.b].min(u64::from(e.delay));
            d[e.b][e.a] = d[e.a][e.b];
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn path_and_complete() {
        let h = all_pairs_hops(&PhysicalGraph::path(3).unwrap()).unwrap();
        assert_eq!(h[0][2], 2);
        let h = all_pairs_hops(&PhysicalGraph::complete(5).unwrap()).unwrap();
        for (i, row) in h.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                assert_eq!(d, u64::from(i != j));
            }
        }
    }

    #[test]
    fn random_graph_matches_floyd_warshall() {
        let g = PhysicalGraph::erdos_renyi(8, 0.35, 3).unwrap();
        let h = all_pairs_hops(&g).unwrap();
        assert_eq!(h, floyd_warshall(&g));
        for i in 0..8 {
            assert_eq!(h[i][i], 0);
            for j in 0..8 {
                assert_eq!(h[i][j], h[j][i]);
                for k in 0..8 {
                    assert!(h[i][j] <= h[i][k] + h[k][j]);
                }
            }
        }
    }

    #[test]
    fn weighted_delays_match_floyd_warshall() {
        let g = PhysicalGraph::new(5, [(0, 1, 3), (1, 2, 1), (0, 2, 5), (2, 3, 2), (3, 4, 7), (1, 4, 2)]).unwrap();
        assert_eq!(all_pairs_hops(&g).unwrap(), floyd_warshall(&g));
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(PhysicalGraph::with_unit_delays(3, &[(0, 1)]).is_err());
        assert!(PhysicalGraph::with_unit_delays(2, &[(0, 0), (0, 1)]).is_err());
        assert!(PhysicalGraph::with_unit_delays(2, &[(0, 1), (1, 0)]).is_err());
        assert!(PhysicalGraph::new(2, [(0, 1, 0)]).is_err());
    }

    #[test]
    fn reference_graph_shape() {
        let g = PhysicalGraph::reference_20();
        assert_eq!(g.n_nodes(), 20);
        assert_eq!(g.edges().len(), 58);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = PhysicalGraph::new(4, [(0, 1, 2), (1, 2, 1), (2, 3, 1)]).unwrap();
        let p = dir.path().join("g.csv");
        std::fs::write(&p, g.to_csv_string()).unwrap();
        assert_eq!(PhysicalGraph::from_csv(&p, None).unwrap(), g);

        std::fs::write(&p, "i,j,delay\n0,1,1\n1,x,1\n").unwrap();
        match PhysicalGraph::from_csv(&p, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&p, "a,b\n0,1\n").unwrap();
        assert!(matches!(PhysicalGraph::from_csv(&p, None), Err(Error::Parse { .. })));
    }
}
