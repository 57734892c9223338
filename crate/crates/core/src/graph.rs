//! Simple graphs with an edge incidence index, plus deterministic generators.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = u32;
pub type EdgeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {index} is a loop at vertex {vertex}")]
    LoopEdge { index: usize, vertex: VertexId },
    #[error("edge {index} duplicates ({0}, {1})", pair.0, pair.1)]
    DuplicateEdge { index: usize, pair: (VertexId, VertexId) },
    #[error("edge {index} references vertex {vertex}, but the graph has {vertex_count} vertices")]
    VertexOutOfRange {
        index: usize,
        vertex: VertexId,
        vertex_count: u32,
    },
    #[error("vertex {vertex} is not an endpoint of edge {edge}")]
    NotAnEndpoint { edge: EdgeId, vertex: VertexId },
    #[error("invalid generator size: {0}")]
    InvalidSize(String),
}

/// An immutable simple graph. Edge ids follow insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    vertex_count: u32,
    edges: Vec<(VertexId, VertexId)>,
    incidence: Vec<Vec<EdgeId>>,
    max_degree: usize,
}

impl SimpleGraph {
    pub fn new(vertex_count: u32, edge_list: &[(VertexId, VertexId)]) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(edge_list.len());
        let mut incidence = vec![Vec::new(); vertex_count as usize];
        for (index, &(a, b)) in edge_list.iter().enumerate() {
            for vertex in [a, b] {
                if vertex >= vertex_count {
                    return Err(GraphError::VertexOutOfRange {
                        index,
                        vertex,
                        vertex_count,
                    });
                }
            }
            if a == b {
                return Err(GraphError::LoopEdge { index, vertex: a });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(GraphError::DuplicateEdge { index, pair: (a, b) });
            }
            incidence[a as usize].push(index as EdgeId);
            incidence[b as usize].push(index as EdgeId);
        }
        let max_degree = incidence.iter().map(Vec::len).max().unwrap_or(0);
        Ok(SimpleGraph {
            vertex_count,
            edges: edge_list.to_vec(),
            incidence,
            max_degree,
        })
    }

    pub fn vertex_count(&self) -> u32 {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e as usize]
    }

    /// Edges at vertex `v`, ascending by id.
    pub fn edges_at(&self, v: VertexId) -> &[EdgeId] {
        &self.incidence[v as usize]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence[v as usize].len()
    }

    /// Cached maximum degree (Δ).
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// All edges other than `e` that contain `v`, ascending by id.
    pub fn incident_edges(&self, e: EdgeId, v: VertexId) -> Result<Vec<EdgeId>, GraphError> {
        let (a, b) = self.endpoints(e);
        if v != a && v != b {
            return Err(GraphError::NotAnEndpoint { edge: e, vertex: v });
        }
        Ok(self.incidence_at(e, v).collect())
    }

    /// Unchecked variant of [`incident_edges`](Self::incident_edges) for hot loops.
    pub fn incidence_at(&self, e: EdgeId, v: VertexId) -> impl Iterator<Item = EdgeId> + '_ {
        self.incidence[v as usize].iter().copied().filter(move |&f| f != e)
    }

    /// Every edge sharing an endpoint with `e`.
    pub fn neighbours(&self, e: EdgeId) -> impl Iterator<Item = EdgeId> + '_ {
        let (a, b) = self.endpoints(e);
        self.incidence_at(e, a).chain(self.incidence_at(e, b))
    }

    pub fn are_incident(&self, e: EdgeId, f: EdgeId) -> bool {
        if e == f {
            return false;
        }
        let (a, b) = self.endpoints(e);
        let (c, d) = self.endpoints(f);
        a == c || a == d || b == c || b == d
    }

    /// The shared endpoint of two distinct incident edges.
    pub fn shared_vertex(&self, e: EdgeId, f: EdgeId) -> Option<VertexId> {
        if e == f {
            return None;
        }
        let (a, b) = self.endpoints(e);
        let (c, d) = self.endpoints(f);
        if a == c || a == d {
            Some(a)
        } else if b == c || b == d {
            Some(b)
        } else {
            None
        }
    }

    /// The endpoint of `e` other than `v`.
    pub fn other_endpoint(&self, e: EdgeId, v: VertexId) -> VertexId {
        let (a, b) = self.endpoints(e);
        if a == v {
            b
        } else {
            a
        }
    }

    /// True when the graph is a single cycle through all of its vertices.
    pub fn is_cycle(&self) -> bool {
        let n = self.vertex_count as usize;
        if n < 3 || self.edges.len() != n || self.incidence.iter().any(|inc| inc.len() != 2) {
            return false;
        }
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &e in &self.incidence[v] {
                let w = self.other_endpoint(e, v as VertexId) as usize;
                if !visited[w] {
                    visited[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertex_count: self.vertex_count,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

/// Serialized graph section of an instance file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertex_count: u32,
    pub edges: Vec<[VertexId; 2]>,
}

impl TryFrom<&GraphFile> for SimpleGraph {
    type Error = GraphError;

    fn try_from(file: &GraphFile) -> Result<Self, Self::Error> {
        let pairs: Vec<_> = file.edges.iter().map(|&[a, b]| (a, b)).collect();
        SimpleGraph::new(file.vertex_count, &pairs)
    }
}

/// Cycle on `n` vertices; edge `i` joins `i` and `i + 1 (mod n)`.
pub fn gen_cycle(n: u32) -> Result<SimpleGraph, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidSize(format!("cycle needs n >= 3, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    SimpleGraph::new(n, &edges)
}

pub fn gen_path(n: u32) -> Result<SimpleGraph, GraphError> {
    if n < 1 {
        return Err(GraphError::InvalidSize("path needs n >= 1".into()));
    }
    let edges: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    SimpleGraph::new(n, &edges)
}

pub fn gen_complete(n: u32) -> Result<SimpleGraph, GraphError> {
    if n < 1 {
        return Err(GraphError::InvalidSize("complete graph needs n >= 1".into()));
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            edges.push((a, b));
        }
    }
    SimpleGraph::new(n, &edges)
}

/// Star with centre 0 and `leaves` leaves.
pub fn gen_star(leaves: u32) -> Result<SimpleGraph, GraphError> {
    if leaves < 1 {
        return Err(GraphError::InvalidSize("star needs at least one leaf".into()));
    }
    let edges: Vec<_> = (1..=leaves).map(|l| (0, l)).collect();
    SimpleGraph::new(leaves + 1, &edges)
}

/// Random simple graph with maximum degree at most `max_degree`.
///
/// Candidate pairs are shuffled and accepted greedily while both endpoints
/// have spare degree, so dense-ish near-regular graphs come out for small caps.
pub fn gen_random_max_degree(n: u32, max_degree: usize, seed: u64) -> Result<SimpleGraph, GraphError> {
    if n < 1 {
        return Err(GraphError::InvalidSize("random graph needs n >= 1".into()));
    }
    if max_degree < 1 {
        return Err(GraphError::InvalidSize("degree cap must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0usize; n as usize];
    let mut edges = Vec::new();
    // Sampling all pairs is O(n^2); fine for the desk-scale sizes this is used at.
    let mut pairs: Vec<(VertexId, VertexId)> = Vec::with_capacity((n as usize) * (n as usize - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((a, b));
        }
    }
    pairs.shuffle(&mut rng);
    for (a, b) in pairs {
        if degree[a as usize] < max_degree && degree[b as usize] < max_degree {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
            edges.push((a, b));
        }
    }
    SimpleGraph::new(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recomputed_max_degree(g: &SimpleGraph) -> usize {
        let mut deg = vec![0usize; g.vertex_count() as usize];
        for &(a, b) in g.edges() {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    #[test]
    fn builds_path_and_triangle() {
        let p3 = SimpleGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(p3.max_degree(), 2);
        assert_eq!(p3.edge_count(), 2);
        let k3 = SimpleGraph::new(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(k3.max_degree(), 2);
        assert!(k3.is_cycle());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            SimpleGraph::new(4, &[(0, 1), (0, 1)]),
            Err(GraphError::DuplicateEdge { index: 1, .. })
        ));
        assert!(matches!(
            SimpleGraph::new(4, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(SimpleGraph::new(2, &[(1, 1)]), Err(GraphError::LoopEdge { .. })));
        assert!(matches!(
            SimpleGraph::new(2, &[(0, 2)]),
            Err(GraphError::VertexOutOfRange { vertex: 2, .. })
        ));
    }

    #[test]
    fn incident_edges_examples() {
        let k3 = gen_complete(3).unwrap();
        // edge 0 = (0,1), edge 2 = (1,2)
        assert_eq!(k3.incident_edges(0, 1).unwrap(), vec![2]);
        let star = gen_star(4).unwrap();
        assert_eq!(star.incident_edges(0, 0).unwrap(), vec![1, 2, 3]);
        let p3 = gen_path(3).unwrap();
        assert_eq!(p3.incident_edges(0, 0).unwrap(), Vec::<EdgeId>::new());
        assert_eq!(
            p3.incident_edges(0, 2),
            Err(GraphError::NotAnEndpoint { edge: 0, vertex: 2 })
        );
    }

    #[test]
    fn generators() {
        let c4 = gen_cycle(4).unwrap();
        assert_eq!((c4.edge_count(), c4.max_degree()), (4, 2));
        assert!(c4.is_cycle());
        let k4 = gen_complete(4).unwrap();
        assert_eq!((k4.edge_count(), k4.max_degree()), (6, 3));
        assert!(!k4.is_cycle());
        assert!(gen_cycle(2).is_err());
        assert!(gen_random_max_degree(10, 0, 1).is_err());
        let r = gen_random_max_degree(50, 8, 1).unwrap();
        assert!(r.max_degree() <= 8);
        assert_eq!(r.max_degree(), recomputed_max_degree(&r));
        assert_eq!(r, gen_random_max_degree(50, 8, 1).unwrap());
    }

    #[test]
    fn disjoint_cycles_are_not_a_cycle() {
        let g = SimpleGraph::new(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        assert!(!g.is_cycle());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_graph_invariants(n in 1u32..60, cap in 1usize..12, seed in any::<u64>()) {
                let g = gen_random_max_degree(n, cap, seed).unwrap();
                prop_assert!(g.max_degree() <= cap);
                prop_assert_eq!(g.max_degree(), recomputed_max_degree(&g));
                for e in 0..g.edge_count() as EdgeId {
                    let (u, v) = g.endpoints(e);
                    let at_u: HashSet<_> = g.incident_edges(e, u).unwrap().into_iter().collect();
                    let at_v: HashSet<_> = g.incident_edges(e, v).unwrap().into_iter().collect();
                    prop_assert!(at_u.is_disjoint(&at_v));
                    prop_assert!(!at_u.contains(&e));
                }
            }
        }
    }
}
