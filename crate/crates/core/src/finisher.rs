//! Completion of a partial colouring by resampling violated bad events.
//!
//! The residual instance keeps the uncoloured edges, their lists with every
//! colour blocked by a fixed neighbour removed, and the matchings restricted to
//! those lists. A bad event is an incident residual pair whose current colours
//! form a matched pair; the lowest such pair is resampled until none remain.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{random_correspondence, Colour, Colouring, EdgeCorrespondence, Matching};
use crate::graph::{gen_random_max_degree, EdgeId, SimpleGraph};
use crate::nibble::NibbleState;
use crate::rng::keyed_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinisherError {
    #[error("edge {0} has no residual colour left")]
    EmptyResidualList(EdgeId),
    #[error("resample cap reached after {count} resamples with {} violated events", remaining.len())]
    ResampleCapExceeded {
        count: usize,
        remaining: Vec<(EdgeId, EdgeId)>,
    },
    #[error("colouring has {found} entries, graph has {expected} edges")]
    SizeMismatch { expected: usize, found: usize },
}

/// Matching between two residual edges (local indices `a < b`).
#[derive(Debug, Clone, PartialEq)]
struct Constraint {
    a: usize,
    b: usize,
    matching: Matching,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualInstance {
    edge_count: usize,
    base: Colouring,
    /// Uncoloured edges in ascending order.
    edges: Vec<EdgeId>,
    lists: Vec<Vec<Colour>>,
    constraints: Vec<Constraint>,
    /// Constraint indices touching each residual edge.
    touching: Vec<Vec<usize>>,
    l_min: usize,
    t_max: usize,
}

impl ResidualInstance {
    /// Builds the residual from a partial colouring and per-edge candidate
    /// lists (only consulted for uncoloured edges).
    pub fn from_parts(
        graph: &SimpleGraph,
        corr: &EdgeCorrespondence,
        partial: &Colouring,
        lists: &[Vec<Colour>],
    ) -> Result<Self, FinisherError> {
        let m = graph.edge_count();
        if partial.edge_count() != m || lists.len() != m {
            return Err(FinisherError::SizeMismatch {
                expected: m,
                found: partial.edge_count().min(lists.len()),
            });
        }
        let edges: Vec<EdgeId> = (0..m as EdgeId).filter(|&e| partial.get(e).is_none()).collect();
        let mut local = vec![usize::MAX; m];
        for (i, &e) in edges.iter().enumerate() {
            local[e as usize] = i;
        }
        let mut residual_lists = Vec::with_capacity(edges.len());
        for &e in &edges {
            let blocked: BTreeSet<Colour> = graph
                .neighbours(e)
                .filter_map(|f| partial.get(f).and_then(|cf| corr.partner_unchecked(f, cf, e)))
                .collect();
            let list: Vec<Colour> = lists[e as usize].iter().copied().filter(|c| !blocked.contains(c)).collect();
            if list.is_empty() {
                return Err(FinisherError::EmptyResidualList(e));
            }
            residual_lists.push(list);
        }
        let mut constraints = Vec::new();
        for (&(e, f), m) in corr.matchings() {
            let (a, b) = (local[e as usize], local[f as usize]);
            if a == usize::MAX || b == usize::MAX {
                continue;
            }
            let pairs: Vec<(Colour, Colour)> = m
                .pairs()
                .iter()
                .copied()
                .filter(|(x, y)| residual_lists[a].binary_search(x).is_ok() && residual_lists[b].binary_search(y).is_ok())
                .collect();
            if !pairs.is_empty() {
                constraints.push(Constraint {
                    a,
                    b,
                    matching: Matching::new(pairs),
                });
            }
        }
        Ok(Self::assemble(m, partial.clone(), edges, residual_lists, constraints))
    }

    fn assemble(
        edge_count: usize,
        base: Colouring,
        edges: Vec<EdgeId>,
        lists: Vec<Vec<Colour>>,
        constraints: Vec<Constraint>,
    ) -> Self {
        let mut touching = vec![Vec::new(); edges.len()];
        for (k, c) in constraints.iter().enumerate() {
            touching[c.a].push(k);
            touching[c.b].push(k);
        }
        let l_min = lists.iter().map(Vec::len).min().unwrap_or(0);
        let mut t_max = 0;
        for (i, list) in lists.iter().enumerate() {
            for &c in list {
                let t = touching[i]
                    .iter()
                    .filter(|&&k| {
                        let con = &constraints[k];
                        if con.a == i {
                            con.matching.forward(c).is_some()
                        } else {
                            con.matching.backward(c).is_some()
                        }
                    })
                    .count();
                t_max = t_max.max(t);
            }
        }
        ResidualInstance {
            edge_count,
            base,
            edges,
            lists,
            constraints,
            touching,
            l_min,
            t_max,
        }
    }

    /// Residual edges (global ids, ascending).
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn list(&self, local: usize) -> &[Colour] {
        &self.lists[local]
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn l_min(&self) -> usize {
        self.l_min
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Number of bad events (matched colour pairs over residual incident pairs).
    pub fn event_count(&self) -> usize {
        self.constraints.iter().map(|c| c.matching.len()).sum()
    }

    /// The fixed colours this residual completes.
    pub fn base(&self) -> &Colouring {
        &self.base
    }
}

/// Residual instance after a nibble run, using each coloured edge's final
/// (smallest retained) colour and the current lists of the uncoloured ones.
pub fn build_residual(
    graph: &SimpleGraph,
    corr: &EdgeCorrespondence,
    state: &NibbleState,
) -> Result<ResidualInstance, FinisherError> {
    let lists: Vec<Vec<Colour>> = (0..graph.edge_count() as EdgeId)
        .map(|e| state.list(e).iter().collect())
        .collect();
    ResidualInstance::from_parts(graph, corr, &state.partial_colouring(), &lists)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisViolation {
    pub l_min: usize,
    pub t_max: usize,
    pub factor_milli: u64,
}

/// `min |L(e)| >= factor · T_max`; an empty residual passes vacuously.
pub fn check_hypothesis(r: &ResidualInstance, factor: f64) -> Result<(), HypothesisViolation> {
    if r.is_empty() || r.l_min as f64 >= factor * r.t_max as f64 {
        Ok(())
    } else {
        Err(HypothesisViolation {
            l_min: r.l_min,
            t_max: r.t_max,
            factor_milli: (factor * 1000.0).round() as u64,
        })
    }
}

/// One resampling step, for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleEntry {
    pub step: usize,
    pub edge_a: EdgeId,
    pub edge_b: EdgeId,
    /// Colours that realized the event.
    pub colour_a: Colour,
    pub colour_b: Colour,
    pub new_a: Colour,
    pub new_b: Colour,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub colouring: Colouring,
    pub resamples: usize,
    pub log: Vec<ResampleEntry>,
}

pub fn default_resample_cap(r: &ResidualInstance) -> usize {
    10_000 * r.edges.len()
}

/// Uniform initial sample, then resample the lowest violated pair's two edges
/// until nothing is violated or `cap` resamples have been spent.
pub fn complete_colouring<R: Rng>(
    r: &ResidualInstance,
    rng: &mut R,
    cap: usize,
    keep_log: bool,
) -> Result<Completion, FinisherError> {
    let mut sigma: Vec<Colour> = r
        .lists
        .iter()
        .map(|l| *l.choose(rng).expect("residual lists are non-empty"))
        .collect();
    let violated = |k: usize, sigma: &[Colour]| {
        let c = &r.constraints[k];
        c.matching.forward(sigma[c.a]) == Some(sigma[c.b])
    };
    // keyed by (a, b) so the lowest edge pair comes first
    let mut bad: BTreeMap<(usize, usize), usize> = (0..r.constraints.len())
        .filter(|&k| violated(k, &sigma))
        .map(|k| ((r.constraints[k].a, r.constraints[k].b), k))
        .collect();
    let mut resamples = 0;
    let mut log = Vec::new();
    while let Some((&(a, b), _)) = bad.first_key_value() {
        if resamples >= cap {
            return Err(FinisherError::ResampleCapExceeded {
                count: resamples,
                remaining: bad.keys().map(|&(a, b)| (r.edges[a], r.edges[b])).collect(),
            });
        }
        let (old_a, old_b) = (sigma[a], sigma[b]);
        sigma[a] = *r.lists[a].choose(rng).expect("non-empty");
        sigma[b] = *r.lists[b].choose(rng).expect("non-empty");
        resamples += 1;
        if keep_log {
            log.push(ResampleEntry {
                step: resamples,
                edge_a: r.edges[a],
                edge_b: r.edges[b],
                colour_a: old_a,
                colour_b: old_b,
                new_a: sigma[a],
                new_b: sigma[b],
            });
        }
        for &k in r.touching[a].iter().chain(&r.touching[b]) {
            let key = (r.constraints[k].a, r.constraints[k].b);
            if violated(k, &sigma) {
                bad.insert(key, k);
            } else {
                bad.remove(&key);
            }
        }
    }
    let mut colouring = r.base.clone();
    for (i, &e) in r.edges.iter().enumerate() {
        colouring.set(e, Some(sigma[i]));
    }
    Ok(Completion {
        colouring,
        resamples,
        log,
    })
}

pub fn write_resample_log<W: Write>(log: &[ResampleEntry], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["step", "edge_a", "edge_b", "colour_a", "colour_b", "new_a", "new_b"])?;
    for entry in log {
        w.serialize(entry)?;
    }
    w.flush()?;
    Ok(())
}

/// A standalone instance with `L_min = l` and `L >= 8 T`: a random graph of
/// maximum degree `l/16 + 1` (so each edge has at most `l/8` neighbours) with
/// random perfect matchings on `{1..l}`.
pub fn constructed_instance(l: u32, n: u32, seed: u64) -> (SimpleGraph, EdgeCorrespondence, ResidualInstance) {
    let d = (l / 16 + 1) as usize;
    let graph_seed = keyed_rng([seed, 1, l as u64, n as u64]).random();
    let graph = gen_random_max_degree(n, d, graph_seed).expect("n >= 1 and d >= 1");
    let corr = random_correspondence(&graph, l, 1.0, seed).expect("l >= 1");
    let lists = vec![(1..=l).collect::<Vec<_>>(); graph.edge_count()];
    let residual = ResidualInstance::from_parts(&graph, &corr, &Colouring::uncoloured(graph.edge_count()), &lists)
        .expect("no fixed colours, lists non-empty");
    (graph, corr, residual)
}
