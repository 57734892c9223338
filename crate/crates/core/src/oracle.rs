//! Exact decisions for tiny instances by backtracking with forward checking.

use thiserror::Error;

use crate::correspondence::{Colour, Colouring, CorrespondenceError, EdgeCorrespondence};
use crate::graph::{EdgeId, SimpleGraph};
use crate::nibble::ColourSet;
use crate::validate::validate_partial;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large: {edges} edges / q = {q} (guard {max_edges} / {max_q})")]
    TooLarge { edges: usize, q: u32, max_edges: usize, max_q: u32 },
    #[error("partial colouring already violates the correspondence")]
    InvalidPartial,
    #[error("correspondence builder failed: {0}")]
    Builder(#[from] CorrespondenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guard {
    pub max_edges: usize,
    pub max_q: u32,
}

impl Default for Guard {
    fn default() -> Self {
        Guard { max_edges: 16, max_q: 8 }
    }
}

impl Guard {
    fn check(&self, edges: usize, q: u32) -> Result<(), OracleError> {
        if edges > self.max_edges || q > self.max_q {
            Err(OracleError::TooLarge {
                edges,
                q,
                max_edges: self.max_edges,
                max_q: self.max_q,
            })
        } else {
            Ok(())
        }
    }
}

/// `Some(witness)` iff a valid colouring exists.
pub fn oracle_colourable(graph: &SimpleGraph, corr: &EdgeCorrespondence) -> Result<Option<Colouring>, OracleError> {
    oracle_colourable_with(graph, corr, Guard::default())
}

pub fn oracle_colourable_with(
    graph: &SimpleGraph,
    corr: &EdgeCorrespondence,
    guard: Guard,
) -> Result<Option<Colouring>, OracleError> {
    guard.check(graph.edge_count(), corr.q())?;
    Ok(search(graph, corr, &Colouring::uncoloured(graph.edge_count())))
}

/// Smallest `q` in `1..=q_max` whose built correspondence is colourable.
pub fn oracle_min_q<F>(graph: &SimpleGraph, mut builder: F, q_max: u32) -> Result<Option<u32>, OracleError>
where
    F: FnMut(&SimpleGraph, u32) -> Result<EdgeCorrespondence, CorrespondenceError>,
{
    for q in 1..=q_max {
        let corr = builder(graph, q)?;
        if oracle_colourable(graph, &corr)?.is_some() {
            return Ok(Some(q));
        }
    }
    Ok(None)
}

/// Whether `partial` extends to a valid total colouring.
pub fn oracle_completion(graph: &SimpleGraph, corr: &EdgeCorrespondence, partial: &Colouring) -> Result<bool, OracleError> {
    if partial.edge_count() != graph.edge_count() || !validate_partial(graph, corr, partial).is_valid() {
        return Err(OracleError::InvalidPartial);
    }
    let free = graph.edge_count() - partial.coloured_count();
    Guard::default().check(free, corr.q())?;
    Ok(search(graph, corr, partial).is_some())
}

fn search(graph: &SimpleGraph, corr: &EdgeCorrespondence, partial: &Colouring) -> Option<Colouring> {
    let q = corr.q();
    let m = graph.edge_count();
    let mut domains: Vec<ColourSet> = vec![ColourSet::full(q); m];
    let mut colouring = partial.clone();
    // fixed colours prune their neighbours up front
    for e in 0..m as EdgeId {
        if let Some(c) = partial.get(e) {
            domains[e as usize] = ColourSet::empty(q);
            domains[e as usize].insert(c);
            for f in graph.neighbours(e) {
                if partial.get(f).is_none() {
                    if let Some(p) = corr.partner_unchecked(e, c, f) {
                        domains[f as usize].remove(p);
                    }
                }
            }
        }
    }
    let mut order: Vec<EdgeId> = (0..m as EdgeId).filter(|&e| partial.get(e).is_none()).collect();
    let degree = |e: EdgeId| graph.neighbours(e).count();
    order.sort_by_key(|&e| (std::cmp::Reverse(degree(e)), e));
    let neighbours: Vec<Vec<EdgeId>> = (0..m as EdgeId).map(|e| graph.neighbours(e).collect()).collect();
    if order.iter().any(|&e| domains[e as usize].is_empty()) {
        return None;
    }
    let mut placed = vec![false; m];
    for e in 0..m {
        placed[e] = partial.get(e as EdgeId).is_some();
    }
    if assign(0, &order, &neighbours, corr, &mut domains, &mut placed, &mut colouring) {
        Some(colouring)
    } else {
        None
    }
}

fn assign(
    depth: usize,
    order: &[EdgeId],
    neighbours: &[Vec<EdgeId>],
    corr: &EdgeCorrespondence,
    domains: &mut [ColourSet],
    placed: &mut [bool],
    colouring: &mut Colouring,
) -> bool {
    let Some(&e) = order.get(depth) else { return true };
    let candidates: Vec<Colour> = domains[e as usize].iter().collect();
    for c in candidates {
        let mut removed: Vec<(EdgeId, Colour)> = Vec::new();
        let mut wiped = false;
        for &f in &neighbours[e as usize] {
            if placed[f as usize] {
                continue;
            }
            if let Some(p) = corr.partner_unchecked(e, c, f) {
                if domains[f as usize].remove(p) {
                    removed.push((f, p));
                    if domains[f as usize].is_empty() {
                        wiped = true;
                        break;
                    }
                }
            }
        }
        if !wiped {
            placed[e as usize] = true;
            colouring.set(e, Some(c));
            if assign(depth + 1, order, neighbours, corr, domains, placed, colouring) {
                return true;
            }
            placed[e as usize] = false;
            colouring.set(e, None);
        }
        for (f, p) in removed {
            domains[f as usize].insert(p);
        }
    }
    false
}
