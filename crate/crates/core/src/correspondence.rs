//! Edge correspondences: one partial matching of colour pairs per incident
//! edge pair, plus colourings and their validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, SimpleGraph};
use crate::rng::{keyed_rng, Purpose};

/// Colours are `1..=q`.
pub type Colour = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrespondenceError {
    #[error("edges {0} and {1} are not incident")]
    NotIncident(EdgeId, EdgeId),
    #[error("graph is not a cycle")]
    NotACycle,
    #[error("colour {colour} outside 1..={q}")]
    ColourOutOfRange { colour: Colour, q: u32 },
    #[error("q must be at least 1")]
    EmptyPalette,
}

/// A partial matching on colour pairs, stored with pairs sorted by first element.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    by_first: Vec<(Colour, Colour)>,
    // (second, first), sorted by second
    by_second: Vec<(Colour, Colour)>,
}

impl Matching {
    pub fn new(mut pairs: Vec<(Colour, Colour)>) -> Self {
        pairs.sort_unstable();
        let mut by_second: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        by_second.sort_unstable();
        Matching {
            by_first: pairs,
            by_second,
        }
    }

    pub fn identity(q: u32) -> Self {
        Matching::new((1..=q).map(|c| (c, c)).collect())
    }

    pub fn pairs(&self) -> &[(Colour, Colour)] {
        &self.by_first
    }

    pub fn len(&self) -> usize {
        self.by_first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty()
    }

    /// Partner of `c` read from the first side.
    pub fn forward(&self, c: Colour) -> Option<Colour> {
        lookup(&self.by_first, c)
    }

    /// Partner of `c` read from the second side.
    pub fn backward(&self, c: Colour) -> Option<Colour> {
        lookup(&self.by_second, c)
    }

    /// Partner of `c`, reading from the second side when `reversed`.
    pub fn oriented(&self, c: Colour, reversed: bool) -> Option<Colour> {
        if reversed {
            self.backward(c)
        } else {
            self.forward(c)
        }
    }
}

fn lookup(sorted: &[(Colour, Colour)], c: Colour) -> Option<Colour> {
    sorted
        .binary_search_by_key(&c, |&(a, _)| a)
        .ok()
        .map(|i| sorted[i].1)
}

/// The edge correspondence: matchings keyed by `(edge_a, edge_b)` with `edge_a < edge_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeCorrespondence {
    q: u32,
    matchings: BTreeMap<(EdgeId, EdgeId), Matching>,
}

/// Problems found by [`EdgeCorrespondence::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("q must be at least 1")]
    EmptyPalette,
    #[error("matching on ({0}, {1}) is not stored in canonical orientation")]
    NonCanonical(EdgeId, EdgeId),
    #[error("matching attached to non-incident pair ({0}, {1})")]
    NotIncident(EdgeId, EdgeId),
    #[error("matching ({a}, {b}): edge out of range")]
    EdgeOutOfRange { a: EdgeId, b: EdgeId },
    #[error("matching ({a}, {b}): colour {colour} outside 1..=q")]
    ColourOutOfRange { a: EdgeId, b: EdgeId, colour: Colour },
    #[error("matching ({a}, {b}): colour {colour} repeated as first element")]
    RepeatedFirst { a: EdgeId, b: EdgeId, colour: Colour },
    #[error("matching ({a}, {b}): colour {colour} repeated as second element")]
    RepeatedSecond { a: EdgeId, b: EdgeId, colour: Colour },
}

impl EdgeCorrespondence {
    /// Builds a correspondence from raw matchings without checking them; use
    /// [`validate`](Self::validate) before handing it to the engine.
    pub fn from_matchings(q: u32, matchings: BTreeMap<(EdgeId, EdgeId), Matching>) -> Self {
        EdgeCorrespondence { q, matchings }
    }

    /// Empty correspondence over `q` colours: every assignment is valid.
    pub fn empty(q: u32) -> Self {
        EdgeCorrespondence {
            q,
            matchings: BTreeMap::new(),
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn matchings(&self) -> &BTreeMap<(EdgeId, EdgeId), Matching> {
        &self.matchings
    }

    /// The matching between `e` and `f` as `(matching, reversed)`, where
    /// `reversed` tells whether `e` is the second side of the stored orientation.
    pub fn matching(&self, e: EdgeId, f: EdgeId) -> Option<(&Matching, bool)> {
        if e < f {
            self.matchings.get(&(e, f)).map(|m| (m, false))
        } else {
            self.matchings.get(&(f, e)).map(|m| (m, true))
        }
    }

    /// The colour `c'` on `f` blocked by colour `c` on `e`, i.e. `(c, c') ∈ M_{e,f}`.
    pub fn partner(
        &self,
        graph: &SimpleGraph,
        e: EdgeId,
        c: Colour,
        f: EdgeId,
    ) -> Result<Option<Colour>, CorrespondenceError> {
        if !graph.are_incident(e, f) {
            return Err(CorrespondenceError::NotIncident(e, f));
        }
        if c == 0 || c > self.q {
            return Err(CorrespondenceError::ColourOutOfRange { colour: c, q: self.q });
        }
        Ok(self.partner_unchecked(e, c, f))
    }

    pub fn partner_unchecked(&self, e: EdgeId, c: Colour, f: EdgeId) -> Option<Colour> {
        self.matching(e, f).and_then(|(m, rev)| m.oriented(c, rev))
    }

    /// Checks every structural invariant; returns the first violation found.
    pub fn validate(&self, graph: &SimpleGraph) -> Result<(), Violation> {
        if self.q == 0 {
            return Err(Violation::EmptyPalette);
        }
        let m = graph.edge_count() as EdgeId;
        for (&(a, b), matching) in &self.matchings {
            if a >= m || b >= m {
                return Err(Violation::EdgeOutOfRange { a, b });
            }
            if a >= b {
                return Err(Violation::NonCanonical(a, b));
            }
            if !graph.are_incident(a, b) {
                return Err(Violation::NotIncident(a, b));
            }
            let mut first = vec![false; self.q as usize + 1];
            let mut second = vec![false; self.q as usize + 1];
            for &(x, y) in matching.pairs() {
                for colour in [x, y] {
                    if colour == 0 || colour > self.q {
                        return Err(Violation::ColourOutOfRange { a, b, colour });
                    }
                }
                if std::mem::replace(&mut first[x as usize], true) {
                    return Err(Violation::RepeatedFirst { a, b, colour: x });
                }
                if std::mem::replace(&mut second[y as usize], true) {
                    return Err(Violation::RepeatedSecond { a, b, colour: y });
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> CorrespondenceFile {
        CorrespondenceFile {
            q: self.q,
            matchings: self
                .matchings
                .iter()
                .map(|(&(edge_a, edge_b), m)| MatchingEntry {
                    edge_a,
                    edge_b,
                    pairs: m.pairs().iter().map(|&(a, b)| [a, b]).collect(),
                })
                .collect(),
        }
    }
}

/// Serialized correspondence section of an instance file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    pub q: u32,
    pub matchings: Vec<MatchingEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingEntry {
    pub edge_a: EdgeId,
    pub edge_b: EdgeId,
    pub pairs: Vec<[Colour; 2]>,
}

impl From<&CorrespondenceFile> for EdgeCorrespondence {
    fn from(file: &CorrespondenceFile) -> Self {
        let matchings = file
            .matchings
            .iter()
            .map(|entry| {
                let pairs = entry.pairs.iter().map(|&[a, b]| (a, b)).collect();
                ((entry.edge_a, entry.edge_b), Matching::new(pairs))
            })
            .collect();
        EdgeCorrespondence::from_matchings(file.q, matchings)
    }
}

/// Every incident edge pair `(e, f)` with `e < f`, in ascending order.
pub fn incident_pairs(graph: &SimpleGraph) -> Vec<(EdgeId, EdgeId)> {
    let mut pairs = Vec::new();
    for v in 0..graph.vertex_count() {
        let at = graph.edges_at(v);
        for (i, &e) in at.iter().enumerate() {
            for &f in &at[i + 1..] {
                pairs.push((e.min(f), e.max(f)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Identity matching on every incident pair: valid colourings are exactly the
/// proper `q`-edge-colourings.
pub fn identity_correspondence(graph: &SimpleGraph, q: u32) -> Result<EdgeCorrespondence, CorrespondenceError> {
    if q == 0 {
        return Err(CorrespondenceError::EmptyPalette);
    }
    let matchings = incident_pairs(graph)
        .into_iter()
        .map(|p| (p, Matching::identity(q)))
        .collect();
    Ok(EdgeCorrespondence::from_matchings(q, matchings))
}

/// Identity on a cycle except cyclic shifts `(c, c mod q + 1)` on the given pairs.
pub fn shift_correspondence(
    graph: &SimpleGraph,
    q: u32,
    shifted_pairs: &[(EdgeId, EdgeId)],
) -> Result<EdgeCorrespondence, CorrespondenceError> {
    if !graph.is_cycle() {
        return Err(CorrespondenceError::NotACycle);
    }
    let mut corr = identity_correspondence(graph, q)?;
    for &(e, f) in shifted_pairs {
        if !graph.are_incident(e, f) {
            return Err(CorrespondenceError::NotIncident(e, f));
        }
        let shift = Matching::new((1..=q).map(|c| (c, c % q + 1)).collect());
        corr.matchings.insert((e.min(f), e.max(f)), shift);
    }
    Ok(corr)
}

/// Uniformly random partial matchings of size `⌊density·q⌋` on each incident pair.
pub fn random_correspondence(
    graph: &SimpleGraph,
    q: u32,
    density: f64,
    seed: u64,
) -> Result<EdgeCorrespondence, CorrespondenceError> {
    if q == 0 {
        return Err(CorrespondenceError::EmptyPalette);
    }
    let size = ((density.clamp(0.0, 1.0) * q as f64).floor() as usize).min(q as usize);
    let mut matchings = BTreeMap::new();
    if size > 0 {
        for (e, f) in incident_pairs(graph) {
            // fresh palette per pair so each matching depends only on (seed, e, f)
            let mut colours: Vec<Colour> = (1..=q).collect();
            let mut rng = keyed_rng([seed, (Purpose::Correspondence as u64) << 56, e as u64, f as u64]);
            colours.shuffle(&mut rng);
            let firsts: Vec<Colour> = colours[..size].to_vec();
            colours.shuffle(&mut rng);
            let pairs = firsts.into_iter().zip(colours[..size].iter().copied()).collect();
            matchings.insert((e, f), Matching::new(pairs));
        }
    }
    Ok(EdgeCorrespondence::from_matchings(q, matchings))
}

/// A (possibly partial) assignment of colours to edges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Colouring {
    colours: Vec<Option<Colour>>,
}

impl Colouring {
    pub fn uncoloured(edge_count: usize) -> Self {
        Colouring {
            colours: vec![None; edge_count],
        }
    }

    pub fn from_total(colours: &[Colour]) -> Self {
        Colouring {
            colours: colours.iter().map(|&c| Some(c)).collect(),
        }
    }

    pub fn from_options(colours: Vec<Option<Colour>>) -> Self {
        Colouring { colours }
    }

    pub fn edge_count(&self) -> usize {
        self.colours.len()
    }

    pub fn get(&self, e: EdgeId) -> Option<Colour> {
        self.colours.get(e as usize).copied().flatten()
    }

    pub fn set(&mut self, e: EdgeId, c: Option<Colour>) {
        self.colours[e as usize] = c;
    }

    pub fn as_slice(&self) -> &[Option<Colour>] {
        &self.colours
    }

    pub fn is_total(&self) -> bool {
        self.colours.iter().all(Option::is_some)
    }

    pub fn coloured_count(&self) -> usize {
        self.colours.iter().filter(|c| c.is_some()).count()
    }
}
