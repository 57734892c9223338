//! The iterative wasteful random colouring procedure.
//!
//! Each iteration truncates the residual lists to the scheduled size, activates
//! every `(edge, colour)` pair independently, removes blocked colours from
//! neighbours (batch semantics, wastefully), performs the two per-endpoint
//! equalizing coin flips, and records which edges retained a colour. If the
//! resulting state violates the scheduled bounds for the next iteration the
//! iteration is rolled back and redrawn from fresh streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{Colour, Colouring, EdgeCorrespondence, Matching, Violation};
use crate::exec::Execution;
use crate::graph::{EdgeId, SimpleGraph, VertexId};
use crate::params::{keep_with_log, HaltReason, ParamTrajectory};
use crate::rng::Streams;
use crate::trace::{RunMeta, RunTrace, TraceRow};

/// Integer list size enforced for a real scheduled `L_i`.
pub fn list_target(l: f64) -> usize {
    if l <= 0.0 {
        0
    } else {
        (l - 1e-9).ceil() as usize
    }
}

/// Integer tracker bound for a real scheduled `T_i`.
pub fn tracker_bound(t: f64) -> usize {
    if t < 0.0 {
        0
    } else {
        (t + 1e-9).floor() as usize
    }
}

/// Default log factor: `ln Δ`, floored at 2.
pub fn default_ln_factor(delta: usize) -> f64 {
    (delta as f64).ln().max(2.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NibbleError {
    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(#[from] Violation),
    #[error("edge {edge} has {len} colours, fewer than the target {target}")]
    ListTooShort { edge: EdgeId, len: usize, target: usize },
    #[error("|T({edge},{vertex},{colour})| = {size} exceeds T_i = {bound}")]
    ProbabilityOverflow {
        edge: EdgeId,
        vertex: VertexId,
        colour: Colour,
        size: usize,
        bound: f64,
    },
    #[error("iteration {iteration}: property (1) failed on all {attempts} attempts")]
    RetryExhausted {
        iteration: usize,
        attempts: usize,
        worst: Vec<PropertyViolation>,
    },
    #[error("schedule has no rows")]
    ScheduleEmpty,
}

/// Set of colours in `1..=q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColourSet {
    bits: Vec<u64>,
    len: usize,
}

impl ColourSet {
    pub fn empty(q: u32) -> Self {
        ColourSet {
            bits: vec![0; (q as usize).div_ceil(64).max(1)],
            len: 0,
        }
    }

    pub fn full(q: u32) -> Self {
        let mut s = Self::empty(q);
        for c in 1..=q {
            s.insert(c);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, c: Colour) -> bool {
        let i = (c - 1) as usize;
        c >= 1 && i / 64 < self.bits.len() && self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, c: Colour) -> bool {
        let i = (c - 1) as usize;
        let was = self.bits[i / 64] >> (i % 64) & 1 == 1;
        self.bits[i / 64] |= 1 << (i % 64);
        if !was {
            self.len += 1;
        }
        !was
    }

    pub fn remove(&mut self, c: Colour) -> bool {
        if !self.contains(c) {
            return false;
        }
        let i = (c - 1) as usize;
        self.bits[i / 64] &= !(1 << (i % 64));
        self.len -= 1;
        true
    }

    /// Colours in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = Colour> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros();
                rest &= rest - 1;
                Some(w as u32 * 64 + b + 1)
            })
        })
    }

    /// Drops the largest colours until `target` remain.
    pub fn truncate(&mut self, target: usize) {
        while self.len > target {
            let last = self.iter().last().expect("non-empty");
            self.remove(last);
        }
    }
}

/// Tracker sets `T(e, v, c)` laid out densely by `(edge, side, colour)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trackers {
    q: u32,
    offsets: Vec<u32>,
    members: Vec<EdgeId>,
}

impl Trackers {
    fn slot(&self, e: EdgeId, side: usize, c: Colour) -> usize {
        ((e as usize * 2 + side) * self.q as usize) + (c - 1) as usize
    }

    pub fn get(&self, e: EdgeId, side: usize, c: Colour) -> &[EdgeId] {
        let s = self.slot(e, side, c);
        &self.members[self.offsets[s] as usize..self.offsets[s + 1] as usize]
    }

    fn from_parts(q: u32, parts: Vec<(Vec<u32>, Vec<EdgeId>)>) -> Self {
        let total: usize = parts.iter().map(|p| p.1.len()).sum();
        let mut offsets = Vec::with_capacity(parts.len() * 2 * q as usize + 1);
        let mut members = Vec::with_capacity(total);
        offsets.push(0);
        for (counts, mem) in parts {
            let mut acc = members.len() as u32;
            for c in counts {
                acc += c;
                offsets.push(acc);
            }
            members.extend(mem);
        }
        Trackers { q, offsets, members }
    }
}

/// Neighbour `edge` of some owner edge, seen from one endpoint of the owner.
#[derive(Debug, Clone, Copy)]
pub struct Link<'a> {
    pub edge: EdgeId,
    /// Endpoint of `edge` that is not shared with the owner.
    pub far: VertexId,
    /// Index of `far` among `edge`'s endpoints.
    pub far_side: usize,
    /// Index of the shared vertex among `edge`'s endpoints.
    pub near_side: usize,
    matching: Option<&'a Matching>,
    reversed: bool,
}

impl Link<'_> {
    /// Colour on `self.edge` that is blocked by colour `c` on the owner.
    pub fn partner(&self, c: Colour) -> Option<Colour> {
        self.matching.and_then(|m| m.oriented(c, self.reversed))
    }

    /// Colour on the owner that is blocked by colour `c` on `self.edge`.
    pub fn partner_back(&self, c: Colour) -> Option<Colour> {
        self.matching.and_then(|m| m.oriented(c, !self.reversed))
    }
}

/// Per-edge, per-endpoint neighbour tables with their matchings resolved.
pub struct BlockingIndex<'a> {
    graph: &'a SimpleGraph,
    links: Vec<[Vec<Link<'a>>; 2]>,
}

impl<'a> BlockingIndex<'a> {
    pub fn new(graph: &'a SimpleGraph, corr: &'a EdgeCorrespondence) -> Self {
        let links = (0..graph.edge_count() as EdgeId)
            .map(|e| {
                let (u, v) = graph.endpoints(e);
                [u, v].map(|x| {
                    graph
                        .incidence_at(e, x)
                        .map(|f| {
                            let (fa, fb) = graph.endpoints(f);
                            let (far, far_side, near_side) = if fa == x { (fb, 1, 0) } else { (fa, 0, 1) };
                            let (matching, reversed) = match corr.matching(e, f) {
                                Some((m, r)) => (Some(m), r),
                                None => (None, false),
                            };
                            Link {
                                edge: f,
                                far,
                                far_side,
                                near_side,
                                matching,
                                reversed,
                            }
                        })
                        .collect()
                })
            })
            .collect();
        BlockingIndex { graph, links }
    }

    pub fn graph(&self) -> &'a SimpleGraph {
        self.graph
    }

    pub fn links(&self, e: EdgeId, side: usize) -> &[Link<'a>] {
        &self.links[e as usize][side]
    }

    /// Neighbours of `e` at both endpoints with the side they sit on.
    pub fn all_links(&self, e: EdgeId) -> impl Iterator<Item = (usize, &Link<'a>)> {
        (0..2).flat_map(move |s| self.links[e as usize][s].iter().map(move |l| (s, l)))
    }
}

/// Full engine state between (and within) iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct NibbleState {
    q: u32,
    lists: Vec<ColourSet>,
    assigned: Vec<Vec<Colour>>,
    retained: Vec<Vec<Colour>>,
    coloured: Vec<bool>,
    trackers: Trackers,
    iteration: usize,
    last: Option<IterationRecord>,
}

impl NibbleState {
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn edge_count(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, e: EdgeId) -> &ColourSet {
        &self.lists[e as usize]
    }

    pub fn assigned(&self, e: EdgeId) -> &[Colour] {
        &self.assigned[e as usize]
    }

    pub fn retained(&self, e: EdgeId) -> &[Colour] {
        &self.retained[e as usize]
    }

    pub fn is_uncoloured(&self, e: EdgeId) -> bool {
        !self.coloured[e as usize]
    }

    pub fn uncoloured_count(&self) -> usize {
        self.coloured.iter().filter(|&&c| !c).count()
    }

    pub fn tracker(&self, e: EdgeId, side: usize, c: Colour) -> &[EdgeId] {
        self.trackers.get(e, side, c)
    }

    pub fn trackers(&self) -> &Trackers {
        &self.trackers
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Record of the most recent completed iteration.
    pub fn last_record(&self) -> Option<&IterationRecord> {
        self.last.as_ref()
    }

    /// Retained colours as a partial colouring (smallest retained colour wins).
    pub fn partial_colouring(&self) -> Colouring {
        Colouring::from_options(self.retained.iter().map(|r| r.iter().min().copied()).collect())
    }
}

/// What happened to each live `(edge, side, colour)` slot in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub attempt: u32,
    q: u32,
    /// Per-slot flags: bit 0 = present in `L_i(e)`, bit 1 = blocked by an
    /// activated neighbour at this side, bit 2 = equalizing flip returned 0.
    flags: Vec<u8>,
    pub activations: Vec<Vec<Colour>>,
    pub newly_retained: Vec<EdgeId>,
}

const PRESENT: u8 = 1;
const BLOCKED: u8 = 2;
const FLIPPED_OUT: u8 = 4;

impl IterationRecord {
    fn slot(&self, e: EdgeId, side: usize, c: Colour) -> usize {
        ((e as usize * 2 + side) * self.q as usize) + (c - 1) as usize
    }

    /// Whether `L(e)` lost `c` at the endpoint with index `side`.
    pub fn lost_at(&self, e: EdgeId, side: usize, c: Colour) -> bool {
        let f = self.flags[self.slot(e, side, c)];
        f & PRESENT != 0 && f & (BLOCKED | FLIPPED_OUT) != 0
    }

    pub fn blocked_at(&self, e: EdgeId, side: usize, c: Colour) -> bool {
        self.flags[self.slot(e, side, c)] & BLOCKED != 0
    }

    pub fn flipped_out(&self, e: EdgeId, side: usize, c: Colour) -> bool {
        self.flags[self.slot(e, side, c)] & FLIPPED_OUT != 0
    }

    pub fn was_present(&self, e: EdgeId, c: Colour) -> bool {
        self.flags[self.slot(e, 0, c)] & PRESENT != 0
    }
}

/// Colours drawn in step 2(b)i, per edge, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activations(pub Vec<Vec<Colour>>);

/// Per-slot loss flags from conflict removal (bit `BLOCKED`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalRecord {
    q: u32,
    flags: Vec<u8>,
}

/// Per-slot equalizing flip outcomes (bit `FLIPPED_OUT`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipRecord {
    flags: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropertyViolation {
    ListShort { edge: EdgeId, len: usize, target: usize },
    TrackerLarge { edge: EdgeId, side: usize, colour: Colour, size: usize, bound: usize },
}

impl PropertyViolation {
    fn severity(&self) -> usize {
        match *self {
            PropertyViolation::ListShort { len, target, .. } => target - len,
            PropertyViolation::TrackerLarge { size, bound, .. } => size - bound,
        }
    }
}

/// Result of [`Nibble::finalize_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub property_holds: bool,
    pub violations: Vec<PropertyViolation>,
    pub newly_retained: usize,
    pub uncoloured: usize,
    pub min_list: usize,
    pub mean_list: f64,
    pub max_tracker: usize,
    pub mean_tracker: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Overrides `max(ln Δ, 2)`.
    pub ln_factor: Option<f64>,
    pub retry_limit: usize,
    /// `ε` used by the T′ bound; defaults to the schedule's, else `q/Δ - 1`.
    pub eps: Option<f64>,
    pub diagnostics: bool,
    pub execution: Execution,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            ln_factor: None,
            retry_limit: 50,
            eps: None,
            diagnostics: true,
            execution: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Schedule(HaltReason),
    AllColoured,
    /// `L_i · ln_factor <= 1`: activation probability would exceed 1.
    Degenerate,
    NoEdges,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::Schedule(h) => write!(f, "{h}"),
            StopReason::AllColoured => write!(f, "all_coloured"),
            StopReason::Degenerate => write!(f, "degenerate"),
            StopReason::NoEdges => write!(f, "no_edges"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NibbleRun {
    pub colouring: Colouring,
    pub state: NibbleState,
    pub trace: RunTrace,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct NibbleFailure {
    pub error: NibbleError,
    pub trace: RunTrace,
}

/// Diagnostic tallies for one attempt.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    loss_events: u64,
    loss_trials: u64,
    retention_kept: u64,
    retention_trials: u64,
    t_prime_sum: u64,
    t_prime_bound_sum: f64,
    t_prime_trackers: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.loss_events += o.loss_events;
        self.loss_trials += o.loss_trials;
        self.retention_kept += o.retention_kept;
        self.retention_trials += o.retention_trials;
        self.t_prime_sum += o.t_prime_sum;
        self.t_prime_bound_sum += o.t_prime_bound_sum;
        self.t_prime_trackers += o.t_prime_trackers;
    }
}

/// The engine, bound to one graph and correspondence.
pub struct Nibble<'a> {
    index: BlockingIndex<'a>,
    corr: &'a EdgeCorrespondence,
    config: EngineConfig,
}

impl<'a> Nibble<'a> {
    pub fn new(graph: &'a SimpleGraph, corr: &'a EdgeCorrespondence, config: EngineConfig) -> Result<Self, NibbleError> {
        corr.validate(graph)?;
        Ok(Nibble {
            index: BlockingIndex::new(graph, corr),
            corr,
            config,
        })
    }

    pub fn graph(&self) -> &'a SimpleGraph {
        self.index.graph
    }

    pub fn correspondence(&self) -> &'a EdgeCorrespondence {
        self.corr
    }

    pub fn index(&self) -> &BlockingIndex<'a> {
        &self.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn ln_factor(&self) -> f64 {
        self.config
            .ln_factor
            .unwrap_or_else(|| default_ln_factor(self.graph().max_degree()))
    }

    fn q(&self) -> u32 {
        self.corr.q()
    }

    fn m(&self) -> usize {
        self.graph().edge_count()
    }

    fn slot(&self, e: EdgeId, side: usize, c: Colour) -> usize {
        ((e as usize * 2 + side) * self.q() as usize) + (c - 1) as usize
    }

    /// `L(e) = {1..q}` everywhere, trackers at their initial value.
    pub fn init_state(&self) -> NibbleState {
        let q = self.q();
        let m = self.m();
        let mut state = NibbleState {
            q,
            lists: vec![ColourSet::full(q); m],
            assigned: vec![Vec::new(); m],
            retained: vec![Vec::new(); m],
            coloured: vec![false; m],
            trackers: Trackers {
                q,
                offsets: vec![0; 2 * m * q as usize + 1],
                members: Vec::new(),
            },
            iteration: 0,
            last: None,
        };
        state.trackers = self.compute_trackers(&state);
        state
    }

    /// Recomputes every `T(e, v, c)` from its definition.
    pub fn compute_trackers(&self, state: &NibbleState) -> Trackers {
        let q = self.q();
        let parts = self.config.execution.map(self.m(), |e| {
            let e = e as EdgeId;
            let mut counts = vec![0u32; 2 * q as usize];
            let mut members = Vec::new();
            if state.is_uncoloured(e) {
                for side in 0..2 {
                    let links = self.index.links(e, side);
                    for c in state.lists[e as usize].iter() {
                        let before = members.len();
                        for link in links {
                            if state.coloured[link.edge as usize] {
                                continue;
                            }
                            if let Some(cp) = link.partner(c) {
                                if state.lists[link.edge as usize].contains(cp) {
                                    members.push(link.edge);
                                }
                            }
                        }
                        counts[side * q as usize + (c - 1) as usize] = (members.len() - before) as u32;
                    }
                }
            }
            (counts, members)
        });
        Trackers::from_parts(q, parts)
    }

    /// Step 2(a): every uncoloured list is cut down to exactly `target` colours
    /// by dropping its largest colours.
    pub fn truncate_lists(&self, state: &mut NibbleState, target: usize) -> Result<(), NibbleError> {
        for e in 0..self.m() {
            if state.coloured[e] {
                continue;
            }
            let len = state.lists[e].len();
            if len < target {
                return Err(NibbleError::ListTooShort {
                    edge: e as EdgeId,
                    len,
                    target,
                });
            }
            state.lists[e].truncate(target);
        }
        state.trackers = self.compute_trackers(state);
        Ok(())
    }

    /// Step 2(b)i: each `(uncoloured e, c ∈ L(e))` is assigned with probability
    /// `1 / (L_i · ln_factor)`.
    pub fn activation_round(
        &self,
        state: &NibbleState,
        l_i: f64,
        ln_factor: f64,
        streams: &Streams,
        attempt: u32,
    ) -> Activations {
        let p = 1.0 / (l_i * ln_factor);
        let iteration = state.iteration as u32;
        Activations(self.config.execution.map(self.m(), |e| {
            if state.coloured[e] {
                return Vec::new();
            }
            state.lists[e]
                .iter()
                .filter(|&c| streams.activation(attempt, iteration, e as EdgeId, c, p))
                .collect()
        }))
    }

    /// Step 2(b)ii with simultaneous semantics: every activated `(e, c)` strips
    /// its partner colour from each uncoloured neighbour, whether or not `c`
    /// itself survives.
    pub fn conflict_removal(&self, state: &mut NibbleState, activations: &Activations) -> RemovalRecord {
        let q = self.q();
        // blocked[e][side][c]: some activated neighbour at that side blocks c on e
        let per_edge: Vec<Vec<u8>> = self.config.execution.map(self.m(), |e| {
            let mut flags = vec![0u8; 2 * q as usize];
            if state.coloured[e] {
                return flags;
            }
            let e = e as EdgeId;
            for (side, link) in self.index.all_links(e) {
                for &cf in &activations.0[link.edge as usize] {
                    if let Some(c) = link.partner_back(cf) {
                        if state.lists[e as usize].contains(c) {
                            flags[side * q as usize + (c - 1) as usize] |= BLOCKED;
                        }
                    }
                }
            }
            flags
        });
        for (e, acts) in activations.0.iter().enumerate() {
            state.assigned[e] = acts.clone();
        }
        for (e, flags) in per_edge.iter().enumerate() {
            for c in 1..=q {
                let i = (c - 1) as usize;
                if (flags[i] | flags[q as usize + i]) & BLOCKED != 0 {
                    state.lists[e].remove(c);
                    state.assigned[e].retain(|&a| a != c);
                }
            }
        }
        state.trackers = self.compute_trackers(state);
        RemovalRecord {
            q,
            flags: per_edge.into_iter().flatten().collect(),
        }
    }

    /// Step 2(c) as two independent flips `F(e,u,c)`, `F(e,v,c)` with success
    /// probability `Keep_i / (1 - 1/(L_i ln))^{|T_i(e,·,c)|}`.
    ///
    /// `snapshot` must be the state at the start of step 2 (after truncation):
    /// its lists and trackers define `L_i(e)` and `T_i(e, v, c)`. A flip is
    /// drawn for every colour of `L_i(e)` but only removes colours still present.
    #[allow(clippy::too_many_arguments)]
    pub fn equalizing_flips(
        &self,
        state: &mut NibbleState,
        snapshot: &NibbleState,
        keep: f64,
        l_i: f64,
        ln_factor: f64,
        streams: &Streams,
        attempt: u32,
    ) -> Result<FlipRecord, NibbleError> {
        let q = self.q();
        let log_step = (-1.0 / (l_i * ln_factor)).ln_1p();
        let iteration = snapshot.iteration as u32;
        let graph = self.graph();
        let per_edge: Vec<Result<Vec<u8>, NibbleError>> = self.config.execution.map(self.m(), |e| {
            let mut flags = vec![0u8; 2 * q as usize];
            if snapshot.coloured[e] {
                return Ok(flags);
            }
            let e = e as EdgeId;
            let (u, v) = graph.endpoints(e);
            for (side, vertex) in [(0usize, u), (1, v)] {
                for c in snapshot.lists[e as usize].iter() {
                    let size = snapshot.trackers.get(e, side, c).len();
                    let eq = keep / (size as f64 * log_step).exp();
                    if eq > 1.0 + 1e-12 {
                        return Err(NibbleError::ProbabilityOverflow {
                            edge: e,
                            vertex,
                            colour: c,
                            size,
                            bound: (keep.ln() / log_step),
                        });
                    }
                    if !streams.flip(attempt, iteration, e, vertex, c, eq.min(1.0)) {
                        flags[side * q as usize + (c - 1) as usize] |= FLIPPED_OUT;
                    }
                }
            }
            Ok(flags)
        });
        let per_edge = per_edge.into_iter().collect::<Result<Vec<_>, _>>()?;
        for (e, flags) in per_edge.iter().enumerate() {
            for c in 1..=q {
                let i = (c - 1) as usize;
                if (flags[i] | flags[q as usize + i]) & FLIPPED_OUT != 0 && state.lists[e].remove(c) {
                    state.assigned[e].retain(|&a| a != c);
                }
            }
        }
        Ok(FlipRecord {
            flags: per_edge.into_iter().flatten().collect(),
        })
    }

    /// Marks edges with a surviving assigned colour as coloured, recomputes the
    /// trackers and checks property (1) against the next scheduled bounds.
    pub fn finalize_iteration(&self, state: &mut NibbleState, next: Option<(usize, usize)>) -> IterationOutcome {
        let mut newly = 0;
        for e in 0..self.m() {
            if !state.coloured[e] && !state.assigned[e].is_empty() {
                state.retained[e] = std::mem::take(&mut state.assigned[e]);
                state.coloured[e] = true;
                newly += 1;
            }
            state.assigned[e].clear();
        }
        state.trackers = self.compute_trackers(state);
        state.iteration += 1;
        let mut outcome = self.check_property(state, next);
        outcome.newly_retained = newly;
        outcome
    }

    fn check_property(&self, state: &NibbleState, next: Option<(usize, usize)>) -> IterationOutcome {
        let mut violations = Vec::new();
        let (mut min_list, mut list_sum, mut unc) = (usize::MAX, 0usize, 0usize);
        let (mut max_tracker, mut tracker_sum, mut trackers) = (0usize, 0usize, 0usize);
        for e in 0..self.m() as EdgeId {
            if !state.is_uncoloured(e) {
                continue;
            }
            unc += 1;
            let list = &state.lists[e as usize];
            min_list = min_list.min(list.len());
            list_sum += list.len();
            if let Some((target, _)) = next {
                if list.len() < target {
                    violations.push(PropertyViolation::ListShort {
                        edge: e,
                        len: list.len(),
                        target,
                    });
                }
            }
            for side in 0..2 {
                for c in list.iter() {
                    let size = state.trackers.get(e, side, c).len();
                    max_tracker = max_tracker.max(size);
                    tracker_sum += size;
                    trackers += 1;
                    if let Some((_, bound)) = next {
                        if size > bound {
                            violations.push(PropertyViolation::TrackerLarge {
                                edge: e,
                                side,
                                colour: c,
                                size,
                                bound,
                            });
                        }
                    }
                }
            }
        }
        IterationOutcome {
            property_holds: violations.is_empty(),
            violations,
            newly_retained: 0,
            uncoloured: unc,
            min_list: if unc == 0 { 0 } else { min_list },
            mean_list: if unc == 0 { 0.0 } else { list_sum as f64 / unc as f64 },
            max_tracker,
            mean_tracker: if trackers == 0 { 0.0 } else { tracker_sum as f64 / trackers as f64 },
            attempts: 1,
        }
    }

    fn record(&self, before: &NibbleState, acts: Activations, removal: &RemovalRecord, flips: &FlipRecord, after: &NibbleState, attempt: u32) -> IterationRecord {
        let q = self.q();
        let mut flags: Vec<u8> = removal.flags.iter().zip(&flips.flags).map(|(a, b)| a | b).collect();
        for e in 0..self.m() as EdgeId {
            if before.coloured[e as usize] {
                continue;
            }
            for c in before.lists[e as usize].iter() {
                for side in 0..2 {
                    flags[self.slot(e, side, c)] |= PRESENT;
                }
            }
        }
        let newly_retained = (0..self.m() as EdgeId)
            .filter(|&e| before.is_uncoloured(e) && !after.is_uncoloured(e))
            .collect();
        IterationRecord {
            iteration: before.iteration,
            attempt,
            q,
            flags,
            activations: acts.0,
            newly_retained,
        }
    }

    /// `T′_{i+1}(e,v,c)`: members `f = vw` of `T_i(e,v,c)` that retained nothing
    /// and whose list did not lose the colour blocking `c:e` at `w`.
    ///
    /// `after` must be the state right after the iteration that started at `before`.
    pub fn compute_t_prime(&self, before: &NibbleState, after: &NibbleState, e: EdgeId, side: usize, c: Colour) -> Vec<EdgeId> {
        let record = after.last_record().expect("after-state carries an iteration record");
        self.t_prime_members(before, after, record, e, side, c).collect()
    }

    fn t_prime_members<'s>(
        &'s self,
        before: &'s NibbleState,
        after: &'s NibbleState,
        record: &'s IterationRecord,
        e: EdgeId,
        side: usize,
        c: Colour,
    ) -> impl Iterator<Item = EdgeId> + 's {
        // tracker members are stored in link order, so one forward walk suffices
        let mut tracked = before.trackers.get(e, side, c).iter().peekable();
        self.index.links(e, side).iter().filter_map(move |link| {
            if tracked.next_if_eq(&&link.edge).is_none() {
                return None;
            }
            if !after.is_uncoloured(link.edge) {
                return None;
            }
            let cp = link.partner(c)?;
            if record.lost_at(link.edge, link.far_side, cp) {
                return None;
            }
            Some(link.edge)
        })
    }

    fn tally(&self, before: &NibbleState, after: &NibbleState, record: &IterationRecord, keep: f64, ln_factor: f64, eps: f64) -> Tally {
        let mut t = Tally::default();
        let factor = (1.0 - (1.0 - eps / 2.0) * keep * keep / ln_factor) * keep;
        for e in 0..self.m() as EdgeId {
            if !before.is_uncoloured(e) {
                continue;
            }
            for c in before.lists[e as usize].iter() {
                let lost = [record.lost_at(e, 0, c), record.lost_at(e, 1, c)];
                t.loss_trials += 2;
                t.loss_events += lost.iter().filter(|&&l| l).count() as u64;
                t.retention_trials += 1;
                if !lost[0] && !lost[1] {
                    t.retention_kept += 1;
                }
                for side in 0..2 {
                    let size = before.trackers.get(e, side, c).len();
                    let tp = self.t_prime_members(before, after, record, e, side, c).count();
                    t.t_prime_sum += tp as u64;
                    t.t_prime_bound_sum += size as f64 * factor;
                    t.t_prime_trackers += 1;
                }
            }
        }
        t
    }

    /// Runs one iteration attempt from the post-truncation state `base`.
    fn attempt(
        &self,
        base: &NibbleState,
        l_i: f64,
        keep: f64,
        ln_factor: f64,
        streams: &Streams,
        attempt: u32,
        next: (usize, usize),
    ) -> Result<(NibbleState, IterationOutcome), NibbleError> {
        let mut s = base.clone();
        let acts = self.activation_round(&s, l_i, ln_factor, streams, attempt);
        let removal = self.conflict_removal(&mut s, &acts);
        let flips = self.equalizing_flips(&mut s, base, keep, l_i, ln_factor, streams, attempt)?;
        let outcome = self.finalize_iteration(&mut s, Some(next));
        s.last = Some(self.record(base, acts, &removal, &flips, &s, attempt));
        Ok((s, outcome))
    }

    fn effective_eps(&self, schedule: &ParamTrajectory) -> f64 {
        self.config
            .eps
            .or(schedule.config.map(|c| c.eps))
            .unwrap_or_else(|| {
                let d = self.graph().max_degree().max(1) as f64;
                (self.q() as f64 / d - 1.0).max(0.0)
            })
    }

    /// Runs the procedure over `schedule` (row `i` parameterizes iteration `i`;
    /// the final row is the halting row).
    pub fn run(&self, schedule: &ParamTrajectory, seed: u64) -> Result<NibbleRun, NibbleFailure> {
        self.run_with_streams(schedule, &Streams::new(seed))
    }

    pub fn run_with_streams(&self, schedule: &ParamTrajectory, streams: &Streams) -> Result<NibbleRun, NibbleFailure> {
        let ln_factor = self.ln_factor();
        let eps = self.effective_eps(schedule);
        let mut trace = RunTrace {
            meta: RunMeta {
                seed: streams.master(),
                eps,
                delta: self.graph().max_degree(),
                q: self.q(),
                edges: self.m(),
                ..RunMeta::default()
            },
            rows: Vec::new(),
        };
        let fail = |error, trace: RunTrace| Err(NibbleFailure { error, trace });
        if schedule.rows.is_empty() {
            return fail(NibbleError::ScheduleEmpty, trace);
        }
        let mut state = self.init_state();
        let stop = 'run: {
            if self.m() == 0 {
                break 'run StopReason::NoEdges;
            }
            for i in 0.. {
                if i + 1 >= schedule.rows.len() {
                    break 'run StopReason::Schedule(schedule.halt);
                }
                if state.uncoloured_count() == 0 {
                    break 'run StopReason::AllColoured;
                }
                let row = schedule.rows[i];
                let next = schedule.rows[i + 1];
                let keep = match keep_with_log(row.l, row.t, ln_factor) {
                    Ok(k) => k,
                    Err(_) => break 'run StopReason::Degenerate,
                };
                let mut base = state.clone();
                if let Err(e) = self.truncate_lists(&mut base, list_target(row.l)) {
                    return fail(e, trace);
                }
                let next_bounds = (list_target(next.l), tracker_bound(next.t));
                let mut tally = Tally::default();
                let mut worst: Vec<PropertyViolation> = Vec::new();
                let mut accepted = None;
                let mut last_outcome = None;
                let limit = self.config.retry_limit.max(1);
                for attempt in 0..limit {
                    let (s, mut outcome) = match self.attempt(&base, row.l, keep, ln_factor, streams, attempt as u32, next_bounds) {
                        Ok(r) => r,
                        Err(e) => return fail(e, trace),
                    };
                    if self.config.diagnostics {
                        let record = s.last.as_ref().expect("record");
                        tally.add(&self.tally(&base, &s, record, keep, ln_factor, eps));
                    }
                    outcome.attempts = attempt + 1;
                    if outcome.property_holds {
                        accepted = Some((s, outcome));
                        break;
                    }
                    let mut v = std::mem::take(&mut outcome.violations);
                    v.sort_by_key(|x| std::cmp::Reverse(x.severity()));
                    v.truncate(8);
                    worst = v;
                    last_outcome = Some(outcome);
                }
                let row_for = |outcome: &IterationOutcome| TraceRow {
                    i,
                    sched_l: row.l,
                    sched_t: row.t,
                    keep,
                    ln_factor,
                    eps,
                    min_list: outcome.min_list,
                    mean_list: outcome.mean_list,
                    max_tracker: outcome.max_tracker,
                    mean_tracker: outcome.mean_tracker,
                    mean_t_prime: if tally.t_prime_trackers == 0 {
                        0.0
                    } else {
                        tally.t_prime_sum as f64 / tally.t_prime_trackers as f64
                    },
                    newly_retained: outcome.newly_retained,
                    uncoloured: outcome.uncoloured,
                    retries: outcome.attempts - 1,
                    loss_events: tally.loss_events,
                    loss_trials: tally.loss_trials,
                    retention_kept: tally.retention_kept,
                    retention_trials: tally.retention_trials,
                    t_prime_sum: tally.t_prime_sum,
                    t_prime_bound_sum: tally.t_prime_bound_sum,
                    t_prime_trackers: tally.t_prime_trackers,
                };
                let Some((s, outcome)) = accepted else {
                    // the exhausted iteration still reports its pooled tallies
                    trace.rows.push(row_for(&last_outcome.expect("at least one attempt")));
                    trace.meta.halt_reason = "retry_exhausted".into();
                    return fail(
                        NibbleError::RetryExhausted {
                            iteration: i,
                            attempts: limit,
                            worst,
                        },
                        trace,
                    );
                };
                trace.rows.push(row_for(&outcome));
                state = s;
            }
            unreachable!()
        };
        trace.meta.halt_reason = stop.to_string();
        Ok(NibbleRun {
            colouring: state.partial_colouring(),
            state,
            trace,
            stop,
        })
    }
}
