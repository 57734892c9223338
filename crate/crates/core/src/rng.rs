//! Keyed random streams.
//!
//! Every random decision is drawn from its own ChaCha8 stream whose 256-bit
//! key is built from the master seed and the decision's coordinates
//! (purpose, attempt, iteration, edge, colour, vertex). A decision can be
//! reproduced in isolation and no two decisions share a stream.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correspondence::Colour;
use crate::graph::{EdgeId, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum Purpose {
    Activation = 1,
    Flip = 2,
    Finisher = 3,
    Correspondence = 4,
    Batch = 5,
}

/// RNG for the stream identified by four key words.
pub fn keyed_rng(words: [u64; 4]) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Streams that would otherwise be drawn normally but are re-keyed with a salt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resalt {
    pub activation_edges: BTreeSet<EdgeId>,
    pub flip_vertices: BTreeSet<VertexId>,
    pub salt: u32,
}

/// Source of keyed streams for one engine run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    master: u64,
    resalt: Option<Resalt>,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Streams { master, resalt: None }
    }

    /// Re-keys the activation streams of some edges and the flip streams at
    /// some vertices, leaving every other stream untouched.
    pub fn with_resalt(mut self, resalt: Resalt) -> Self {
        self.resalt = Some(resalt);
        self
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    fn key(&self, purpose: Purpose, attempt: u32, iteration: u32, edge: EdgeId, colour: Colour, vertex: u32, salt: u32) -> [u64; 4] {
        let w1 = ((purpose as u64) << 56) | ((attempt as u64 & 0xff_ffff) << 32) | iteration as u64;
        let w2 = ((edge as u64) << 32) | colour as u64;
        let w3 = ((vertex as u64) << 32) | salt as u64;
        [self.master, w1, w2, w3]
    }

    /// Whether colour `c` is assigned to edge `e` in this iteration attempt.
    pub fn activation(&self, attempt: u32, iteration: u32, e: EdgeId, c: Colour, probability: f64) -> bool {
        let salt = match &self.resalt {
            Some(r) if r.activation_edges.contains(&e) => r.salt,
            _ => 0,
        };
        let mut rng = keyed_rng(self.key(Purpose::Activation, attempt, iteration, e, c, u32::MAX, salt));
        rng.random::<f64>() < probability
    }

    /// Equalizing coin flip `F(e, v, c)`; `true` means the flip returned 1 (keep).
    pub fn flip(&self, attempt: u32, iteration: u32, e: EdgeId, v: VertexId, c: Colour, probability: f64) -> bool {
        let salt = match &self.resalt {
            Some(r) if r.flip_vertices.contains(&v) => r.salt,
            _ => 0,
        };
        let mut rng = keyed_rng(self.key(Purpose::Flip, attempt, iteration, e, c, v, salt));
        rng.random::<f64>() < probability
    }

    /// Sequential stream for the resampling finisher.
    pub fn finisher(&self) -> ChaCha8Rng {
        keyed_rng(self.key(Purpose::Finisher, 0, 0, 0, 0, 0, 0))
    }
}

/// Seed for the `index`-th run of a batch driven by `master`.
pub fn batch_seed(master: u64, index: u64) -> u64 {
    keyed_rng([master, (Purpose::Batch as u64) << 56, index, 0]).random()
}
