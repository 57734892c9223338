//! Correspondence (DP) edge colouring by the semi-random nibble method.
//!
//! The crate is organised around the pipeline
//! [`nibble`] (iterative random colouring) → [`finisher`] (resampling
//! completion) → [`validate`] (independent checker), with [`params`] supplying
//! the schedules and [`oracle`] deciding tiny instances exactly.

pub mod batch;
pub mod correspondence;
pub mod exec;
pub mod finisher;
pub mod graph;
pub mod instance;
pub mod nibble;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod trace;
pub mod validate;

pub use correspondence::{Colour, Colouring, EdgeCorrespondence, Matching};
pub use exec::Execution;
pub use graph::{EdgeId, SimpleGraph, VertexId};
pub use nibble::{EngineConfig, Nibble, NibbleError, NibbleState};
pub use params::{ParamTrajectory, TrajectoryConfig};
pub use trace::RunTrace;
