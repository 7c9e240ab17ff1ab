//! Owner-computes distributed graph embedding.
//!
//! A graph is converted to compressed sparse row form, split into 1-D vertex
//! partitions and trained with LINE-style second-order SGD. Every rank owns a
//! contiguous vertex range and is the only writer of the vertex and context
//! embeddings for that range; remote effects travel as accumulated deltas.
//! Positive pairs come from distributed random walks. Ranks run as
//! independent execution contexts over a deterministic message-passing
//! simulator ([`transport`]), so a multi-rank run is reproducible on one
//! machine.

pub mod alias;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod training;
pub mod transport;

pub use error::{Error, Result};

/// Dense vertex identifier, `0..num_vertices`.
pub type VertexId = u32;

/// Rank identifier, `0..world_size`.
pub type Rank = usize;

/// A positive (or augmented) training pair `(u, v)`; `u` is owned by the rank holding it.
pub type Pair = (VertexId, VertexId);
