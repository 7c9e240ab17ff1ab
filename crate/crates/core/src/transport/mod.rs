//! Rank-scoped message passing over an in-process simulator.
//!
//! [`run_world`] runs `p` rank programs as separate threads, but only one
//! holds the scheduler baton at a time and every transport call hands it
//! back. Collectives are rendezvous points; point-to-point messages are
//! delivered eagerly into preposted receive slots, FIFO per channel. In
//! [`ScheduleMode::Fuzzed`] the baton order and delivery timing are drawn
//! from a seeded generator, so a seed pins one interleaving out of many.
//!
//! Misuse that would hang a real launcher (a rank skipping a collective,
//! everybody polling while nothing can change) is reported as a deadlock
//! with a per-rank dump of what each rank was doing.

mod buffer;
mod counters;
mod sim;

pub use buffer::{MessageBuffer, DEFAULT_BUFFER_SIZE};
pub use counters::{counter_report, parse_counter_record, CostTerms, Counters, Phase, PhaseCounters};
pub use sim::{run_world, Endpoint, Event, WorldConfig, WorldReport};

use std::fmt;

use thiserror::Error;

use crate::Rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    #[default]
    Deterministic,
    Fuzzed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ReduceOp {
    Max,
    Sum,
}

/// Opaque token for a pending nonblocking operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestHandle(pub(crate) u64);

impl RequestHandle {
    /// Handle that refers to no operation.
    pub const NULL: RequestHandle = RequestHandle(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("aborted: {0}")]
    Aborted(String),
}

/// What one rank was doing when the world stopped making progress.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDiagnosis {
    pub rank: Rank,
    pub state: String,
    pub last_op: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockReport {
    pub step: u64,
    /// True when ranks were still runnable but only polling.
    pub livelock: bool,
    /// Ranks that have not reached the collective others are blocked in.
    pub missing_participants: Vec<Rank>,
    pub ranks: Vec<RankDiagnosis>,
}

impl DeadlockReport {
    pub fn blocked_ranks(&self) -> Vec<Rank> {
        self.ranks
            .iter()
            .filter(|d| d.state == "blocked")
            .map(|d| d.rank)
            .collect()
    }
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {}",
            if self.livelock { "no progress (livelock)" } else { "deadlock" },
            self.step
        )?;
        if !self.missing_participants.is_empty() {
            write!(f, "; collective still waiting for rank(s) {:?}", self.missing_participants)?;
        }
        for d in &self.ranks {
            write!(f, "; rank {} {} in {}", d.rank, d.state, d.last_op)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("protocol error: {0}")]
    Deadlock(DeadlockReport),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("rank {rank} failed: {source}")]
    RankFailed {
        rank: Rank,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("rank {rank} panicked: {message}")]
    RankPanicked { rank: Rank, message: String },
    #[error("world configuration: {0}")]
    Config(String),
}
