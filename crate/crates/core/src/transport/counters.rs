use std::fmt::Write as _;

use serde::Serialize;

use crate::Rank;

/// Execution phase a transport operation is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Setup,
    Sampling,
    Training,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Setup, Phase::Sampling, Phase::Training];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Sampling => "sampling",
            Phase::Training => "training",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub p2p_messages: u64,
    pub p2p_entries: u64,
    pub exit_markers: u64,
    pub p2p_messages_received: u64,
    pub p2p_entries_received: u64,
    pub exit_markers_received: u64,
    pub all_to_all: u64,
    pub all_to_all_entries: u64,
    pub all_to_all_entries_received: u64,
    pub all_reduce: u64,
    pub barriers: u64,
    pub supersteps: u64,
    pub max_superstep_p2p_entries: u64,
    /// Scheduler turns consumed; the simulator's logical clock.
    pub turns: u64,
    #[serde(skip)]
    pub(crate) superstep_entries: u64,
}

impl Counters {
    pub fn collectives(&self) -> u64 {
        self.all_to_all + self.all_reduce
    }

    fn add(&mut self, other: &Counters) {
        self.p2p_messages += other.p2p_messages;
        self.p2p_entries += other.p2p_entries;
        self.exit_markers += other.exit_markers;
        self.p2p_messages_received += other.p2p_messages_received;
        self.p2p_entries_received += other.p2p_entries_received;
        self.exit_markers_received += other.exit_markers_received;
        self.all_to_all += other.all_to_all;
        self.all_to_all_entries += other.all_to_all_entries;
        self.all_to_all_entries_received += other.all_to_all_entries_received;
        self.all_reduce += other.all_reduce;
        self.barriers += other.barriers;
        self.supersteps += other.supersteps;
        self.max_superstep_p2p_entries = self.max_superstep_p2p_entries.max(other.max_superstep_p2p_entries);
        self.turns += other.turns;
    }
}

/// Per-phase counters of one rank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounters {
    pub setup: Counters,
    pub sampling: Counters,
    pub training: Counters,
}

impl PhaseCounters {
    pub fn get(&self, phase: Phase) -> &Counters {
        match phase {
            Phase::Setup => &self.setup,
            Phase::Sampling => &self.sampling,
            Phase::Training => &self.training,
        }
    }

    pub(crate) fn get_mut(&mut self, phase: Phase) -> &mut Counters {
        match phase {
            Phase::Setup => &mut self.setup,
            Phase::Sampling => &mut self.sampling,
            Phase::Training => &mut self.training,
        }
    }

    pub fn total(&self) -> Counters {
        let mut t = Counters::default();
        for p in Phase::ALL {
            t.add(self.get(p));
        }
        t
    }
}

/// Communication observables split into the three terms of the cost model:
/// sampling synchronization, sampling point-to-point traffic and the
/// training all-to-all exchanges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostTerms {
    pub synch_all_reduce: u64,
    pub synch_barriers: u64,
    pub synch_all_to_all: u64,
    pub p2p_messages: u64,
    pub p2p_entries: u64,
    pub p2p_exit_markers: u64,
    pub training_all_to_all: u64,
    pub training_all_to_all_entries: u64,
}

impl CostTerms {
    pub fn from_counters(counters: &PhaseCounters) -> Self {
        let s = &counters.sampling;
        let t = &counters.training;
        CostTerms {
            synch_all_reduce: s.all_reduce,
            synch_barriers: s.barriers,
            synch_all_to_all: s.all_to_all,
            p2p_messages: s.p2p_messages,
            p2p_entries: s.p2p_entries,
            p2p_exit_markers: s.exit_markers,
            training_all_to_all: t.all_to_all,
            training_all_to_all_entries: t.all_to_all_entries,
        }
    }
}

/// Text report, one record per rank per phase.
pub fn counter_report(counters: &[PhaseCounters]) -> String {
    let mut out = String::new();
    for (rank, pc) in counters.iter().enumerate() {
        for phase in Phase::ALL {
            let c = pc.get(phase);
            let _ = writeln!(
                out,
                "rank={rank} phase={} p2p_messages={} p2p_entries={} exit_markers={} \
                 all_to_all={} all_to_all_entries={} all_reduce={} barriers={} supersteps={} \
                 max_superstep_p2p_entries={}",
                phase.name(),
                c.p2p_messages,
                c.p2p_entries,
                c.exit_markers,
                c.all_to_all,
                c.all_to_all_entries,
                c.all_reduce,
                c.barriers,
                c.supersteps,
                c.max_superstep_p2p_entries,
            );
        }
    }
    out
}

/// Parses one record of [`counter_report`] back into `(rank, phase, fields)`.
pub fn parse_counter_record(line: &str) -> Option<(Rank, String, Vec<(String, u64)>)> {
    let mut rank = None;
    let mut phase = None;
    let mut fields = Vec::new();
    for tok in line.split_ascii_whitespace() {
        let (k, v) = tok.split_once('=')?;
        match k {
            "rank" => rank = v.parse().ok(),
            "phase" => phase = Some(v.to_string()),
            _ => fields.push((k.to_string(), v.parse().ok()?)),
        }
    }
    Some((rank?, phase?, fields))
}
