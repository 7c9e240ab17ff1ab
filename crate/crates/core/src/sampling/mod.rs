//! Positive-pair generation from distributed random walks.
//!
//! A walk starts from a weighted random local edge on every rank and advances
//! level by level. Steps that stay on the rank are recorded immediately; steps
//! that cross to a ghost vertex travel to its owner in fixed-size buffers and
//! are recorded there. [`Sampler`] wraps the walk in the batch loop with one of
//! two synchronization rules and one of six variants.

mod pairs;
mod walk;

pub use pairs::{augment_pair_pool, BatchRecord, Sampler, SamplerStats};
pub use walk::{WalkOutcome, Walker};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::LocalPartition;
use crate::transport::DEFAULT_BUFFER_SIZE;
use crate::{Pair, VertexId};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("rank {rank} has no local edges to draw a root from")]
    EmptyPartition { rank: usize },
    #[error("augmentation: {0}")]
    Augmentation(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("walk protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Local,
    Fresh,
    ReuseSpill,
    RefreshSpill,
    AugSingle,
    AugPair,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Local,
        Variant::Fresh,
        Variant::ReuseSpill,
        Variant::RefreshSpill,
        Variant::AugSingle,
        Variant::AugPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Local => "local",
            Variant::Fresh => "fresh",
            Variant::ReuseSpill => "reuse-spill",
            Variant::RefreshSpill => "refresh-spill",
            Variant::AugSingle => "aug-single",
            Variant::AugPair => "aug-pair",
        }
    }

    /// Samples are generated once, before the training loop.
    pub fn is_augmented(self) -> bool {
        matches!(self, Variant::AugSingle | Variant::AugPair)
    }

    pub fn is_remote(self) -> bool {
        self != Variant::Local
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| SamplingError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    AllReduce,
    IBarrier,
}

impl SyncMode {
    pub fn name(self) -> &'static str {
        match self {
            SyncMode::AllReduce => "allreduce",
            SyncMode::IBarrier => "ibarrier",
        }
    }
}

impl fmt::Display for SyncMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyncMode {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allreduce" => Ok(SyncMode::AllReduce),
            "ibarrier" => Ok(SyncMode::IBarrier),
            _ => Err(SamplingError::Config(format!("unknown sync mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkConfig {
    /// Global walk length.
    pub steps: u64,
    pub buffer_size: usize,
    pub window: usize,
    pub variant: Variant,
    pub sync: SyncMode,
    pub batch_size: usize,
    pub num_batches: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            buffer_size: DEFAULT_BUFFER_SIZE,
            window: 2,
            variant: Variant::Fresh,
            sync: SyncMode::AllReduce,
            batch_size: 1024,
            num_batches: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: &str| Err(SamplingError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("walk steps must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.buffer_size == 0 {
            return bad("buffer size must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.variant.is_augmented() && self.sync != SyncMode::IBarrier {
            return bad("augmented variants require ibarrier synchronization");
        }
        Ok(())
    }

    /// Copy with augmented variants switched to ibarrier sync.
    pub fn normalized(mut self) -> Self {
        if self.variant.is_augmented() {
            self.sync = SyncMode::IBarrier;
        }
        self
    }
}

/// Draws a local edge with probability proportional to its weight.
pub fn sample_root_edge<R: Rng + ?Sized>(part: &LocalPartition, rng: &mut R) -> Result<Pair, SamplingError> {
    let total = part.total_weight();
    if part.local_edge_count() == 0 || !(total > 0.0) {
        return Err(SamplingError::EmptyPartition { rank: part.rank() });
    }
    let i = part
        .locate(0..part.local_edge_count(), rng.gen::<f64>() * total)
        .ok_or(SamplingError::EmptyPartition { rank: part.rank() })?;
    Ok((part.row_of_entry(i), part.entry(i)))
}

/// Next vertex from owned `x`, proportional to incident weights; `None` when
/// `x` has no (positively weighted) neighbor.
pub fn weighted_step<R: Rng + ?Sized>(part: &LocalPartition, x: VertexId, rng: &mut R) -> Option<VertexId> {
    let strength = part.strength(x);
    if !(strength > 0.0) {
        return None;
    }
    let span = part.span_of(x);
    part.locate(span, rng.gen::<f64>() * strength).map(|i| part.entry(i))
}

/// Skip-gram pairs `(w_i, w_j)` for `1 <= j - i <= window` over a walk
/// segment, keeping those whose first vertex satisfies `owned`.
pub fn expand_window(seq: &[VertexId], window: usize, owned: impl Fn(VertexId) -> bool) -> Vec<Pair> {
    let mut out = Vec::new();
    for (i, &a) in seq.iter().enumerate() {
        if !owned(a) {
            continue;
        }
        for &b in seq.iter().skip(i + 1).take(window) {
            out.push((a, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::chi_square_fit;
    use crate::graph::{build_local_partition, parse_edge_list, Directedness, PartitionMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn part_of(text: &str) -> LocalPartition {
        let g = parse_edge_list(text, Directedness::Undirected).unwrap().0;
        let map = PartitionMap::uniform(g.num_vertices(), 1).unwrap();
        build_local_partition(&g, &map, 0)
    }

    #[test]
    fn root_edges_of_triangle_are_uniform() {
        let part = part_of("0 1\n1 2\n2 0\n");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            let (u, v) = sample_root_edge(&part, &mut rng).unwrap();
            let (a, b) = (u.min(v), u.max(v));
            counts[match (a, b) {
                (0, 1) => 0,
                (1, 2) => 1,
                _ => 2,
            }] += 1;
        }
        let p = chi_square_fit(&counts, &[1.0 / 3.0; 3]).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn single_edge_is_always_drawn() {
        let part = part_of("4 9\n");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (u, v) = sample_root_edge(&part, &mut rng).unwrap();
            assert_eq!((u.min(v), u.max(v)), (0, 1));
        }
    }

    #[test]
    fn root_edges_follow_weights() {
        // two disjoint edges with weights 1 and 3
        let part = part_of("0 1 1\n2 3 3\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let heavy = (0..n)
            .filter(|_| sample_root_edge(&part, &mut rng).unwrap().0 >= 2)
            .count() as f64;
        let sd = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((heavy - 0.75 * n as f64).abs() < 3.0 * sd, "heavy = {heavy}");
    }

    #[test]
    fn empty_partition_has_no_root() {
        let g = parse_edge_list("0 1\n", Directedness::Undirected).unwrap().0;
        let map = PartitionMap::uniform(2, 1).unwrap();
        let part = build_local_partition(&g, &map, 0);
        assert!(sample_root_edge(&part, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
        let g = parse_edge_list("0 1\n2 2\n", Directedness::Undirected).unwrap().0;
        let map = PartitionMap::new(vec![0, 2, 3]).unwrap();
        let part = build_local_partition(&g, &map, 1);
        assert!(matches!(
            sample_root_edge(&part, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(SamplingError::EmptyPartition { rank: 1 })
        ));
    }

    #[test]
    fn step_from_leaf_goes_to_its_neighbor() {
        let part = part_of("0 1\n1 2\n");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(weighted_step(&part, 0, &mut rng), Some(1));
    }

    #[test]
    fn unweighted_step_is_uniform() {
        let part = part_of("0 1\n0 2\n0 3\n0 4\n");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0u64; 4];
        for _ in 0..100_000 {
            counts[weighted_step(&part, 0, &mut rng).unwrap() as usize - 1] += 1;
        }
        assert!(chi_square_fit(&counts, &[0.25; 4]).unwrap() > 0.01);
    }

    #[test]
    fn weighted_step_matches_exact_distribution() {
        let part = part_of("0 1 2\n0 2 2\n0 3 6\n");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0u64; 3];
        for _ in 0..100_000 {
            counts[weighted_step(&part, 0, &mut rng).unwrap() as usize - 1] += 1;
        }
        assert!(chi_square_fit(&counts, &[0.2, 0.2, 0.6]).unwrap() > 0.01);
        assert!((counts[2] as f64 / 1e5 - 0.6).abs() < 0.01);
    }

    #[test]
    fn isolated_vertex_has_no_step() {
        let part = part_of("0 1\n2 2\n");
        assert_eq!(weighted_step(&part, 2, &mut ChaCha8Rng::seed_from_u64(0)), None);
    }

    #[test]
    fn window_expansion() {
        let all = |_| true;
        assert_eq!(expand_window(&[1, 2, 3], 1, all), vec![(1, 2), (2, 3)]);
        let mut w2 = expand_window(&[1, 2, 3], 2, all);
        w2.sort();
        assert_eq!(w2, vec![(1, 2), (1, 3), (2, 3)]);
        let seq: Vec<VertexId> = (0..10).collect();
        assert_eq!(expand_window(&seq, 2, all).len(), 2 * 10 - 3);
        assert_eq!(expand_window(&[1, 2, 3], 2, |v| v != 1), vec![(2, 3)]);
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("remote".parse::<Variant>().is_err());
        assert_eq!("ibarrier".parse::<SyncMode>().unwrap(), SyncMode::IBarrier);
    }

    #[test]
    fn augmented_variants_need_ibarrier() {
        let cfg = WalkConfig {
            variant: Variant::AugPair,
            ..WalkConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(cfg.normalized().validate().is_ok());
    }
}
