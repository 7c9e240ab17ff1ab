use serde::Serialize;

use super::{train_batch, BatchStats, EmbeddingStore, Hyperparams, NegativeSampler};
use crate::graph::{LocalPartition, PartitionMap};
use crate::rng::{rank_stream, NEGATIVE_STREAM};
use crate::sampling::{BatchRecord, Sampler, SamplerStats, WalkConfig};
use crate::transport::{Endpoint, Phase};
use crate::{Pair, Rank};

/// A fixed global pair sequence per batch. Each rank trains on the pairs
/// whose first vertex it owns, in the given order, instead of sampling.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairTrace {
    pub batches: Vec<Vec<Pair>>,
}

impl PairTrace {
    pub fn new(batches: Vec<Vec<Pair>>) -> Self {
        Self { batches }
    }
}

/// Everything one rank needs to train.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub part: &'a LocalPartition,
    pub map: &'a PartitionMap,
    pub walk: WalkConfig,
    pub hp: Hyperparams,
    pub negatives: &'a NegativeSampler,
    pub seed: u64,
    pub trace: Option<&'a PairTrace>,
    /// Keep every trained pair with its batch index.
    pub record_pairs: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankOutcome {
    pub rank: Rank,
    #[serde(skip)]
    pub store: EmbeddingStore,
    pub batches: Vec<BatchStats>,
    pub sampler: SamplerStats,
    pub records: Vec<BatchRecord>,
    /// Sampling-phase collectives issued after upfront sampling finished.
    pub loop_sampling_collectives: u64,
    #[serde(skip)]
    pub pair_log: Vec<(usize, Pair)>,
}

impl RankOutcome {
    pub fn samples(&self) -> usize {
        self.batches.iter().map(|b| b.positives).sum()
    }
}

fn sampling_collectives(ep: &Endpoint) -> u64 {
    let c = ep.counters().sampling;
    c.all_reduce + c.all_to_all + c.barriers
}

/// Runs the batch loop on one rank: pair generation, then one training step,
/// `walk.num_batches` times (or once per trace batch).
pub fn train_rank(ep: &mut Endpoint, setup: &TrainSetup<'_>) -> crate::Result<RankOutcome> {
    let rank = ep.rank();
    let hp = setup.hp;
    hp.validate()?;
    ep.set_phase(Phase::Setup);
    let mut store = EmbeddingStore::init(rank, setup.part.owned_range(), hp.dim, setup.seed);
    let mut neg_rng = rank_stream(setup.seed, rank, NEGATIVE_STREAM);

    let mut sampler = match setup.trace {
        Some(_) => None,
        None => {
            setup.walk.validate()?;
            Some(Sampler::new(setup.part, setup.map, setup.walk, setup.seed))
        }
    };
    let num_batches = setup.trace.map_or(setup.walk.num_batches, |t| t.batches.len());

    ep.set_phase(Phase::Sampling);
    if let Some(s) = sampler.as_mut() {
        s.prepare(ep)?;
    }
    let before_loop = sampling_collectives(ep);

    let mut batches = Vec::with_capacity(num_batches);
    let mut pair_log = Vec::new();
    for b in 0..num_batches {
        ep.set_phase(Phase::Sampling);
        let pairs = match (sampler.as_mut(), setup.trace) {
            (Some(s), _) => s.next_batch(ep)?,
            (None, Some(t)) => t.batches[b].iter().copied().filter(|&(u, _)| store.owns(u)).collect(),
            (None, None) => unreachable!("sampler exists without a trace"),
        };
        if setup.record_pairs {
            pair_log.extend(pairs.iter().map(|&p| (b, p)));
        }
        ep.set_phase(Phase::Training);
        let stats = train_batch(&pairs, &mut store, setup.negatives, &mut neg_rng, setup.map, ep, &hp)?;
        log::debug!("rank {rank} batch {b}: {stats:?}");
        batches.push(stats);
    }
    let loop_sampling_collectives = sampling_collectives(ep) - before_loop;
    ep.set_phase(Phase::Setup);

    let (sampler_stats, records) = match sampler {
        Some(s) => (s.stats().clone(), s.records().to_vec()),
        None => (SamplerStats::default(), Vec::new()),
    };
    Ok(RankOutcome {
        rank,
        store,
        batches,
        sampler: sampler_stats,
        records,
        loop_sampling_collectives,
        pair_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_local_partition, parse_edge_list, Directedness, GlobalGraph};
    use crate::sampling::Variant;
    use crate::training::{line_update_local, line_update_remote, negative_gradient, positive_gradient};
    use crate::transport::{run_world, WorldConfig};
    use crate::VertexId;

    fn ring(n: u32) -> GlobalGraph {
        let mut text: String = (0..n).map(|i| format!("{i} {}\n", (i + 1) % n)).collect();
        text.push_str(&format!("0 {}\n", n / 2));
        parse_edge_list(&text, Directedness::Undirected).unwrap().0
    }

    fn run(
        g: &GlobalGraph,
        p: usize,
        walk: WalkConfig,
        hp: Hyperparams,
        trace: Option<&PairTrace>,
    ) -> Vec<RankOutcome> {
        let map = PartitionMap::uniform(g.num_vertices(), p).unwrap();
        let parts: Vec<LocalPartition> = (0..p).map(|r| build_local_partition(g, &map, r)).collect();
        let neg = NegativeSampler::new(&g.degrees(), hp.alpha).unwrap();
        let report = run_world(&WorldConfig::deterministic(p, 5), |ep| {
            let setup = TrainSetup {
                part: &parts[ep.rank()],
                map: &map,
                walk,
                hp,
                negatives: &neg,
                seed: 11,
                trace,
                record_pairs: true,
            };
            train_rank(ep, &setup)
        })
        .unwrap();
        for (r, c) in report.counters.iter().enumerate() {
            assert_eq!(c.training.all_to_all, 2 * report.results[r].batches.len() as u64);
        }
        report.results
    }

    #[test]
    fn zero_batches_keep_initialization() {
        let g = ring(12);
        let walk = WalkConfig {
            num_batches: 0,
            ..WalkConfig::default()
        };
        let hp = Hyperparams { dim: 4, ..Default::default() };
        for out in run(&g, 3, walk, hp, None) {
            let init = EmbeddingStore::init(out.rank, out.store.owned_range(), 4, 11);
            assert_eq!(out.store, init);
        }
    }

    #[test]
    fn single_rank_matches_straight_line_sgd() {
        let g = ring(16);
        let walk = WalkConfig {
            batch_size: 8,
            num_batches: 3,
            steps: 10,
            ..WalkConfig::default()
        };
        let hp = Hyperparams { dim: 6, ..Default::default() };
        let out = run(&g, 1, walk, hp, None).remove(0);
        assert!(out.batches.iter().all(|b| b.fetched_rows == 0 && b.deltas_sent == 0));

        let neg = NegativeSampler::new(&g.degrees(), hp.alpha).unwrap();
        let mut rng = rank_stream(11, 0, NEGATIVE_STREAM);
        let mut s = EmbeddingStore::init(0, 0..16, 6, 11);
        for &(_, (u, v)) in &out.pair_log {
            let (ur, cr) = s.pair_mut(u, v).unwrap();
            let gp = positive_gradient(ur, cr, &hp);
            line_update_local(ur, cr, gp, hp.lr, 0.0);
            let n = neg.sample(&mut rng);
            let (ur, cr) = s.pair_mut(u, n).unwrap();
            let gn = negative_gradient(ur, cr, &hp);
            line_update_local(ur, cr, gn, hp.lr, 0.0);
        }
        assert_eq!(s, out.store);
    }

    #[test]
    fn deltas_sum_over_shared_snapshot() {
        // three pairs on rank 0 all hitting context row 7, owned by rank 1
        let g = ring(8);
        let trace = PairTrace::new(vec![vec![(0, 7), (1, 7), (0, 7)]]);
        let hp = Hyperparams {
            dim: 3,
            neg_weight: 0.0,
            ..Default::default()
        };
        let outs = run(&g, 2, WalkConfig::default(), hp, Some(&trace));
        // negatives may fetch more rows; with zero weight they change nothing
        assert_eq!(outs[0].batches[0].remote_positives, 3);
        assert!(outs[1].batches[0].deltas_applied >= 1);

        let mut s0 = EmbeddingStore::init(0, 0..4, 3, 11);
        let s1 = EmbeddingStore::init(1, 4..8, 3, 11);
        let z = s1.c_row(7).unwrap().to_vec();
        let mut delta = vec![0.0f64; 3];
        for u in [0 as VertexId, 1, 0] {
            let ur = s0.u_row_mut(u).unwrap();
            let gp = positive_gradient(ur, &z, &hp);
            line_update_remote(ur, &z, gp, hp.lr, 0.0, &mut delta);
        }
        let expect: Vec<f32> = z.iter().zip(&delta).map(|(&a, &d)| (a as f64 + d) as f32).collect();
        assert_eq!(outs[1].store.c_row(7).unwrap(), &expect[..]);
        assert_eq!(outs[0].store.vertex_matrix(), s0.vertex_matrix());
    }

    #[test]
    fn local_variant_sends_no_walk_messages() {
        let g = ring(24);
        let walk = WalkConfig {
            variant: Variant::Local,
            batch_size: 6,
            num_batches: 2,
            steps: 8,
            ..WalkConfig::default()
        };
        let hp = Hyperparams { dim: 4, ..Default::default() };
        let map = PartitionMap::uniform(g.num_vertices(), 3).unwrap();
        let parts: Vec<LocalPartition> = (0..3).map(|r| build_local_partition(&g, &map, r)).collect();
        let neg = NegativeSampler::new(&g.degrees(), hp.alpha).unwrap();
        let report = run_world(&WorldConfig::fuzzed(3, 9), |ep| {
            let setup = TrainSetup {
                part: &parts[ep.rank()],
                map: &map,
                walk,
                hp,
                negatives: &neg,
                seed: 1,
                trace: None,
                record_pairs: false,
            };
            train_rank(ep, &setup)
        })
        .unwrap();
        for c in &report.counters {
            assert_eq!(c.sampling.p2p_messages, 0);
            assert_eq!(c.training.all_to_all, 4);
        }
    }
}
