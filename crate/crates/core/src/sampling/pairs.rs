use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::walk::Walker;
use super::{sample_root_edge, SamplingError, SyncMode, Variant, WalkConfig};
use crate::graph::{LocalPartition, PartitionMap};
use crate::rng::{rank_stream, WALK_STREAM};
use crate::transport::{Endpoint, ReduceOp};
use crate::{Pair, Rank, VertexId};

/// What one call to the pair generator did on this rank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchRecord {
    pub walks: u64,
    /// Spill pairs carried into the call.
    pub spill_in: usize,
    /// Local pair count when the synchronization loop exited.
    pub loop_exit_local: usize,
    /// Last global maximum seen by the Allreduce loop (0 under ibarrier).
    pub loop_exit_max: u64,
    /// Pairs held after remote edges were assembled, before pruning.
    pub pre_prune: usize,
    pub emitted: usize,
    pub spill_out: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SamplerStats {
    pub walks: u64,
    pub batches: u64,
    /// Pairs produced by the upfront pass of the augmented variants.
    pub pool_pairs: usize,
}

/// Batch producer for one rank.
pub struct Sampler<'a> {
    walker: Walker<'a>,
    map: &'a PartitionMap,
    cfg: WalkConfig,
    spill: Vec<Pair>,
    pool: VecDeque<Vec<Pair>>,
    prepared: bool,
    stats: SamplerStats,
    records: Vec<BatchRecord>,
}

impl<'a> Sampler<'a> {
    pub fn new(part: &'a LocalPartition, map: &'a PartitionMap, cfg: WalkConfig, seed: u64) -> Self {
        let rng = rank_stream(seed, part.rank(), WALK_STREAM);
        let walker = Walker::new(part, map, cfg.window, cfg.buffer_size, rng);
        Self {
            walker,
            map,
            cfg,
            spill: Vec::new(),
            pool: VecDeque::new(),
            prepared: false,
            stats: SamplerStats::default(),
            records: Vec::new(),
        }
    }

    pub fn config(&self) -> &WalkConfig {
        &self.cfg
    }

    pub fn walker(&self) -> &Walker<'a> {
        &self.walker
    }

    pub fn spill(&self) -> &[Pair] {
        &self.spill
    }

    pub fn stats(&self) -> &SamplerStats {
        &self.stats
    }

    /// One record per generator call (the upfront pass counts as one).
    pub fn records(&self) -> &[BatchRecord] {
        &self.records
    }

    fn rank(&self) -> Rank {
        self.walker.partition().rank()
    }

    /// Upfront sampling for the augmented variants; a no-op otherwise.
    pub fn prepare(&mut self, ep: &mut Endpoint) -> Result<(), crate::Error> {
        if self.prepared || !self.cfg.variant.is_augmented() {
            self.prepared = true;
            return Ok(());
        }
        self.prepared = true;
        let b = self.cfg.batch_size;
        let total = b * self.cfg.num_batches;
        if total == 0 {
            return Ok(());
        }
        let pool = match self.cfg.variant {
            Variant::AugSingle => {
                let steps = total as u64;
                let (mut pairs, rec) = self.generate(ep, Vec::new(), total, steps)?;
                pairs.truncate(total);
                self.records.push(BatchRecord { emitted: pairs.len(), ..rec });
                pairs
            }
            Variant::AugPair => {
                let s = ((2 * total) as f64).sqrt().ceil() as usize;
                let (mut seeds, rec) = self.generate(ep, Vec::new(), s, self.cfg.steps)?;
                seeds.truncate(s);
                let part = self.walker.partition();
                let pool = augment_pair_pool(&seeds, total, |v| part.owns(v))?;
                self.records.push(BatchRecord { emitted: pool.len(), ..rec });
                pool
            }
            _ => unreachable!("checked above"),
        };
        self.stats.pool_pairs = pool.len();
        self.pool = pool.chunks(b).map(<[Pair]>::to_vec).collect();
        Ok(())
    }

    /// Pairs for the next batch, all with a locally owned first vertex.
    pub fn next_batch(&mut self, ep: &mut Endpoint) -> Result<Vec<Pair>, crate::Error> {
        if !self.prepared {
            self.prepare(ep)?;
        }
        self.stats.batches += 1;
        let b = self.cfg.batch_size;
        if self.cfg.variant.is_augmented() {
            return Ok(self.pool.pop_front().unwrap_or_default());
        }
        let carried = match self.cfg.variant {
            Variant::ReuseSpill | Variant::RefreshSpill => std::mem::take(&mut self.spill),
            _ => Vec::new(),
        };
        let started_with_spill = !carried.is_empty();
        let (mut pairs, mut rec) = self.generate(ep, carried, b, self.cfg.steps)?;
        let excess = if pairs.len() > b { pairs.split_off(b) } else { Vec::new() };
        match self.cfg.variant {
            Variant::ReuseSpill => self.spill = excess,
            // a batch that used leftovers discards its own
            Variant::RefreshSpill if !started_with_spill => self.spill = excess,
            _ => {}
        }
        rec.emitted = pairs.len();
        rec.spill_out = self.spill.len();
        self.records.push(rec);
        Ok(pairs)
    }

    /// The synchronized walk loop followed by assembly of remote edges and a
    /// shuffle. `start` seeds the local store. Walk `i` uses `first_steps`
    /// for `i == 0` and the configured length afterwards.
    pub fn generate(
        &mut self,
        ep: &mut Endpoint,
        start: Vec<Pair>,
        quota: usize,
        first_steps: u64,
    ) -> Result<(Vec<Pair>, BatchRecord), crate::Error> {
        let mut rec = BatchRecord {
            spill_in: start.len(),
            ..BatchRecord::default()
        };
        self.walker.local = start;
        self.walker.remote.clear();
        let walks_before = self.walker.walks();
        let has_edges = self.walker.partition().local_edge_count() > 0;
        let remote = self.cfg.variant.is_remote();
        let later_steps = self.cfg.steps;
        let steps_for = |walker: &Walker| {
            if walker.walks() == walks_before {
                first_steps
            } else {
                later_steps
            }
        };

        match (self.cfg.sync, remote) {
            (SyncMode::AllReduce, _) => loop {
                let max = ep.all_reduce(self.walker.local.len() as u64, ReduceOp::Max)?;
                rec.loop_exit_max = max;
                if max >= quota as u64 {
                    break;
                }
                let root = self.root()?;
                let steps = steps_for(&self.walker);
                if remote {
                    self.walker.remote_walk(ep, root, steps, None)?;
                } else if let Some(root) = root {
                    self.walker.local_walk(root, steps);
                }
            },
            (SyncMode::IBarrier, false) => {
                let mut barrier = None;
                loop {
                    if barrier.is_none() && (self.walker.local.len() >= quota || !has_edges) {
                        barrier = Some(ep.ibarrier()?);
                    }
                    if let Some(h) = barrier {
                        if ep.test(h)? {
                            break;
                        }
                    }
                    if let Some(root) = self.root()? {
                        let steps = steps_for(&self.walker);
                        self.walker.local_walk(root, steps);
                    }
                    ep.tick()?;
                }
            }
            (SyncMode::IBarrier, true) => {
                let p = ep.world_size() as u64;
                let mut barrier = None;
                let enter = |walker: &Walker, ep: &mut Endpoint, barrier: &mut Option<_>| {
                    if barrier.is_none() && (walker.local.len() >= quota || !has_edges) {
                        *barrier = Some(ep.ibarrier()?);
                    }
                    Ok::<_, crate::Error>(())
                };
                enter(&self.walker, ep, &mut barrier)?;
                let flag = match barrier {
                    Some(h) => ep.test(h)? as u64,
                    None => 0,
                };
                let mut agreed = ep.all_reduce(flag, ReduceOp::Sum)? == p;
                while !agreed {
                    let root = self.root()?;
                    let steps = steps_for(&self.walker);
                    agreed = self.walker.remote_walk(ep, root, steps, barrier)?.barrier_agreed;
                    enter(&self.walker, ep, &mut barrier)?;
                }
            }
        }
        rec.loop_exit_local = self.walker.local.len();
        rec.walks = self.walker.walks() - walks_before;
        self.stats.walks += rec.walks;

        let mut pairs = std::mem::take(&mut self.walker.local);
        let remote_edges = std::mem::take(&mut self.walker.remote);
        let mut sends: Vec<Vec<Pair>> = vec![Vec::new(); ep.world_size()];
        for (m, n) in remote_edges {
            sends[self.map.owner(m)].push((m, n));
        }
        let me = self.rank();
        for incoming in ep.all_to_all_v(sends)? {
            for (m, n) in incoming {
                if self.map.owner(m) != me {
                    return Err(SamplingError::Protocol(format!("rank {me} was sent pair ({m}, {n})")).into());
                }
                pairs.push((m, n));
            }
        }
        rec.pre_prune = pairs.len();
        pairs.shuffle(&mut self.walker.rng);
        Ok((pairs, rec))
    }

    fn root(&mut self) -> Result<Option<Pair>, SamplingError> {
        if self.walker.partition().local_edge_count() == 0 {
            return Ok(None);
        }
        let part = self.walker.partition();
        sample_root_edge(part, &mut self.walker.rng).map(Some)
    }
}

/// Expands seed pairs to exactly `total` pairs: the seeds themselves, then
/// combinations `(a, b)`, `a < b`, over the sorted distinct seed endpoints in
/// a repeating lexicographic cycle. The owned endpoint goes first; when
/// neither is owned the first slot takes the owned seed vertices in turn.
pub fn augment_pair_pool(
    seeds: &[Pair],
    total: usize,
    owned: impl Fn(VertexId) -> bool,
) -> Result<Vec<Pair>, SamplingError> {
    let mut verts: Vec<VertexId> = seeds.iter().flat_map(|&(a, b)| [a, b]).collect();
    verts.sort_unstable();
    verts.dedup();
    if verts.len() < 2 {
        return Err(SamplingError::Augmentation(format!(
            "need at least 2 distinct seed vertices, have {}",
            verts.len()
        )));
    }
    let mine: Vec<VertexId> = verts.iter().copied().filter(|&v| owned(v)).collect();
    if mine.is_empty() {
        return Err(SamplingError::Augmentation("no owned seed vertex".into()));
    }
    let mut pool: Vec<Pair> = seeds.iter().copied().take(total).collect();
    let mut k = 0usize;
    'outer: while pool.len() < total {
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                if pool.len() == total {
                    break 'outer;
                }
                let (a, b) = (verts[i], verts[j]);
                let pair = if owned(a) {
                    (a, b)
                } else if owned(b) {
                    (b, a)
                } else {
                    let o = mine[k % mine.len()];
                    k += 1;
                    (o, b)
                };
                pool.push(pair);
            }
        }
    }
    Ok(pool)
}
