use rand_chacha::ChaCha8Rng;

use super::{weighted_step, SamplingError};
use crate::graph::{LocalPartition, PartitionMap};
use crate::transport::{Endpoint, MessageBuffer, ReduceOp, RequestHandle};
use crate::{Pair, Rank, VertexId};

/// A frontier entry: the current vertex plus the tail of its local segment,
/// oldest first, at most `window` long.
#[derive(Debug, Clone)]
struct Token {
    hist: Vec<VertexId>,
}

impl Token {
    fn at(&self) -> VertexId {
        *self.hist.last().expect("token is never empty")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalkOutcome {
    /// Pairs appended to the local store.
    pub local_pairs: usize,
    /// Incoming edges appended to the remote store.
    pub remote_pairs: usize,
    /// Global visit count when the walk ended.
    pub visits: u64,
    pub supersteps: u64,
    /// Every rank reported its barrier complete in the final superstep.
    pub barrier_agreed: bool,
}

/// Per-rank walk engine. Holds the local pair store, the remote pair store
/// (edges that arrived from other ranks) and the visit tallies.
pub struct Walker<'a> {
    part: &'a LocalPartition,
    map: &'a PartitionMap,
    window: usize,
    buffer_size: usize,
    pub(crate) rng: ChaCha8Rng,
    visited: Vec<u64>,
    pub(crate) local: Vec<Pair>,
    pub(crate) remote: Vec<Pair>,
    walks: u64,
    declared: bool,
}

impl<'a> Walker<'a> {
    pub fn new(
        part: &'a LocalPartition,
        map: &'a PartitionMap,
        window: usize,
        buffer_size: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(window >= 1 && buffer_size >= 1);
        Self {
            part,
            map,
            window,
            buffer_size,
            rng,
            visited: vec![0; part.num_owned()],
            local: Vec::new(),
            remote: Vec::new(),
            walks: 0,
            declared: false,
        }
    }

    pub fn partition(&self) -> &'a LocalPartition {
        self.part
    }

    /// Cumulative visit tally per owned vertex, indexed from the range start.
    pub fn visited(&self) -> &[u64] {
        &self.visited
    }

    pub fn local_pairs(&self) -> &[Pair] {
        &self.local
    }

    pub fn remote_pairs(&self) -> &[Pair] {
        &self.remote
    }

    /// Walks started so far.
    pub fn walks(&self) -> u64 {
        self.walks
    }

    fn visit(&mut self, v: VertexId) {
        self.visited[(v - self.part.owned_range().start) as usize] += 1;
    }

    fn extend(&self, tok: &Token, y: VertexId) -> Token {
        let mut hist = tok.hist.clone();
        hist.push(y);
        if hist.len() > self.window {
            hist.remove(0);
        }
        Token { hist }
    }

    /// Records the root edge. Returns the frontier token when `v` is local.
    fn start(&mut self, (u, v): Pair, visits: &mut u64) -> Option<Token> {
        self.local.push((u, v));
        self.visit(u);
        *visits += 1;
        if self.part.owns(v) {
            self.visit(v);
            *visits += 1;
            let tok = Token { hist: vec![u] };
            Some(self.extend(&tok, v))
        } else {
            None
        }
    }

    /// One step of `tok`. Local steps are recorded with their window pairs;
    /// a step onto a ghost records the window pairs that reach back into this
    /// rank's segment and returns the crossing edge.
    fn advance(&mut self, tok: &Token, visits: &mut u64, cross: bool) -> Step {
        let x = tok.at();
        let Some(y) = weighted_step(self.part, x, &mut self.rng) else {
            return Step::Stuck;
        };
        let owned = self.part.owns(y);
        if !owned && !cross {
            return Step::Remote((x, y));
        }
        let skip = if owned { 0 } else { 1 };
        for &w in tok.hist.iter().rev().skip(skip).take(self.window - skip) {
            if self.part.owns(w) {
                self.local.push((w, y));
            }
        }
        if owned {
            self.visit(y);
            *visits += 1;
            Step::Local(self.extend(tok, y))
        } else {
            Step::Remote((x, y))
        }
    }

    /// Walk confined to this rank: stops at the first step onto a ghost, at a
    /// dead end, or after `steps` visits. No transport involved.
    pub fn local_walk(&mut self, root: Pair, steps: u64) -> WalkOutcome {
        self.walks += 1;
        let before = self.local.len();
        let mut visits = 0;
        if steps > 0 {
            let mut tok = self.start(root, &mut visits);
            while visits < steps {
                let Some(t) = tok.take() else { break };
                match self.advance(&t, &mut visits, false) {
                    Step::Local(next) => tok = Some(next),
                    Step::Remote(_) | Step::Stuck => break,
                }
            }
        }
        WalkOutcome {
            local_pairs: self.local.len() - before,
            remote_pairs: 0,
            visits,
            supersteps: 0,
            barrier_agreed: false,
        }
    }

    /// Distributed walk; every rank must call it the same number of times.
    ///
    /// Each superstep advances every frontier token once, ships crossing edges
    /// in buffers of at most `buffer_size` entries (one per neighbor rank),
    /// sums visits and per-destination message counts in a single vector
    /// Allreduce, then drains exactly the messages addressed to this rank.
    /// Once the global visit count reaches `steps` (or no token is left
    /// anywhere), unsent edges are dropped and every rank sends zero-length
    /// exit markers to its neighbors. `barrier`, when given, is tested each
    /// superstep and its completion folded into the same Allreduce so all
    /// ranks see the same answer.
    pub fn remote_walk(
        &mut self,
        ep: &mut Endpoint,
        root: Option<Pair>,
        steps: u64,
        barrier: Option<RequestHandle>,
    ) -> Result<WalkOutcome, crate::Error> {
        self.walks += 1;
        let p = ep.world_size();
        let me = ep.rank();
        let nbrs: Vec<Rank> = self.part.neighbor_ranks().to_vec();
        if !self.declared {
            ep.set_neighbors(&nbrs, &nbrs)?;
            self.declared = true;
        }
        let (local_before, remote_before) = (self.local.len(), self.remote.len());
        let mut pending: Vec<Vec<Pair>> = vec![Vec::new(); nbrs.len()];
        let slot_of = |r: Rank| nbrs.binary_search(&r).ok();

        let mut visits = 0u64;
        let mut cq: Vec<Token> = Vec::new();
        let mut nq: Vec<Token> = Vec::new();
        let mut exiting = steps == 0;
        if let (false, Some(root)) = (exiting, root) {
            if let Some(tok) = self.start(root, &mut visits) {
                cq.push(tok);
            } else {
                let slot = slot_of(self.map.owner(root.1))
                    .ok_or_else(|| SamplingError::Protocol(format!("no channel to owner of {}", root.1)))?;
                pending[slot].push(root);
            }
        }

        let mut recvs: Vec<Option<RequestHandle>> = Vec::with_capacity(nbrs.len());
        for &s in &nbrs {
            recvs.push(Some(ep.irecv_prepost(s)?));
        }
        let mut markers = 0usize;
        let mut supersteps = 0u64;
        // sender bitmask per destination, `words` u64 each
        let words = p.div_ceil(64);
        let my_bit = (me % 64, me / 64);
        loop {
            ep.begin_superstep();
            supersteps += 1;
            let marker_round = exiting;
            let mut sent_to = vec![0u64; p * words];
            let mut sends = Vec::new();
            if marker_round {
                for &t in &nbrs {
                    sends.push(ep.isend(t, MessageBuffer::exit_marker())?);
                    sent_to[t * words + my_bit.1] |= 1 << my_bit.0;
                }
            } else {
                for tok in std::mem::take(&mut cq) {
                    match self.advance(&tok, &mut visits, true) {
                        Step::Local(next) => nq.push(next),
                        Step::Remote(edge) => {
                            let slot = slot_of(self.map.owner(edge.1)).ok_or_else(|| {
                                SamplingError::Protocol(format!("no channel to owner of {}", edge.1))
                            })?;
                            pending[slot].push(edge);
                        }
                        Step::Stuck => {}
                    }
                }
                for (slot, &t) in nbrs.iter().enumerate() {
                    if pending[slot].is_empty() {
                        continue;
                    }
                    let k = pending[slot].len().min(self.buffer_size);
                    let chunk: Vec<Pair> = pending[slot].drain(..k).collect();
                    sends.push(ep.isend(t, MessageBuffer::from_entries(self.buffer_size, chunk))?);
                    sent_to[t * words + my_bit.1] |= 1 << my_bit.0;
                }
            }

            let live = if marker_round {
                0
            } else {
                nq.len() as u64 + pending.iter().map(|q| q.len() as u64).sum::<u64>() + sends.len() as u64
            };
            let flag = match barrier {
                Some(h) => ep.test(h)? as u64,
                None => 0,
            };
            let mut contribution = vec![visits, live, flag];
            contribution.extend_from_slice(&sent_to);
            let reduced = ep.all_reduce_vec(&contribution, ReduceOp::Sum)?;
            let curr_steps = reduced[0];
            let senders = &reduced[3 + me * words..3 + (me + 1) * words];
            let mut expected: Vec<usize> = Vec::new();
            for (slot, &s) in nbrs.iter().enumerate() {
                if senders[s / 64] >> (s % 64) & 1 == 1 {
                    expected.push(slot);
                }
            }
            let from_outside = senders.iter().map(|w| w.count_ones() as usize).sum::<usize>() - expected.len();
            if from_outside > 0 {
                return Err(SamplingError::Protocol(format!(
                    "rank {me} was sent {from_outside} messages by ranks outside its sources"
                ))
                .into());
            }
            if !exiting && (curr_steps >= steps || reduced[1] == 0) {
                exiting = true;
                pending.iter_mut().for_each(Vec::clear);
                nq.clear();
            }

            // Drain exactly this superstep's senders. A neighbor that sent
            // nothing now may already have filled its slot for the next
            // superstep, so only the flagged slots are tested; reposting waits
            // until the drain is over.
            let mut waiting = expected;
            let mut arrived: Vec<(usize, usize, MessageBuffer)> = Vec::with_capacity(waiting.len());
            while !waiting.is_empty() {
                let mut handles = Vec::with_capacity(waiting.len());
                for &slot in &waiting {
                    match recvs[slot] {
                        Some(h) => handles.push(h),
                        None => {
                            return Err(SamplingError::Protocol(format!(
                                "rank {me} expects a message from rank {} with no open receive",
                                nbrs[slot]
                            ))
                            .into())
                        }
                    }
                }
                let done = ep.test_some(&handles)?;
                for &k in &done {
                    let h = handles[k];
                    let count = ep.get_count(h)?;
                    let msg = ep.take_message(h)?;
                    ep.release(h)?;
                    recvs[waiting[k]] = None;
                    arrived.push((waiting[k], count, msg));
                }
                for &k in done.iter().rev() {
                    waiting.swap_remove(k);
                }
            }
            // slot order, whatever the arrival order
            arrived.sort_by_key(|a| a.0);
            let mut repost = Vec::new();
            for (slot, count, msg) in arrived {
                if count == 0 {
                    markers += 1;
                    continue;
                }
                for (m, n) in msg.into_entries() {
                    if !self.part.owns(n) {
                        return Err(SamplingError::Protocol(format!(
                            "rank {me} received edge ({m}, {n}) for a vertex it does not own"
                        ))
                        .into());
                    }
                    self.visit(n);
                    visits += 1;
                    self.remote.push((m, n));
                    if !exiting {
                        nq.push(Token { hist: vec![n] });
                    }
                }
                repost.push(slot);
            }
            for slot in repost {
                recvs[slot] = Some(ep.irecv_prepost(nbrs[slot])?);
            }
            while !sends.is_empty() {
                let done = ep.test_some(&sends)?;
                for &k in done.iter().rev() {
                    ep.release(sends.swap_remove(k))?;
                }
            }

            if marker_round {
                if markers != nbrs.len() || recvs.iter().any(Option::is_some) {
                    return Err(SamplingError::Protocol(format!(
                        "rank {me} finished with {markers} of {} exit markers",
                        nbrs.len()
                    ))
                    .into());
                }
                return Ok(WalkOutcome {
                    local_pairs: self.local.len() - local_before,
                    remote_pairs: self.remote.len() - remote_before,
                    visits: curr_steps,
                    supersteps,
                    barrier_agreed: reduced[2] == p as u64,
                });
            }
            if !exiting {
                std::mem::swap(&mut cq, &mut nq);
            }
        }
    }
}

enum Step {
    Local(Token),
    Remote(Pair),
    Stuck,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_local_partition, parse_edge_list, partition_first_fit, Directedness, GlobalGraph};
    use crate::rng::{rank_stream, WALK_STREAM};
    use crate::transport::{run_world, WorldConfig};

    fn graph(text: &str) -> GlobalGraph {
        parse_edge_list(text, Directedness::Undirected).unwrap().0
    }

    #[test]
    fn local_walk_on_path() {
        let g = graph("0 1\n1 2\n2 3\n3 4\n");
        let map = PartitionMap::uniform(5, 1).unwrap();
        let part = build_local_partition(&g, &map, 0);
        let mut w = Walker::new(&part, &map, 1, 128, rank_stream(1, 0, WALK_STREAM));
        let out = w.local_walk((0, 1), 5);
        // root visits two vertices, three more steps reach the budget
        assert_eq!(out.visits, 5);
        assert_eq!(w.local_pairs().len(), 4);
        for &(a, b) in w.local_pairs() {
            assert!(g.has_edge(a, b));
        }
        for pair in w.local_pairs().windows(2) {
            assert_eq!(pair[0].1, pair[1].0, "pairs form one walk");
        }
    }

    #[test]
    fn triangle_split_across_two_ranks() {
        let g = graph("0 1\n1 2\n2 0\n");
        let map = PartitionMap::new(vec![0, 1, 3]).unwrap();
        let (g, map) = (&g, &map);
        let report = run_world(&WorldConfig::deterministic(2, 3), |ep| {
            let part = build_local_partition(g, map, ep.rank());
            let mut w = Walker::new(&part, map, 1, 128, rank_stream(3, ep.rank(), WALK_STREAM));
            let root = super::super::sample_root_edge(&part, &mut w.rng)?;
            let out = w.remote_walk(ep, Some(root), 6, None)?;
            Ok((out, w.local.clone(), w.remote.clone(), w.visited().iter().sum::<u64>()))
        })
        .unwrap();
        let total: u64 = report.results.iter().map(|r| r.3).sum();
        let out = report.results[0].0;
        assert_eq!(out.visits, total);
        // two chains, each adding at most one visit past the decision superstep
        assert!((6..=6 + 2 + 2).contains(&total), "total visits {total}");
        for (_, local, remote, _) in &report.results {
            for &(a, b) in local.iter().chain(remote) {
                assert!(g.has_edge(a, b), "({a}, {b}) is not an edge");
            }
        }
    }

    #[test]
    fn zero_steps_exchanges_only_markers() {
        let g = graph("0 1\n1 2\n2 3\n3 0\n");
        let map = partition_first_fit(&g, 2).unwrap().map;
        let (g, map) = (&g, &map);
        let report = run_world(&WorldConfig::fuzzed(2, 9), |ep| {
            let part = build_local_partition(g, map, ep.rank());
            let mut w = Walker::new(&part, map, 2, 128, rank_stream(3, ep.rank(), WALK_STREAM));
            let out = w.remote_walk(ep, Some((map.range(ep.rank()).start, 0)), 0, None)?;
            Ok((out, w.local.len() + w.remote.len()))
        })
        .unwrap();
        for (rank, (out, pairs)) in report.results.iter().enumerate() {
            assert_eq!(*pairs, 0);
            assert_eq!(out.supersteps, 1);
            assert_eq!(report.counters[rank].setup.exit_markers, 1);
            assert_eq!(report.counters[rank].setup.p2p_messages, 0);
        }
    }
}
