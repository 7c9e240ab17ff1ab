use std::any::{type_name, Any};
use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::counters::{Counters, Phase, PhaseCounters};
use super::{
    DeadlockReport, MessageBuffer, RankDiagnosis, ReduceOp, RequestHandle, ScheduleMode,
    TransportError, WorldError,
};
use crate::rng::{rank_stream, SCHEDULE_STREAM};
use crate::Rank;

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub ranks: usize,
    pub seed: u64,
    pub mode: ScheduleMode,
    pub record_transcript: bool,
    /// Scheduler rounds (of `ranks` turns each) without progress before the
    /// world is declared stuck. Defaults to `10 * ranks`.
    pub quiescence_rounds: Option<u64>,
}

impl WorldConfig {
    pub fn new(ranks: usize, seed: u64, mode: ScheduleMode) -> Self {
        Self {
            ranks,
            seed,
            mode,
            record_transcript: false,
            quiescence_rounds: None,
        }
    }

    pub fn deterministic(ranks: usize, seed: u64) -> Self {
        Self::new(ranks, seed, ScheduleMode::Deterministic)
    }

    pub fn fuzzed(ranks: usize, seed: u64) -> Self {
        Self::new(ranks, seed, ScheduleMode::Fuzzed)
    }

    pub fn with_transcript(mut self) -> Self {
        self.record_transcript = true;
        self
    }
}

/// One transcript record: which rank did what at which logical step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub step: u64,
    pub rank: Rank,
    pub what: String,
}

#[derive(Debug)]
pub struct WorldReport<T> {
    pub results: Vec<T>,
    pub counters: Vec<PhaseCounters>,
    pub transcript: Vec<Event>,
    /// Logical steps taken by the scheduler.
    pub steps: u64,
    /// Wall time each rank spent holding the baton, per phase.
    pub busy_time: Vec<[Duration; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Runnable,
    Blocked,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
enum CollKind {
    AllToAll { payload: &'static str, label: &'static str },
    AllReduce { op: ReduceOp, len: usize },
}

struct PendingCollective {
    seq: u64,
    kind: CollKind,
    contributions: Vec<Option<Box<dyn Any + Send>>>,
    arrived: usize,
}

enum HandleState {
    Send { done: bool, observed: bool },
    Recv { message: Option<MessageBuffer>, count: Option<usize>, observed: bool },
    Barrier { epoch: usize },
}

struct Packet {
    send: u64,
    buf: MessageBuffer,
}

struct BarrierEpoch {
    entered: Vec<Option<u64>>,
    final_entry: Option<u64>,
    observed: Vec<bool>,
}

enum Poison {
    Deadlock(DeadlockReport),
    Protocol(String),
    RankFailed(Rank),
    Panicked(Rank, String),
}

struct SimState {
    p: usize,
    mode: ScheduleMode,
    rng: ChaCha8Rng,
    clock: u64,
    current: Option<Rank>,
    status: Vec<Status>,
    last_op: Vec<String>,
    phase: Vec<Phase>,
    counters: Vec<PhaseCounters>,
    busy: Vec<[Duration; 3]>,
    turn_started: Instant,
    sources: Vec<Vec<Rank>>,
    targets: Vec<Vec<Rank>>,
    /// In-flight packets, indexed `src * p + dst`.
    channels: Vec<VecDeque<Packet>>,
    /// Preposted receive handles, indexed `dst * p + src`.
    preposted: Vec<VecDeque<u64>>,
    handles: HashMap<u64, HandleState>,
    next_handle: u64,
    pending: Option<PendingCollective>,
    coll_seq: Vec<u64>,
    coll_result: Vec<Option<Box<dyn Any + Send>>>,
    barriers: Vec<BarrierEpoch>,
    barrier_entries: Vec<usize>,
    idle_turns: u64,
    quiescence_turns: u64,
    poison: Option<Poison>,
    transcript: Option<Vec<Event>>,
}

impl SimState {
    fn record(&mut self, rank: Rank, what: impl FnOnce() -> String) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(Event {
                step: self.clock,
                rank,
                what: what(),
            });
        }
    }

    fn counters(&mut self, rank: Rank) -> &mut Counters {
        let phase = self.phase[rank];
        self.counters[rank].get_mut(phase)
    }

    fn aborted(&self) -> TransportError {
        match &self.poison {
            Some(Poison::Deadlock(r)) => TransportError::Aborted(format!("world stopped: {r}")),
            Some(Poison::Protocol(m)) => TransportError::Protocol(m.clone()),
            Some(Poison::RankFailed(r)) => TransportError::Aborted(format!("rank {r} failed")),
            Some(Poison::Panicked(r, _)) => TransportError::Aborted(format!("rank {r} panicked")),
            None => TransportError::Aborted("world stopped".into()),
        }
    }

    fn new_handle(&mut self, state: HandleState) -> RequestHandle {
        self.next_handle += 1;
        self.handles.insert(self.next_handle, state);
        RequestHandle(self.next_handle)
    }

    fn account_time(&mut self, rank: Rank) {
        let now = Instant::now();
        let phase = self.phase[rank].index();
        self.busy[rank][phase] += now.saturating_duration_since(self.turn_started);
        self.turn_started = now;
    }

    /// Moves packets from channel `src -> dst` into preposted receives.
    fn deliver(&mut self, src: Rank, dst: Rank, limit: usize) -> usize {
        let mut moved = 0;
        while moved < limit {
            let ch = src * self.p + dst;
            let slot = dst * self.p + src;
            if self.channels[ch].is_empty() || self.preposted[slot].is_empty() {
                break;
            }
            let packet = self.channels[ch].pop_front().unwrap();
            let recv = self.preposted[slot].pop_front().unwrap();
            let len = packet.buf.len();
            if let Some(HandleState::Send { done, .. }) = self.handles.get_mut(&packet.send) {
                *done = true;
            }
            self.handles.insert(
                recv,
                HandleState::Recv {
                    message: Some(packet.buf),
                    count: Some(len),
                    observed: false,
                },
            );
            let c = self.counters(dst);
            if len == 0 {
                c.exit_markers_received += 1;
            } else {
                c.p2p_messages_received += 1;
                c.p2p_entries_received += len as u64;
            }
            moved += 1;
        }
        moved
    }

    fn deliver_random(&mut self) -> usize {
        let mut moved = 0;
        for src in 0..self.p {
            for dst in 0..self.p {
                if !self.channels[src * self.p + dst].is_empty() && self.rng.gen_bool(0.5) {
                    moved += self.deliver(src, dst, 1);
                }
            }
        }
        moved
    }

    fn deliver_all(&mut self) -> usize {
        let mut moved = 0;
        for src in 0..self.p {
            for dst in 0..self.p {
                moved += self.deliver(src, dst, usize::MAX);
            }
        }
        moved
    }

    fn diagnose(&self, livelock: bool) -> DeadlockReport {
        let missing = match &self.pending {
            Some(p) => (0..self.p).filter(|&r| p.contributions[r].is_none()).collect(),
            None => Vec::new(),
        };
        DeadlockReport {
            step: self.clock,
            livelock,
            missing_participants: missing,
            ranks: (0..self.p)
                .map(|r| RankDiagnosis {
                    rank: r,
                    state: match self.status[r] {
                        Status::Runnable => "runnable",
                        Status::Blocked => "blocked",
                        Status::Finished => "finished",
                    }
                    .to_string(),
                    last_op: self.last_op[r].clone(),
                })
                .collect(),
        }
    }

    /// Hands the baton to the next runnable rank (possibly `me` again).
    fn schedule(&mut self) {
        self.clock += 1;
        if self.mode == ScheduleMode::Fuzzed && self.deliver_random() > 0 {
            self.idle_turns = 0;
        }
        if self.idle_turns >= self.quiescence_turns {
            // Polling only: flush whatever can move before declaring a hang.
            if self.deliver_all() > 0 {
                self.idle_turns = 0;
            } else {
                let report = self.diagnose(true);
                self.poison = Some(Poison::Deadlock(report));
                self.current = None;
                return;
            }
        }
        let runnable: Vec<Rank> = (0..self.p).filter(|&r| self.status[r] == Status::Runnable).collect();
        if runnable.is_empty() {
            self.current = None;
            if self.status.contains(&Status::Blocked) {
                let report = self.diagnose(false);
                self.poison = Some(Poison::Deadlock(report));
            }
            return;
        }
        let next = match self.mode {
            ScheduleMode::Deterministic => {
                let from = self.current.map(|c| c + 1).unwrap_or(0);
                (0..self.p)
                    .map(|i| (from + i) % self.p)
                    .find(|r| self.status[*r] == Status::Runnable)
                    .unwrap()
            }
            ScheduleMode::Fuzzed => *runnable.choose(&mut self.rng).unwrap(),
        };
        self.current = Some(next);
    }
}

struct Shared {
    state: Mutex<SimState>,
    turn: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, SimState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A rank's handle on the world. Only the owning rank's program uses it.
pub struct Endpoint {
    rank: Rank,
    size: usize,
    shared: Arc<Shared>,
}

impl Endpoint {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn world_size(&self) -> usize {
        self.size
    }

    /// Logical step of the simulator clock.
    pub fn step(&self) -> u64 {
        self.shared.lock().clock
    }

    pub fn phase(&self) -> Phase {
        self.shared.lock().phase[self.rank]
    }

    pub fn set_phase(&mut self, phase: Phase) {
        let mut st = self.shared.lock();
        st.account_time(self.rank);
        st.phase[self.rank] = phase;
    }

    pub fn counters(&self) -> PhaseCounters {
        self.shared.lock().counters[self.rank].clone()
    }

    /// Declares the ranks this rank receives from and sends to.
    pub fn set_neighbors(&mut self, sources: &[Rank], targets: &[Rank]) -> Result<(), TransportError> {
        for (list, what) in [(sources, "sources"), (targets, "targets")] {
            let mut sorted = list.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(TransportError::Usage(format!("{what} contain duplicates")));
            }
            if list.iter().any(|&r| r == self.rank || r >= self.size) {
                return Err(TransportError::Usage(format!(
                    "{what} must name other ranks in 0..{}",
                    self.size
                )));
            }
        }
        let mut st = self.shared.lock();
        st.sources[self.rank] = sources.to_vec();
        st.targets[self.rank] = targets.to_vec();
        Ok(())
    }

    pub fn sources(&self) -> Vec<Rank> {
        self.shared.lock().sources[self.rank].clone()
    }

    pub fn targets(&self) -> Vec<Rank> {
        self.shared.lock().targets[self.rank].clone()
    }

    /// Starts a new superstep for the per-superstep payload statistic.
    pub fn begin_superstep(&mut self) {
        let mut st = self.shared.lock();
        let c = st.counters(self.rank);
        c.supersteps += 1;
        c.superstep_entries = 0;
    }

    fn enter(&self) -> Result<MutexGuard<'_, SimState>, TransportError> {
        let st = self.shared.lock();
        if st.poison.is_some() {
            return Err(st.aborted());
        }
        debug_assert_eq!(st.current, Some(self.rank), "transport call outside the rank's turn");
        Ok(st)
    }

    /// Ends an operation: bookkeeping, then give up the baton until it returns.
    fn yield_turn<'a>(
        &'a self,
        mut st: MutexGuard<'a, SimState>,
        progress: bool,
    ) -> Result<MutexGuard<'a, SimState>, TransportError> {
        let me = self.rank;
        if progress {
            st.idle_turns = 0;
        } else {
            st.idle_turns += 1;
        }
        st.counters(me).turns += 1;
        st.account_time(me);
        st.schedule();
        if st.current != Some(me) {
            self.shared.turn.notify_all();
            while st.current != Some(me) && st.poison.is_none() {
                st = self.shared.turn.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        }
        if st.poison.is_some() {
            self.shared.turn.notify_all();
            return Err(st.aborted());
        }
        st.turn_started = Instant::now();
        Ok(st)
    }

    /// Simulated local work: consumes one scheduler turn.
    pub fn tick(&mut self) -> Result<(), TransportError> {
        let mut st = self.enter()?;
        st.last_op[self.rank] = "tick".into();
        st.record(self.rank, || "tick".into());
        self.yield_turn(st, true).map(drop)
    }

    pub fn isend(&mut self, dest: Rank, buf: MessageBuffer) -> Result<RequestHandle, TransportError> {
        let mut st = self.enter()?;
        let me = self.rank;
        if !st.targets[me].contains(&dest) {
            return Err(TransportError::Usage(format!("rank {me} may not send to {dest}: not a declared target")));
        }
        let len = buf.len() as u64;
        {
            let c = st.counters(me);
            if len == 0 {
                c.exit_markers += 1;
            } else {
                c.p2p_messages += 1;
                c.p2p_entries += len;
                c.superstep_entries += len;
                c.max_superstep_p2p_entries = c.max_superstep_p2p_entries.max(c.superstep_entries);
            }
        }
        let handle = st.new_handle(HandleState::Send { done: false, observed: false });
        st.last_op[me] = format!("isend to {dest}");
        if st.transcript.is_some() {
            let digest = digest(buf.entries());
            st.record(me, || format!("isend dst={dest} len={len} digest={digest:016x}"));
        }
        let p = st.p;
        st.channels[me * p + dest].push_back(Packet { send: handle.0, buf });
        if st.mode == ScheduleMode::Deterministic {
            st.deliver(me, dest, usize::MAX);
        }
        drop(self.yield_turn(st, true)?);
        Ok(handle)
    }

    pub fn irecv_prepost(&mut self, src: Rank) -> Result<RequestHandle, TransportError> {
        let mut st = self.enter()?;
        let me = self.rank;
        if !st.sources[me].contains(&src) {
            return Err(TransportError::Usage(format!("rank {me} has no source {src}")));
        }
        let handle = st.new_handle(HandleState::Recv { message: None, count: None, observed: false });
        let p = st.p;
        st.preposted[me * p + src].push_back(handle.0);
        st.last_op[me] = format!("irecv from {src}");
        st.record(me, || format!("irecv src={src}"));
        if st.mode == ScheduleMode::Deterministic {
            st.deliver(src, me, usize::MAX);
        }
        drop(self.yield_turn(st, true)?);
        Ok(handle)
    }

    fn poll(st: &mut SimState, me: Rank, handle: RequestHandle) -> Result<(bool, bool), TransportError> {
        let epoch = match st.handles.get_mut(&handle.0) {
            None => {
                return Err(TransportError::Usage(format!(
                    "rank {me} tested an unknown or null request handle"
                )))
            }
            Some(HandleState::Send { done, observed }) => {
                let fresh = *done && !*observed;
                *observed |= *done;
                return Ok((*done, fresh));
            }
            Some(HandleState::Recv { count, observed, .. }) => {
                let done = count.is_some();
                let fresh = done && !*observed;
                *observed |= done;
                return Ok((done, fresh));
            }
            Some(HandleState::Barrier { epoch }) => *epoch,
        };
        let b = &mut st.barriers[epoch];
        let done = b.final_entry.is_some();
        let fresh = done && !b.observed[me];
        b.observed[me] |= done;
        Ok((done, fresh))
    }

    /// Nonblocking completion test; true stays true.
    pub fn test(&mut self, handle: RequestHandle) -> Result<bool, TransportError> {
        let mut st = self.enter()?;
        let me = self.rank;
        let (done, fresh) = Self::poll(&mut st, me, handle)?;
        st.last_op[me] = format!("test {}", handle.0);
        st.record(me, || format!("test h={} -> {done}", handle.0));
        drop(self.yield_turn(st, fresh)?);
        Ok(done)
    }

    /// Indices into `handles` whose operations have completed.
    pub fn test_some(&mut self, handles: &[RequestHandle]) -> Result<Vec<usize>, TransportError> {
        let mut st = self.enter()?;
        let me = self.rank;
        let mut done = Vec::new();
        let mut any_fresh = false;
        for (i, &h) in handles.iter().enumerate() {
            let (d, fresh) = Self::poll(&mut st, me, h)?;
            if d {
                done.push(i);
            }
            any_fresh |= fresh;
        }
        st.last_op[me] = format!("test_some over {} handles", handles.len());
        st.record(me, || format!("test_some n={} -> {done:?}", handles.len()));
        drop(self.yield_turn(st, any_fresh)?);
        Ok(done)
    }

    /// Entry count of a completed receive; zero marks an exit message.
    pub fn get_count(&self, handle: RequestHandle) -> Result<usize, TransportError> {
        let st = self.shared.lock();
        match st.handles.get(&handle.0) {
            Some(HandleState::Recv { count: Some(c), .. }) => Ok(*c),
            Some(HandleState::Recv { count: None, .. }) => {
                Err(TransportError::Usage("get_count on an incomplete receive".into()))
            }
            _ => Err(TransportError::Usage("get_count needs a receive handle".into())),
        }
    }

    /// Takes the payload of a completed receive.
    pub fn take_message(&mut self, handle: RequestHandle) -> Result<MessageBuffer, TransportError> {
        let mut st = self.shared.lock();
        match st.handles.get_mut(&handle.0) {
            Some(HandleState::Recv { message, count: Some(_), .. }) => message
                .take()
                .ok_or_else(|| TransportError::Usage("receive payload already taken".into())),
            _ => Err(TransportError::Usage("take_message needs a completed receive".into())),
        }
    }

    /// Forgets a handle. Releasing an incomplete operation is a usage error.
    pub fn release(&mut self, handle: RequestHandle) -> Result<(), TransportError> {
        let mut st = self.shared.lock();
        let complete = match st.handles.get(&handle.0) {
            Some(HandleState::Send { done, .. }) => *done,
            Some(HandleState::Recv { count, .. }) => count.is_some(),
            Some(HandleState::Barrier { epoch }) => st.barriers[*epoch].final_entry.is_some(),
            None => return Err(TransportError::Usage("release of unknown handle".into())),
        };
        if !complete {
            return Err(TransportError::Usage("release of an incomplete request".into()));
        }
        st.handles.remove(&handle.0);
        Ok(())
    }

    /// Enters the next nonblocking barrier epoch.
    pub fn ibarrier(&mut self) -> Result<RequestHandle, TransportError> {
        let mut st = self.enter()?;
        let me = self.rank;
        let p = st.p;
        let epoch = st.barrier_entries[me];
        st.barrier_entries[me] += 1;
        while st.barriers.len() <= epoch {
            st.barriers.push(BarrierEpoch {
                entered: vec![None; p],
                final_entry: None,
                observed: vec![false; p],
            });
        }
        let clock = st.clock;
        let b = &mut st.barriers[epoch];
        b.entered[me] = Some(clock);
        if b.entered.iter().all(Option::is_some) {
            b.final_entry = Some(clock);
        }
        st.counters(me).barriers += 1;
        st.last_op[me] = format!("ibarrier epoch {epoch}");
        st.record(me, || format!("ibarrier epoch={epoch}"));
        let handle = st.new_handle(HandleState::Barrier { epoch });
        drop(self.yield_turn(st, true)?);
        Ok(handle)
    }

    /// Step at which every rank had entered barrier `handle`, if all have.
    pub fn barrier_final_entry(&self, handle: RequestHandle) -> Option<u64> {
        let st = self.shared.lock();
        match st.handles.get(&handle.0) {
            Some(HandleState::Barrier { epoch }) => st.barriers[*epoch].final_entry,
            _ => None,
        }
    }

    /// Generic rendezvous. `complete` runs once, on the last rank to arrive,
    /// and maps all contributions (by rank) to all results (by rank).
    fn collective<C, R>(
        &mut self,
        kind: CollKind,
        contribution: C,
        complete: impl FnOnce(Vec<C>) -> Result<Vec<R>, String>,
    ) -> Result<R, TransportError>
    where
        C: Send + 'static,
        R: Send + 'static,
    {
        let mut st = self.enter()?;
        let me = self.rank;
        let p = st.p;
        let seq = st.coll_seq[me];
        st.coll_seq[me] += 1;
        st.last_op[me] = format!("collective #{seq} {kind:?}");
        st.record(me, || format!("enter collective #{seq} {kind:?}"));

        if st.pending.is_none() {
            st.pending = Some(PendingCollective {
                seq,
                kind: kind.clone(),
                contributions: (0..p).map(|_| None).collect(),
                arrived: 0,
            });
        }
        let pending = st.pending.as_mut().unwrap();
        if pending.seq != seq || pending.kind != kind {
            let msg = format!(
                "collective mismatch: rank {me} called #{seq} {kind:?} while #{} {:?} is open",
                pending.seq, pending.kind
            );
            st.poison = Some(Poison::Protocol(msg.clone()));
            self.shared.turn.notify_all();
            return Err(TransportError::Protocol(msg));
        }
        pending.contributions[me] = Some(Box::new(contribution));
        pending.arrived += 1;

        if pending.arrived == p {
            let pending = st.pending.take().unwrap();
            let inputs: Vec<C> = pending
                .contributions
                .into_iter()
                .map(|c| *c.unwrap().downcast::<C>().expect("collective kinds matched"))
                .collect();
            let outputs = match complete(inputs) {
                Ok(o) => o,
                Err(msg) => {
                    st.poison = Some(Poison::Protocol(msg.clone()));
                    self.shared.turn.notify_all();
                    return Err(TransportError::Protocol(msg));
                }
            };
            for (r, out) in outputs.into_iter().enumerate() {
                st.coll_result[r] = Some(Box::new(out));
                if r != me {
                    st.status[r] = Status::Runnable;
                }
            }
            st.record(me, || format!("complete collective #{seq}"));
        } else {
            st.status[me] = Status::Blocked;
        }
        let mut st = self.yield_turn(st, true)?;
        let out = st.coll_result[me]
            .take()
            .expect("collective result present after completion");
        Ok(*out.downcast::<R>().expect("collective result type"))
    }

    pub fn all_reduce(&mut self, value: u64, op: ReduceOp) -> Result<u64, TransportError> {
        Ok(self.all_reduce_vec(&[value], op)?[0])
    }

    /// Elementwise reduction of equal-length vectors; one collective.
    pub fn all_reduce_vec(&mut self, values: &[u64], op: ReduceOp) -> Result<Vec<u64>, TransportError> {
        {
            let mut st = self.enter()?;
            let me = self.rank;
            st.counters(me).all_reduce += 1;
        }
        let kind = CollKind::AllReduce { op, len: values.len() };
        self.collective(kind, values.to_vec(), move |inputs: Vec<Vec<u64>>| {
            let len = inputs[0].len();
            let mut acc = inputs[0].clone();
            for v in &inputs[1..] {
                for i in 0..len {
                    acc[i] = match op {
                        ReduceOp::Max => acc[i].max(v[i]),
                        ReduceOp::Sum => acc[i].checked_add(v[i]).ok_or("all_reduce sum overflow")?,
                    };
                }
            }
            Ok(vec![acc; inputs.len()])
        })
    }

    fn exchange<T: Send + 'static>(
        &mut self,
        sends: Vec<Vec<T>>,
        label: &'static str,
        count_invocation: bool,
    ) -> Result<Vec<Vec<T>>, TransportError> {
        if sends.len() != self.size {
            return Err(TransportError::Usage(format!(
                "all-to-all needs {} destination slots, got {}",
                self.size,
                sends.len()
            )));
        }
        {
            let mut st = self.enter()?;
            let me = self.rank;
            let sent: u64 = sends.iter().map(|s| s.len() as u64).sum();
            let c = st.counters(me);
            if count_invocation {
                c.all_to_all += 1;
            }
            c.all_to_all_entries += sent;
        }
        let kind = CollKind::AllToAll { payload: type_name::<T>(), label };
        let received = self.collective(kind, sends, |inputs: Vec<Vec<Vec<T>>>| {
            let p = inputs.len();
            let mut out: Vec<Vec<Vec<T>>> = (0..p).map(|_| Vec::with_capacity(p)).collect();
            for row in inputs {
                for (dst, payload) in row.into_iter().enumerate() {
                    out[dst].push(payload);
                }
            }
            Ok(out)
        })?;
        let got: u64 = received.iter().map(|r| r.len() as u64).sum();
        let mut st = self.shared.lock();
        st.counters(self.rank).all_to_all_entries_received += got;
        Ok(received)
    }

    /// Variable all-to-all: `sends[d]` goes to rank `d`; the result is indexed
    /// by source rank, in ascending order.
    pub fn all_to_all_v<T: Send + 'static>(&mut self, sends: Vec<Vec<T>>) -> Result<Vec<Vec<T>>, TransportError> {
        self.exchange(sends, "all_to_all_v", true)
    }

    /// Request/reply all-to-all: `requests[d]` goes to rank `d`, which answers
    /// with `serve(source, requests)`; replies come back indexed by the rank
    /// that produced them. Counted as one all-to-all invocation.
    pub fn all_to_all_request<Q, R, E>(
        &mut self,
        requests: Vec<Vec<Q>>,
        mut serve: impl FnMut(Rank, Vec<Q>) -> Result<Vec<R>, E>,
    ) -> Result<Vec<Vec<R>>, E>
    where
        Q: Send + 'static,
        R: Send + 'static,
        E: From<TransportError>,
    {
        let incoming = self.exchange(requests, "request", true)?;
        let mut replies = Vec::with_capacity(incoming.len());
        for (src, reqs) in incoming.into_iter().enumerate() {
            replies.push(serve(src, reqs)?);
        }
        Ok(self.exchange(replies, "reply", false)?)
    }
}

fn digest(entries: &[(u32, u32)]) -> u64 {
    // FNV-1a over the edge records
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &(a, b) in entries {
        for byte in a.to_le_bytes().into_iter().chain(b.to_le_bytes()) {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs `program` once per rank to completion.
///
/// Deterministic mode gives identical transcripts and counters for identical
/// seeds; fuzzed mode explores a seed-chosen interleaving under per-channel
/// FIFO delivery.
pub fn run_world<T, F>(config: &WorldConfig, program: F) -> Result<WorldReport<T>, WorldError>
where
    T: Send,
    F: Fn(&mut Endpoint) -> crate::Result<T> + Sync,
{
    let p = config.ranks;
    if p == 0 {
        return Err(WorldError::Config("world needs at least one rank".into()));
    }
    let mut rng = rank_stream(config.seed, 0, SCHEDULE_STREAM);
    let first = match config.mode {
        ScheduleMode::Deterministic => 0,
        ScheduleMode::Fuzzed => rng.gen_range(0..p),
    };
    let rounds = config.quiescence_rounds.unwrap_or(10 * p as u64).max(1);
    let state = SimState {
        p,
        mode: config.mode,
        rng,
        clock: 0,
        current: Some(first),
        status: vec![Status::Runnable; p],
        last_op: vec!["start".into(); p],
        phase: vec![Phase::Setup; p],
        counters: vec![PhaseCounters::default(); p],
        busy: vec![[Duration::ZERO; 3]; p],
        turn_started: Instant::now(),
        sources: vec![Vec::new(); p],
        targets: vec![Vec::new(); p],
        channels: (0..p * p).map(|_| VecDeque::new()).collect(),
        preposted: (0..p * p).map(|_| VecDeque::new()).collect(),
        handles: HashMap::new(),
        next_handle: 0,
        pending: None,
        coll_seq: vec![0; p],
        coll_result: (0..p).map(|_| None).collect(),
        barriers: Vec::new(),
        barrier_entries: vec![0; p],
        idle_turns: 0,
        quiescence_turns: rounds * p as u64,
        poison: None,
        transcript: config.record_transcript.then(Vec::new),
    };
    let shared = Arc::new(Shared {
        state: Mutex::new(state),
        turn: Condvar::new(),
    });

    let outcomes: Vec<Result<crate::Result<T>, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..p)
            .map(|rank| {
                let shared = Arc::clone(&shared);
                let program = &program;
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(scope, move || {
                        let mut ep = Endpoint { rank, size: p, shared };
                        {
                            let mut st = ep.shared.lock();
                            while st.current != Some(rank) && st.poison.is_none() {
                                st = ep.shared.turn.wait(st).unwrap_or_else(|e| e.into_inner());
                            }
                            st.turn_started = Instant::now();
                        }
                        let outcome = catch_unwind(AssertUnwindSafe(|| program(&mut ep)));
                        let mut st = ep.shared.lock();
                        st.status[rank] = Status::Finished;
                        st.last_op[rank] = "finished".into();
                        let failed = match &outcome {
                            Ok(Ok(_)) => None,
                            Ok(Err(_)) => Some(Poison::RankFailed(rank)),
                            Err(payload) => Some(Poison::Panicked(rank, panic_message(payload.as_ref()))),
                        };
                        match failed {
                            Some(poison) if st.poison.is_none() => {
                                st.poison = Some(poison);
                                st.current = None;
                            }
                            Some(_) => {}
                            None => {
                                if st.poison.is_none() && st.current == Some(rank) {
                                    st.account_time(rank);
                                    st.schedule();
                                }
                            }
                        }
                        drop(st);
                        ep.shared.turn.notify_all();
                        outcome.map_err(|payload| panic_message(payload.as_ref()))
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| Err(panic_message(p.as_ref()))))
            .collect()
    });

    let mut st = shared.lock();
    match st.poison.take() {
        Some(Poison::Deadlock(report)) => return Err(WorldError::Deadlock(report)),
        Some(Poison::Protocol(msg)) => return Err(WorldError::Protocol(msg)),
        Some(Poison::Panicked(rank, message)) => return Err(WorldError::RankPanicked { rank, message }),
        Some(Poison::RankFailed(rank)) => {
            let mut outcomes = outcomes;
            let source = match outcomes.swap_remove(rank) {
                Ok(Err(e)) => e,
                _ => crate::Error::Config("rank failed without an error value".into()),
            };
            return Err(WorldError::RankFailed {
                rank,
                source: Box::new(source),
            });
        }
        None => {}
    }
    let mut results = Vec::with_capacity(p);
    for (rank, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(Ok(v)) => results.push(v),
            Ok(Err(e)) => return Err(WorldError::RankFailed { rank, source: Box::new(e) }),
            Err(message) => return Err(WorldError::RankPanicked { rank, message }),
        }
    }
    Ok(WorldReport {
        results,
        counters: std::mem::take(&mut st.counters),
        transcript: st.transcript.take().unwrap_or_default(),
        steps: st.clock,
        busy_time: std::mem::take(&mut st.busy),
    })
}
