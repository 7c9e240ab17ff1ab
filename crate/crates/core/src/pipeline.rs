//! End-to-end run: load, partition, train on the simulated world, evaluate,
//! and write embeddings, metrics and traces.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::eval::{f1_report, fit_ovr_logreg, make_split, Embeddings, F1Report, LogRegConfig};
use crate::graph::{
    build_local_partition, edge_balance, ingest_edge_list, partition_first_fit, read_binary_csr, read_labels,
    write_binary_csr, Directedness, EdgeBalance, GlobalGraph, LocalPartition,
};
use crate::rng::{rank_stream, EVAL_STREAM};
use crate::sampling::{BatchRecord, SamplerStats, WalkConfig};
use crate::training::{train_rank, BatchStats, Hyperparams, NegativeSampler, RankOutcome, TrainSetup};
use crate::transport::{counter_report, run_world, CostTerms, PhaseCounters, ScheduleMode, WorldConfig};
use crate::{Error, Result, VertexId};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"NME1";
pub const EMBEDDING_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    EdgeList,
    Csr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub directed_input: bool,
    pub ranks: usize,
    pub walk: WalkConfig,
    pub hp: Hyperparams,
    /// Overrides `walk.num_batches` with `epochs * ceil(2|E| / (p * B))`.
    pub epochs: Option<usize>,
    pub seed: u64,
    pub schedule: ScheduleMode,
    pub labels: Option<PathBuf>,
    pub train_fraction: f64,
    pub logreg: LogRegConfig,
    pub out_embeddings: Option<PathBuf>,
    pub out_metrics: Option<PathBuf>,
    pub out_csr: Option<PathBuf>,
    pub trace_pairs: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            format: InputFormat::EdgeList,
            directed_input: false,
            ranks: 1,
            walk: WalkConfig::default(),
            hp: Hyperparams::default(),
            epochs: None,
            seed: 1,
            schedule: ScheduleMode::Deterministic,
            labels: None,
            train_fraction: 0.1,
            logreg: LogRegConfig::default(),
            out_embeddings: None,
            out_metrics: None,
            out_csr: None,
            trace_pairs: None,
        }
    }

    /// Checks every precondition that does not need the graph. Augmented
    /// variants are switched to ibarrier synchronization.
    pub fn validated(mut self) -> Result<Self> {
        if self.ranks == 0 {
            return Err(Error::Config("need at least one rank".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        self.walk = self.walk.normalized();
        self.walk.validate()?;
        self.hp.validate()?;
        Ok(self)
    }
}

/// Batches per epoch: enough for the ranks together to see every CSR entry
/// once at batch size `B`.
pub fn batches_per_epoch(num_edges: usize, ranks: usize, batch_size: usize) -> usize {
    (2 * num_edges).div_ceil(ranks * batch_size).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Spread { min: 0.0, max: 0.0, mean: 0.0, std_dev: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Spread {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std_dev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub vertices: usize,
    pub edges: usize,
    pub csr_entries: usize,
    pub partition_balanced: bool,
    pub boundaries: Vec<VertexId>,
    pub local_entries: EdgeBalance,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankMetrics {
    pub rank: usize,
    pub samples: usize,
    pub sampler: SamplerStats,
    pub loop_sampling_collectives: u64,
    pub counters: PhaseCounters,
    pub cost_terms: CostTerms,
    pub generator_calls: Vec<BatchRecord>,
    pub batches: Vec<BatchStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Quality {
    pub labeled: usize,
    pub labels_without_vertex: usize,
    pub train: usize,
    pub test: usize,
    pub classes: usize,
    pub embedding: F1Report,
    pub random_control: F1Report,
}

/// The run's metrics document. Contains no wall-clock values, so identical
/// configurations give identical bytes in deterministic mode.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub config: RunConfig,
    pub num_batches: usize,
    pub graph: GraphSummary,
    pub samples_per_rank: Spread,
    pub cost_terms: CostTerms,
    /// Simulator turns (logical time) per phase, summed over ranks.
    pub turns: PhaseTurns,
    pub ranks: Vec<RankMetrics>,
    pub quality: Option<Quality>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseTurns {
    pub setup: u64,
    pub sampling: u64,
    pub training: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub load_s: f64,
    pub partition_s: f64,
    pub world_s: f64,
    /// Per phase, the largest busy time of any rank.
    pub setup_s: f64,
    pub sampling_s: f64,
    pub training_s: f64,
    pub evaluate_s: f64,
    pub per_rank: Vec<[f64; 3]>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub metrics: Metrics,
    pub timings: Timings,
    pub graph: GlobalGraph,
    /// Row-major vertex embeddings in dense-id order.
    pub embeddings: Vec<f32>,
    pub counter_report: String,
    pub pairs: Vec<(usize, usize, VertexId, VertexId)>,
}

pub fn load_graph(path: &Path, format: InputFormat, directed_input: bool) -> Result<GlobalGraph> {
    match format {
        InputFormat::Csr => read_binary_csr(path),
        InputFormat::EdgeList => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let dir = if directed_input {
                Directedness::Directed
            } else {
                Directedness::Undirected
            };
            let (g, stats) = ingest_edge_list(BufReader::new(file), dir)?;
            log::info!("read {} lines, {} edges kept, {stats:?}", stats.lines, g.num_edges());
            Ok(g)
        }
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs the whole pipeline and writes the configured outputs.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunSummary> {
    let cfg = cfg.validated()?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let graph = load_graph(&cfg.input, cfg.format, cfg.directed_input)?;
    timings.load_s = secs(t.elapsed());
    if let Some(path) = &cfg.out_csr {
        write_binary_csr(&graph, path)?;
    }
    // read labels before any expensive work so a bad path fails fast
    let labels = match &cfg.labels {
        Some(path) => Some(read_labels(path)?),
        None => None,
    };
    let mut summary = train_graph(&cfg, graph, &mut timings)?;

    if let Some(labels) = labels {
        let t = Instant::now();
        summary.metrics.quality = Some(evaluate(&cfg, &summary.graph, &summary.embeddings, &labels)?);
        timings.evaluate_s = secs(t.elapsed());
    }
    summary.timings = timings;
    write_outputs(&cfg, &summary)?;
    Ok(summary)
}

/// Partitions an in-memory graph and trains it; no files are touched.
pub fn train_graph(cfg: &RunConfig, graph: GlobalGraph, timings: &mut Timings) -> Result<RunSummary> {
    let p = cfg.ranks;
    let t = Instant::now();
    let outcome = partition_first_fit(&graph, p)?;
    let map = outcome.map;
    let parts: Vec<LocalPartition> = (0..p).map(|r| build_local_partition(&graph, &map, r)).collect();
    timings.partition_s = secs(t.elapsed());

    let mut walk = cfg.walk;
    if let Some(epochs) = cfg.epochs {
        walk.num_batches = epochs * batches_per_epoch(graph.num_edges(), p, walk.batch_size);
    }
    let negatives = NegativeSampler::new(&graph.degrees(), cfg.hp.alpha)?;
    let record_pairs = cfg.trace_pairs.is_some();

    let world = WorldConfig::new(p, cfg.seed, cfg.schedule);
    let t = Instant::now();
    let report = run_world(&world, |ep| {
        let setup = TrainSetup {
            part: &parts[ep.rank()],
            map: &map,
            walk,
            hp: cfg.hp,
            negatives: &negatives,
            seed: cfg.seed,
            trace: None,
            record_pairs,
        };
        train_rank(ep, &setup)
    })?;
    timings.world_s = secs(t.elapsed());
    timings.per_rank = report.busy_time.iter().map(|b| b.map(secs)).collect();
    for (i, slot) in [&mut timings.setup_s, &mut timings.sampling_s, &mut timings.training_s]
        .into_iter()
        .enumerate()
    {
        *slot = timings.per_rank.iter().map(|r| r[i]).fold(0.0, f64::max);
    }

    let dim = cfg.hp.dim;
    let mut embeddings = Vec::with_capacity(graph.num_vertices() * dim);
    for out in &report.results {
        embeddings.extend_from_slice(out.store.vertex_matrix());
    }
    let mut pairs = Vec::new();
    let mut ranks = Vec::with_capacity(p);
    let mut turns = PhaseTurns::default();
    let mut total_terms = CostTerms::default();
    for (out, counters) in report.results.into_iter().zip(&report.counters) {
        let RankOutcome {
            rank,
            batches,
            sampler,
            records,
            loop_sampling_collectives,
            pair_log,
            ..
        } = out;
        pairs.extend(pair_log.into_iter().map(|(b, (u, v))| (rank, b, u, v)));
        turns.setup += counters.setup.turns;
        turns.sampling += counters.sampling.turns;
        turns.training += counters.training.turns;
        let terms = CostTerms::from_counters(counters);
        add_terms(&mut total_terms, &terms);
        ranks.push(RankMetrics {
            rank,
            samples: batches.iter().map(|b| b.positives).sum(),
            sampler,
            loop_sampling_collectives,
            counters: counters.clone(),
            cost_terms: terms,
            generator_calls: records,
            batches,
        });
    }
    let samples: Vec<f64> = ranks.iter().map(|r| r.samples as f64).collect();
    let metrics = Metrics {
        config: cfg.clone(),
        num_batches: walk.num_batches,
        graph: GraphSummary {
            vertices: graph.num_vertices(),
            edges: graph.num_edges(),
            csr_entries: graph.num_entries(),
            partition_balanced: outcome.balanced,
            boundaries: map.boundaries().to_vec(),
            local_entries: edge_balance(&parts),
        },
        samples_per_rank: Spread::of(&samples),
        cost_terms: total_terms,
        turns,
        ranks,
        quality: None,
    };
    Ok(RunSummary {
        metrics,
        timings: std::mem::take(timings),
        graph,
        embeddings,
        counter_report: counter_report(&report.counters),
        pairs,
    })
}

fn add_terms(acc: &mut CostTerms, t: &CostTerms) {
    acc.synch_all_reduce += t.synch_all_reduce;
    acc.synch_barriers += t.synch_barriers;
    acc.synch_all_to_all += t.synch_all_to_all;
    acc.p2p_messages += t.p2p_messages;
    acc.p2p_entries += t.p2p_entries;
    acc.p2p_exit_markers += t.p2p_exit_markers;
    acc.training_all_to_all += t.training_all_to_all;
    acc.training_all_to_all_entries += t.training_all_to_all_entries;
}

/// Node classification on frozen embeddings plus a random-embedding control
/// of the same shape. `labels` holds original vertex ids.
pub fn evaluate(cfg: &RunConfig, graph: &GlobalGraph, embeddings: &[f32], labels: &[(u64, u64)]) -> Result<Quality> {
    let dense: HashMap<u64, VertexId> = graph
        .original_ids()
        .iter()
        .enumerate()
        .map(|(i, &o)| (o, i as VertexId))
        .collect();
    let mut known = Vec::with_capacity(labels.len());
    let mut missing = 0;
    for &(v, c) in labels {
        match dense.get(&v) {
            Some(&d) => known.push((d, c)),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} labeled vertices do not occur in the graph");
    }
    let split = make_split(&known, cfg.train_fraction, cfg.seed)?;
    let dim = cfg.hp.dim;
    let score = |rows: &[f32]| -> Result<F1Report> {
        let emb = Embeddings::new(rows, dim);
        let model = fit_ovr_logreg(&emb, &split, &cfg.logreg)?;
        let vs: Vec<VertexId> = split.test.iter().map(|t| t.0).collect();
        let truth: Vec<usize> = split.test.iter().map(|t| t.1).collect();
        let pred = model.predict(&emb, &vs)?;
        Ok(f1_report(&truth, &pred, split.num_classes())?)
    };
    let trained = score(embeddings)?;
    let mut rng = rank_stream(cfg.seed, 1, EVAL_STREAM);
    let control: Vec<f32> = (0..embeddings.len()).map(|_| rng.gen::<f32>() - 0.5).collect();
    let random_control = score(&control)?;
    Ok(Quality {
        labeled: known.len(),
        labels_without_vertex: missing,
        train: split.train.len(),
        test: split.test.len(),
        classes: split.num_classes(),
        embedding: trained,
        random_control,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_outputs(cfg: &RunConfig, run: &RunSummary) -> Result<()> {
    if let Some(path) = &cfg.out_embeddings {
        let binary = path.extension().is_some_and(|e| e == "bin");
        if binary {
            std::fs::write(path, encode_embeddings(&run.graph, &run.embeddings, cfg.hp.dim))
                .map_err(|e| Error::io(path, e))?;
        } else {
            write_embeddings_text(path, &run.graph, &run.embeddings, cfg.hp.dim)?;
        }
    }
    if let Some(path) = &cfg.out_metrics {
        std::fs::write(path, metrics_json(&run.metrics)).map_err(|e| Error::io(path, e))?;
        let sidecar = timings_path(path);
        let text = serde_json::to_string_pretty(&run.timings).expect("timings serialize");
        std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))?;
        let counters = counters_path(path);
        std::fs::write(&counters, &run.counter_report).map_err(|e| Error::io(&counters, e))?;
    }
    if let Some(path) = &cfg.trace_pairs {
        let ids = run.graph.original_ids();
        let mut w = create(path)?;
        for &(rank, b, u, v) in &run.pairs {
            writeln!(w, "{rank} {} {} {b}", ids[u as usize], ids[v as usize]).map_err(|e| Error::io(path, e))?;
        }
        finish(w, path)?;
    }
    Ok(())
}

pub fn metrics_json(metrics: &Metrics) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics serialize") + "\n"
}

/// `metrics.json` → `metrics.timings.json`
pub fn timings_path(metrics: &Path) -> PathBuf {
    metrics.with_extension("timings.json")
}

/// `metrics.json` → `metrics.counters.txt`
pub fn counters_path(metrics: &Path) -> PathBuf {
    metrics.with_extension("counters.txt")
}

/// One line per vertex: original id followed by the `dim` coordinates.
pub fn write_embeddings_text(path: &Path, graph: &GlobalGraph, rows: &[f32], dim: usize) -> Result<()> {
    let mut w = create(path)?;
    for (id, row) in graph.original_ids().iter().zip(rows.chunks(dim)) {
        let mut line = id.to_string();
        for x in row {
            line.push(' ');
            line.push_str(&x.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Binary embedding file: magic "NME1", then little-endian u64 version, |V|
/// and d, then |V| original ids (u64) and |V|·d coordinates (f32).
pub fn encode_embeddings(graph: &GlobalGraph, rows: &[f32], dim: usize) -> Vec<u8> {
    let n = graph.num_vertices();
    let mut out = Vec::with_capacity(28 + n * 8 + rows.len() * 4);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    for x in [EMBEDDING_VERSION, n as u64, dim as u64] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &id in graph.original_ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for &x in rows {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_embeddings`]: `(original ids, dim, rows)`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(Vec<u64>, usize, Vec<f32>)> {
    let bad = |m: String| Error::Config(format!("embedding file: {m}"));
    if bytes.len() < 28 || bytes[..4] != EMBEDDING_MAGIC {
        return Err(bad("missing NME1 header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap());
    if word(0) != EMBEDDING_VERSION {
        return Err(bad(format!("unsupported version {}", word(0))));
    }
    let (n, dim) = (word(1), word(2));
    let expect = n
        .checked_mul(8)
        .and_then(|a| n.checked_mul(dim)?.checked_mul(4)?.checked_add(a))
        .and_then(|a| a.checked_add(28));
    if expect != Some(bytes.len() as u64) {
        return Err(bad(format!("{} bytes do not match |V|={n}, d={dim}", bytes.len())));
    }
    let n = n as usize;
    let ids = bytes[28..28 + 8 * n]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let rows = bytes[28 + 8 * n..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ids, dim as usize, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_edge_list, Directedness};

    #[test]
    fn epoch_batch_count() {
        assert_eq!(batches_per_epoch(10, 2, 4), 3);
        assert_eq!(batches_per_epoch(8, 2, 4), 2);
        assert_eq!(batches_per_epoch(0, 2, 4), 1);
    }

    #[test]
    fn embedding_binary_round_trip() {
        let g = parse_edge_list("10 20\n20 30\n", Directedness::Undirected).unwrap().0;
        let rows: Vec<f32> = (0..6).map(|i| i as f32 * 0.5).collect();
        let bytes = encode_embeddings(&g, &rows, 2);
        assert_eq!(bytes.len(), 28 + 3 * 8 + 6 * 4);
        let (ids, dim, back) = decode_embeddings(&bytes).unwrap();
        assert_eq!((ids, dim, back), (vec![10, 20, 30], 2, rows));
        assert!(decode_embeddings(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn aug_variant_is_forced_to_ibarrier() {
        let mut cfg = RunConfig::new("x");
        cfg.walk.variant = crate::sampling::Variant::AugPair;
        let cfg = cfg.validated().unwrap();
        assert_eq!(cfg.walk.sync, crate::sampling::SyncMode::IBarrier);
    }

    #[test]
    fn spread_of_counts() {
        let s = Spread::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((s.min, s.max, s.mean, s.std_dev), (2.0, 9.0, 5.0, 2.0));
    }
}
