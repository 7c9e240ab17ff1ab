use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use distembed::pipeline::{run_pipeline, InputFormat, RunConfig};
use distembed::sampling::{SyncMode, Variant, WalkConfig};
use distembed::training::Hyperparams;
use distembed::transport::ScheduleMode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Edgelist,
    Csr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Local,
    Fresh,
    ReuseSpill,
    RefreshSpill,
    AugSingle,
    AugPair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SyncArg {
    Allreduce,
    Ibarrier,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Deterministic,
    Fuzzed,
}

/// Train LINE-style graph embeddings over p simulated ranks.
#[derive(Debug, Parser)]
#[command(name = "distembed", version)]
struct Args {
    /// Edge list ("u v [w]" per line) or binary CSR file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "edgelist")]
    format: FormatArg,
    /// Treat the edge list as directed arcs to be symmetrized.
    #[arg(long)]
    directed: bool,
    /// Number of simulated ranks.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, value_enum, default_value = "fresh")]
    variant: VariantArg,
    /// Defaults to ibarrier for the aug-* variants and allreduce otherwise.
    #[arg(long, value_enum)]
    sync: Option<SyncArg>,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 1, conflicts_with = "epochs")]
    batches: usize,
    /// Passes over the edge set; sets the batch count from |E|, p and B.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Negatives per positive pair.
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    #[arg(long, default_value_t = 1.0)]
    neg_weight: f64,
    #[arg(long, default_value_t = 100)]
    walk_steps: u64,
    #[arg(long, default_value_t = 2)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    buffer_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// "vertex_id class_id" lines; enables node classification.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    train_fraction: f64,
    /// Text output, or binary when the name ends in .bin.
    #[arg(long)]
    out_embeddings: Option<PathBuf>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    /// Also write the input graph as binary CSR.
    #[arg(long)]
    out_csr: Option<PathBuf>,
    /// Dump "rank u v batch_index" for every trained pair.
    #[arg(long)]
    trace_pairs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "deterministic")]
    schedule: ScheduleArg,
}

impl Args {
    fn into_config(self) -> RunConfig {
        let variant = match self.variant {
            VariantArg::Local => Variant::Local,
            VariantArg::Fresh => Variant::Fresh,
            VariantArg::ReuseSpill => Variant::ReuseSpill,
            VariantArg::RefreshSpill => Variant::RefreshSpill,
            VariantArg::AugSingle => Variant::AugSingle,
            VariantArg::AugPair => Variant::AugPair,
        };
        let sync = match self.sync {
            Some(SyncArg::Allreduce) if variant.is_augmented() => {
                log::warn!("{variant} runs with ibarrier synchronization");
                SyncMode::IBarrier
            }
            Some(SyncArg::Allreduce) => SyncMode::AllReduce,
            Some(SyncArg::Ibarrier) => SyncMode::IBarrier,
            None if variant.is_augmented() => SyncMode::IBarrier,
            None => SyncMode::AllReduce,
        };
        let mut cfg = RunConfig::new(self.input);
        cfg.format = match self.format {
            FormatArg::Edgelist => InputFormat::EdgeList,
            FormatArg::Csr => InputFormat::Csr,
        };
        cfg.directed_input = self.directed;
        cfg.ranks = self.ranks;
        cfg.walk = WalkConfig {
            steps: self.walk_steps,
            buffer_size: self.buffer_size,
            window: self.window,
            variant,
            sync,
            batch_size: self.batch_size,
            num_batches: self.batches,
        };
        cfg.hp = Hyperparams {
            dim: self.dim,
            lr: self.lr,
            weight_decay: self.weight_decay,
            negatives: self.negatives,
            neg_weight: self.neg_weight,
            ..Hyperparams::default()
        };
        cfg.epochs = self.epochs;
        cfg.seed = self.seed;
        cfg.schedule = match self.schedule {
            ScheduleArg::Deterministic => ScheduleMode::Deterministic,
            ScheduleArg::Fuzzed => ScheduleMode::Fuzzed,
        };
        cfg.labels = self.labels;
        cfg.train_fraction = self.train_fraction;
        cfg.out_embeddings = self.out_embeddings;
        cfg.out_metrics = self.out_metrics;
        cfg.out_csr = self.out_csr;
        cfg.trace_pairs = self.trace_pairs;
        cfg
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run_pipeline(args.into_config()) {
        Ok(run) => {
            let m = &run.metrics;
            print!(
                "vertices={} edges={} ranks={} batches={} samples={}",
                m.graph.vertices,
                m.graph.edges,
                m.ranks.len(),
                m.num_batches,
                m.ranks.iter().map(|r| r.samples).sum::<usize>()
            );
            if let Some(q) = &m.quality {
                print!(
                    " micro_f1={:.4} macro_f1={:.4} control_micro_f1={:.4}",
                    q.embedding.micro_f1, q.embedding.macro_f1, q.random_control.micro_f1
                );
            }
            println!();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
