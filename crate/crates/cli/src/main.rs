//! `vdnapr`: build activation-histogram descriptors, train the encoder and
//! evaluate place recognition from the command line.

mod commands;
mod meta;
mod plot;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vdnapr_core::{DescriptorKind, NeuronSelection, Threshold};

#[derive(Parser, Debug)]
#[command(name = "vdnapr", version, about = "Place recognition from per-neuron activation histograms")]
struct Cli {
    /// Upper bound on worker threads (defaults to all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world: activations plus a pose manifest.
    Synth(SynthArgs),
    /// Derive per-neuron histogram ranges from an activation file.
    Calibrate(CalibrateArgs),
    /// Accumulate per-sequence VDNAs (or one VDNA over every frame).
    Accumulate(AccumulateArgs),
    /// Train the histogram encoder with cached hard-negative mining.
    Train(TrainArgs),
    /// Turn stored sequence VDNAs into a descriptor file.
    Encode(EncodeArgs),
    /// Merge descriptor files into one database.
    Index(IndexArgs),
    /// Recall@N of query descriptors against a database.
    Eval(EvalArgs),
    /// Mean per-neuron Earth Mover's Distance between two VDNAs.
    Emd(EmdArgs),
    /// Recall per single layer and per layer range.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "VDNAPR_OUT", default_value = "vdnapr-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    places: usize,
    #[arg(long, default_value_t = 2)]
    traversals: usize,
    /// Distance between consecutive places, in meters.
    #[arg(long, default_value_t = 10.0)]
    step: f64,
    #[arg(long, default_value_t = 12)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    neurons: usize,
    /// Activation samples per neuron per frame.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long, value_parser = existing_path)]
    activations: PathBuf,
    #[arg(long, default_value_t = vdnapr_core::vdna::DEFAULT_BINS)]
    bins: usize,
    /// Range widening on each side, as a fraction of max − min.
    #[arg(long, default_value_t = vdnapr_core::vdna::DEFAULT_EXPANSION)]
    expansion: f64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct AccumulateArgs {
    #[arg(long, value_parser = existing_path)]
    activations: PathBuf,
    #[arg(long, value_parser = existing_path)]
    spec: PathBuf,
    #[arg(long, value_parser = existing_path, required_unless_present = "whole")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Write a single VDNA over every frame instead of per-sequence VDNAs.
    #[arg(long, conflicts_with = "manifest")]
    whole: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncoderSize {
    Standard,
    Compact,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_parser = existing_path)]
    manifest: PathBuf,
    #[arg(long, value_parser = existing_path)]
    activations: PathBuf,
    #[arg(long, value_parser = existing_path)]
    spec: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    seq_len: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    weight_decay: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Queries sampled into the mining cache at each refresh.
    #[arg(long, default_value_t = 1000)]
    cache_queries: usize,
    /// Negative pool size sampled at each refresh.
    #[arg(long, default_value_t = 5000)]
    cache_negatives: usize,
    /// Hardest triplets replayed into the next cache.
    #[arg(long, default_value_t = 500)]
    carryover: usize,
    /// Triplets consumed between cache refreshes.
    #[arg(long, default_value_t = 1500)]
    refresh_every: usize,
    /// Ground-truth radius, e.g. `25m` or `2frames` (defaults to the manifest's).
    #[arg(long)]
    threshold: Option<Threshold>,
    #[command(flatten)]
    split: SplitArg,
    /// Traversal used as the validation database (defaults to the first).
    #[arg(long)]
    db_traversal: Option<String>,
    #[arg(long, value_enum, default_value_t = EncoderSize::Standard)]
    encoder: EncoderSize,
    /// Allow positives from the query's own traversal.
    #[arg(long)]
    same_traversal_positives: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug, Clone, Copy)]
struct SplitArg {
    /// Train and validation fractions along each traversal; the rest is test.
    #[arg(long, value_parser = parse_split, default_value = "0.5,0.2")]
    split: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SegmentArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Debug, Clone)]
struct SequenceFilter {
    /// Directory written by `accumulate`.
    #[arg(long, value_parser = existing_path)]
    sequences: PathBuf,
    #[arg(long, value_enum, default_value_t = SegmentArg::All)]
    segment: SegmentArg,
    #[command(flatten)]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long, value_parser = existing_path)]
    checkpoint: PathBuf,
    #[command(flatten)]
    filter: SequenceFilter,
    /// Only encode sequences from this traversal.
    #[arg(long)]
    traversal: Option<String>,
    /// `neuron-concat` or `w-output`.
    #[arg(long, default_value = "neuron-concat")]
    kind: DescriptorKind,
    /// `all`, `layers:10,11`, `range:10:12` or `neurons:0,5`.
    #[arg(long, default_value = "all")]
    select: NeuronSelection,
    /// Output file stem.
    #[arg(long, default_value = "descriptors")]
    name: String,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct IndexArgs {
    /// Descriptor files to merge, in order.
    #[arg(required = true, value_parser = existing_path)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "db")]
    name: String,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_parser = existing_path)]
    db: PathBuf,
    #[arg(long, value_parser = existing_path)]
    queries: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    n: Vec<usize>,
    #[arg(long, default_value = "25m")]
    threshold: Threshold,
    #[arg(long, default_value = "eval")]
    name: String,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct EmdArgs {
    #[arg(value_parser = existing_path)]
    a: PathBuf,
    #[arg(value_parser = existing_path)]
    b: PathBuf,
    #[arg(long, value_parser = existing_path)]
    spec: PathBuf,
    #[arg(long, default_value = "all")]
    select: NeuronSelection,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("ranker").required(true).args(["checkpoint", "emd_spec"]))]
struct SweepArgs {
    /// Rank with encoder descriptors from this checkpoint.
    #[arg(long, value_parser = existing_path)]
    checkpoint: Option<PathBuf>,
    /// Rank by raw-histogram EMD under this spec instead.
    #[arg(long = "emd", value_parser = existing_path)]
    emd_spec: Option<PathBuf>,
    #[command(flatten)]
    filter: SequenceFilter,
    #[arg(long)]
    db_traversal: String,
    /// Query traversal (defaults to every other traversal).
    #[arg(long)]
    query_traversal: Option<String>,
    /// Inclusive layer ranges evaluated after the single layers, e.g. `10:12`.
    #[arg(long = "range", value_parser = parse_range)]
    ranges: Vec<(u32, u32)>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    n: Vec<usize>,
    #[arg(long, default_value = "25m")]
    threshold: Threshold,
    /// Also draw recall against selection as an SVG chart.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    name: String,
    #[command(flatten)]
    out: OutDir,
}

fn existing_path(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("{s} does not exist"))
    }
}

fn parse_split(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `train,validation`, e.g. 0.5,0.2")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad fraction {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad fraction {b:?}"))?;
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0) {
        return Err(format!("fractions must be >= 0 and sum to at most 1, got {a} and {b}"));
    }
    Ok((a, b))
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected `first:last`, e.g. 10:12")?;
    let a = a.trim().parse().map_err(|_| format!("bad layer {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad layer {b:?}"))?;
    Ok((a, b))
}

fn error_name(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<vdnapr_core::Error>() {
            return core.name();
        }
        if cause.is::<std::io::Error>() {
            return "IoError";
        }
    }
    "Error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error[ConfigError]: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_name(&e));
            ExitCode::FAILURE
        }
    }
}
