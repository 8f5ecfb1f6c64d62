//! Batch pipeline for the popularity-dynamics recommender:
//! preprocess → popdyn → train → eval / transfer / interpolate, plus
//! the leakage audit, the parameter report, and the synthetic
//! generator.

mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "popseq",
    version,
    about = "Sequential recommendation from item popularity dynamics",
    propagate_version = true
)]
struct Cli {
    /// Worker threads (1 = bitwise-reproducible mode).
    #[arg(long, global = true, default_value_t = 1, env = "POPSEQ_THREADS")]
    threads: usize,
    /// Master seed; all randomness derives from named sub-streams.
    #[arg(long, global = true, default_value_t = 0, env = "POPSEQ_SEED")]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Tsv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CacheFormatArg {
    Binary,
    Ndjson,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Test,
    Valid,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Raw interaction log.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Single-character delimiter override (defaults to the format's).
    #[arg(long)]
    delimiter: Option<char>,
    /// Skip a header row.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 0)]
    user_col: usize,
    #[arg(long, default_value_t = 1)]
    item_col: usize,
    #[arg(long, default_value_t = 2)]
    time_col: usize,
    #[arg(long)]
    rating_col: Option<usize>,
    /// Dataset cache to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CacheFormatArg::Binary)]
    cache_format: CacheFormatArg,
}

#[derive(Debug, Args)]
struct PopdynArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Discount factor on coarse counts (0 = current, 1 = cumulative).
    #[arg(long, default_value_t = 0.5, env = "POPSEQ_GAMMA")]
    gamma: f64,
    #[arg(long, default_value_t = 7)]
    fine_days: i64,
    #[arg(long, default_value_t = 4)]
    coarse_fine_ratio: u32,
    /// Calendar buckets (ISO weeks / months) instead of fixed-width.
    #[arg(long)]
    calendar: bool,
    /// Rank against all items, counting never-seen items as zero.
    #[arg(long)]
    include_inactive: bool,
    /// Percentile basis width.
    #[arg(long, default_value_t = 11)]
    k: usize,
    /// Coarse window length.
    #[arg(long, default_value_t = 12)]
    m: usize,
    /// Fine window length.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Prediction-time offset in fine periods.
    #[arg(long, default_value_t = 1)]
    offset: i64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    popcache: PathBuf,
    /// Run directory (default: runs/<timestamp>-<confighash>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML configuration file (flags take precedence over it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds to train (seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Negatives sampled per positive.
    #[arg(long)]
    negatives: Option<usize>,
    /// Loss form: default | paper-literal.
    #[arg(long)]
    loss: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    popcache: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Report file (ndjson).
    #[arg(long)]
    out: PathBuf,
    /// Also dump per-(user, candidate) scores for interpolation.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    /// Sampled negatives per test item.
    #[arg(long, default_value_t = 100)]
    negatives: usize,
    /// Cutoffs (repeatable).
    #[arg(long = "k", default_values_t = vec![10usize])]
    k_list: Vec<usize>,
    /// Prediction-time offset override (fine periods).
    #[arg(long)]
    offset: Option<i64>,
    #[arg(long, value_enum, default_value_t = TargetArg::Test)]
    target: TargetArg,
}

#[derive(Debug, Args)]
struct TransferArgs {
    /// Checkpoint trained on the source domain.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target-domain dataset cache.
    #[arg(long)]
    dataset: PathBuf,
    /// Optional precomputed target popularity cache; must agree with
    /// the checkpoint's pipeline configuration.
    #[arg(long)]
    popcache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scores_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    negatives: usize,
    #[arg(long = "k", default_values_t = vec![10usize])]
    k_list: Vec<usize>,
    #[arg(long)]
    offset: Option<i64>,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    /// Our evaluation report (ndjson, with scores).
    #[arg(long)]
    ours: PathBuf,
    /// External score file (ndjson user/item/score records).
    #[arg(long)]
    external: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LeakageArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamsReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 11)]
    k: usize,
    #[arg(long, default_value_t = 12)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    items: usize,
    /// Horizon in fine periods.
    #[arg(long, default_value_t = 40)]
    horizon: usize,
    #[arg(long, default_value_t = 7)]
    fine_days: i64,
    #[arg(long, default_value_t = 15)]
    events_min: usize,
    #[arg(long, default_value_t = 45)]
    events_max: usize,
    #[arg(long, default_value_t = 0.5)]
    rising: f64,
    #[arg(long, default_value_t = 0.5)]
    decaying: f64,
    #[arg(long, default_value_t = 0.0)]
    cyclic: f64,
    /// Probability an event follows the hazard mixture.
    #[arg(long, default_value_t = 0.8)]
    strength: f64,
    #[arg(long, default_value_t = 0.1)]
    amp_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    amp_hi: f64,
    #[arg(long, value_enum, default_value_t = CacheFormatArg::Binary)]
    cache_format: CacheFormatArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a raw log, binarize, sort, split, and cache the dataset.
    Preprocess(PreprocessArgs),
    /// Build the popularity / percentile tables.
    Popdyn(PopdynArgs),
    /// Train one or more seeds with early stopping.
    Train(TrainArgs),
    /// Leave-one-out evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Zero-shot evaluation of a checkpoint on a disjoint dataset.
    Transfer(TransferArgs),
    /// Post-hoc score interpolation with an external model.
    Interpolate(InterpolateArgs),
    /// Time-leakage audit of a dataset split.
    Leakage(LeakageArgs),
    /// Closed-form and enumerated parameter counts.
    ParamsReport(ParamsReportArgs),
    /// Generate a synthetic dataset with planted popularity dynamics.
    Synth(SynthArgs),
}

fn main() {
    let cli = Cli::parse();
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();
    let result = match cli.command {
        Command::Preprocess(args) => commands::preprocess(&args),
        Command::Popdyn(args) => commands::popdyn(&args),
        Command::Train(args) => commands::train(&args, cli.seed),
        Command::Eval(args) => commands::eval(&args, cli.seed),
        Command::Transfer(args) => commands::transfer(&args, cli.seed),
        Command::Interpolate(args) => commands::interpolate(&args),
        Command::Leakage(args) => commands::leakage(&args),
        Command::ParamsReport(args) => commands::params_report(&args),
        Command::Synth(args) => commands::synth(&args, cli.seed),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
