//! Command-line front end: ingest stream files into sketch containers,
//! merge/diff them, extract samples, and run inverse-distribution queries.
//!
//! Stream files are UTF-8 text, one `<value> <count>` pair per line, with
//! `#` comments and blank lines ignored. Containers are the bit-exact binary
//! format of `tsketch::container`.
//!
//! Exit codes: 0 success, 2 parse/configuration/compatibility errors,
//! 3 counter-capacity admission failures, 4 extraction or estimation errors.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsketch::{
    container, stats, ConfigError, ContainerError, ExtractError, MergeOp, Model, RecoveryKind,
    Sample, SampleLevel, SamplerConfig, SamplerSketch, StatsError, DEFAULT_SEED,
};

#[derive(Parser)]
#[command(name = "tsketch", about = "Exact sampling sketches for turnstile streams", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Strict,
    Nonstrict,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecoveryArg {
    Frs,
    Efrs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MergeOpArg {
    Union,
    Diff,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a stream file and write a sketch container.
    Build(BuildArgs),
    /// Extract a sample from a container as TSV.
    Sample {
        #[arg(long)]
        sketch: PathBuf,
        /// Output path, or `-` for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Combine two compatible containers into one.
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        op: MergeOpArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse-distribution queries against a container's sample.
    Query {
        #[arg(long)]
        sketch: PathBuf,
        #[command(subcommand)]
        query: QueryCommand,
    },
    /// Jaccard similarity of two compatible containers' supports.
    Jaccard {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: ModelArg,
    #[arg(long)]
    recovery: RecoveryArg,
    /// Requested sample size K.
    #[arg(long)]
    k: u64,
    /// Failure probability.
    #[arg(long)]
    delta: f64,
    /// Partial-sample loss bound; required with --recovery efrs.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Universe bound: admissible values are [1, m).
    #[arg(long, default_value_t = 1 << 32)]
    m: u64,
    /// Count bound: counts lie in [-r, r].
    #[arg(long, default_value_t = 1 << 31)]
    r: u64,
    /// Stream-length bound for the counter-capacity admission check.
    #[arg(long, default_value_t = 1 << 32)]
    nmax: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Fraction of distinct surviving values with total exactly --freq.
    InversePoint {
        #[arg(long)]
        freq: i128,
    },
    /// Summed inverse-distribution mass over totals in [--lo, --hi].
    InverseRange {
        #[arg(long)]
        lo: i128,
        #[arg(long)]
        hi: i128,
    },
    /// Totals whose inverse-distribution mass is at least --phi.
    Heavy {
        #[arg(long)]
        phi: f64,
    },
    /// Smallest total with cumulative inverse mass at least --phi.
    Quantile {
        #[arg(long)]
        phi: f64,
    },
}

/// Error category mapped onto the process exit code.
enum CliError {
    /// Parse, configuration, or compatibility problems (exit 2).
    Config(String),
    /// Counter-capacity admission failures (exit 3).
    Admission(String),
    /// Extraction or estimation failures (exit 4).
    Estimation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Admission(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Admission(m) | CliError::Estimation(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::CounterOverflow { .. } => CliError::Admission(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Config(c) => c.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Merge(m) => CliError::Config(m.to_string()),
            StatsError::InvalidQuery(m) => CliError::Config(m),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsketch: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(args) => build(args),
        Command::Sample { sketch, out } => sample(&sketch, &out),
        Command::Merge { a, b, op, out } => merge(&a, &b, op, &out),
        Command::Query { sketch, query } => query_cmd(&sketch, query),
        Command::Jaccard { a, b } => jaccard_cmd(&a, &b),
    }
}

fn build(args: BuildArgs) -> Result<(), CliError> {
    let model = match args.model {
        ModelArg::Strict => Model::Strict,
        ModelArg::Nonstrict => Model::NonStrict,
    };
    let recovery = match args.recovery {
        RecoveryArg::Frs => RecoveryKind::Frs,
        RecoveryArg::Efrs => RecoveryKind::Efrs,
    };
    let mut config = SamplerConfig::new(model, recovery, args.k, args.delta)
        .with_universe(args.m, args.r, args.nmax)
        .with_seed(args.seed);
    config.epsilon = args.eps;
    let mut sketch = SamplerSketch::new(config)?;
    ingest_file(&mut sketch, &args.input)?;
    container::save_to_path(&mut sketch, &args.out)?;
    Ok(())
}

/// Parses `<value> <count>` lines; `#` comments and blank lines are skipped.
/// Every malformed or out-of-bounds line is a hard error with its number.
fn ingest_file(sketch: &mut SamplerSketch, path: &Path) -> Result<(), CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let at = |msg: String| CliError::Config(format!("{}:{}: {msg}", path.display(), number + 1));
        let mut fields = text.split_whitespace();
        let (Some(k), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(at(format!("expected `<value> <count>`, got {text:?}")));
        };
        let k: u64 = k
            .parse()
            .map_err(|e| at(format!("bad value {k:?}: {e}")))?;
        let c: i64 = c
            .parse()
            .map_err(|e| at(format!("bad count {c:?}: {e}")))?;
        sketch
            .update(k, c)
            .map_err(|e| at(e.to_string()))?;
    }
    Ok(())
}

fn level_text(sample: &Sample) -> String {
    match sample.level {
        SampleLevel::EmptyStream => "empty-stream".into(),
        SampleLevel::WholeStream => "whole-stream".into(),
        SampleLevel::Level(l) => l.to_string(),
    }
}

fn sample_warnings(sample: &Sample) -> Vec<String> {
    let mut warnings = Vec::new();
    if sample.clamped_level {
        warnings.push("clamped_level".to_string());
    }
    if sample.fallback_levels > 0 {
        warnings.push(format!("fallback_levels={}", sample.fallback_levels));
    }
    if sample.residual_bins > 0 {
        warnings.push(format!("residual_bins={}", sample.residual_bins));
    }
    if sample.skipped_bins > 0 {
        warnings.push(format!("skipped_bins={}", sample.skipped_bins));
    }
    warnings
}

fn sample(path: &Path, out: &str) -> Result<(), CliError> {
    let mut sketch = container::load_from_path(path)?;
    let sample = sketch.extract()?;
    let mut text = String::new();
    text.push_str(&format!("# level: {}\n", level_text(&sample)));
    text.push_str(&format!("# l0_estimate: {}\n", sample.l0_estimate));
    let warnings = sample_warnings(&sample);
    if !warnings.is_empty() {
        text.push_str(&format!("# warnings: {}\n", warnings.join(" ")));
    }
    for (k, c) in &sample.entries {
        text.push_str(&format!("{k}\t{c}\n"));
    }
    if out == "-" {
        io::stdout().write_all(text.as_bytes())?;
    } else {
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn merge(a: &Path, b: &Path, op: MergeOpArg, out: &Path) -> Result<(), CliError> {
    let left = container::load_from_path(a)?;
    let right = container::load_from_path(b)?;
    let op = match op {
        MergeOpArg::Union => MergeOp::Union,
        MergeOpArg::Diff => MergeOp::Difference,
    };
    let mut merged = left
        .merged(&right, op)
        .map_err(|e| CliError::Config(e.to_string()))?;
    container::save_to_path(&mut merged, out)?;
    Ok(())
}

fn query_cmd(path: &Path, query: QueryCommand) -> Result<(), CliError> {
    let mut sketch = container::load_from_path(path)?;
    let sample = sketch.extract()?;
    let bound = stats::error_bound(&sample);
    match query {
        QueryCommand::InversePoint { freq } => {
            println!("{:.6} {:.6}", stats::inverse_point(&sample, freq)?, bound);
        }
        QueryCommand::InverseRange { lo, hi } => {
            println!("{:.6} {:.6}", stats::inverse_range(&sample, lo, hi)?, bound);
        }
        QueryCommand::Heavy { phi } => {
            let hitters = stats::inverse_heavy_hitters(&sample, phi)?;
            let joined: Vec<String> = hitters.iter().map(|i| i.to_string()).collect();
            println!("{}", joined.join(" "));
        }
        QueryCommand::Quantile { phi } => {
            println!("{}", stats::inverse_quantile(&sample, phi)?);
        }
    }
    Ok(())
}

fn jaccard_cmd(a: &Path, b: &Path) -> Result<(), CliError> {
    let left = container::load_from_path(a)?;
    let right = container::load_from_path(b)?;
    println!("{:.6}", stats::jaccard(&left, &right)?);
    Ok(())
}
