//! `seqglr`: sequential change detection, threshold calibration and
//! benchmark reproduction from the command line.
//!
//! Exit codes: 0 success, 2 input or flag error, 3 calibration exhaustion.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use seqglr_core::harness::{self, BenchmarkTable};
use seqglr_core::monitor::DEFAULT_BURN_IN;
use seqglr_core::thresholds::{calibrate, shipped_table, CalibrationPlan, ThresholdTable, SHIPPED_ARL0};
use seqglr_core::{DetectorConfig, Error, Family, Monitor, StatisticKind, ThresholdSource};

#[derive(Parser, Debug)]
#[command(
    name = "seqglr",
    version,
    about = "Sequential change detection with finite-sample corrected GLR statistics"
)]
struct Cli {
    /// Worker threads for calibration and benchmarks (default: all cores).
    #[arg(long, global = true, env = "SEQGLR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monitor a stream of numbers, one per line, and report detected changes.
    Detect(DetectArgs),
    /// Estimate a threshold table by null simulation.
    Calibrate(CalibrateArgs),
    /// Reproduce a detection-delay or Bayesian-comparison table.
    Benchmark(BenchmarkArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    Gaussian,
    Exponential,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StatisticArg {
    /// Mean-corrected statistic (either family).
    Corrected,
    /// Bartlett-scaled Gaussian statistic.
    Hz,
    /// Uncorrected Exponential statistic.
    Raw,
}

fn statistic_kind(family: FamilyArg, statistic: StatisticArg) -> Result<StatisticKind, CliError> {
    let family = match family {
        FamilyArg::Gaussian => Family::Gaussian,
        FamilyArg::Exponential => Family::Exponential,
    };
    match (family, statistic) {
        (f, StatisticArg::Corrected) => Ok(StatisticKind::for_family(f, true)),
        (Family::Gaussian, StatisticArg::Hz) => Ok(StatisticKind::HzGaussian),
        (Family::Exponential, StatisticArg::Raw) => Ok(StatisticKind::RawExponential),
        (f, s) => Err(CliError::Input(format!(
            "statistic `{}` is not available for the {f} family",
            s.to_possible_value().expect("named value").get_name()
        ))),
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "corrected")]
    statistic: StatisticArg,
    /// Use the shipped threshold table for this ARL0 (default 500).
    #[arg(long, conflicts_with = "threshold_file")]
    arl0: Option<u32>,
    /// Threshold table CSV, as written by `seqglr calibrate`.
    #[arg(long)]
    threshold_file: Option<PathBuf>,
    /// Keep only the W most recent split points.
    #[arg(long, value_parser = clap::value_parser!(u64).range(8..))]
    window: Option<u64>,
    /// Restart after each detection and keep monitoring.
    #[arg(long)]
    multi: bool,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Input file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Output file, or `-` for stdout.
    #[arg(long, default_value = "-")]
    output: String,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "corrected")]
    statistic: StatisticArg,
    #[arg(long)]
    arl0: f64,
    #[arg(long, default_value_t = CalibrationPlan::DEFAULT_REPLICATIONS,
          value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    reps: usize,
    #[arg(long, default_value_t = 800)]
    tmax: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = CalibrationPlan::DEFAULT_SMOOTHING)]
    smoothing: f64,
    #[arg(long, default_value_t = seqglr_core::thresholds::DEFAULT_START_T)]
    start_t: usize,
    #[arg(long, default_value = "-")]
    output: String,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    table: TableArg,
    /// Replications per cell (default 20000, or 10000 for the Bayesian tables).
    #[arg(long, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV destination, or `-` for stdout.
    #[arg(long, default_value = "-")]
    output: String,
    /// Also write a JSON summary with every cell's counts and standard errors.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TableArg {
    Mean,
    Var,
    Exp,
    Bayes,
    PriorSampled,
}

impl From<TableArg> for BenchmarkTable {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::Mean => BenchmarkTable::Mean,
            TableArg::Var => BenchmarkTable::Var,
            TableArg::Exp => BenchmarkTable::Exp,
            TableArg::Bayes => BenchmarkTable::Bayes,
            TableArg::PriorSampled => BenchmarkTable::PriorSampled,
        }
    }
}

#[derive(Debug)]
enum CliError {
    /// Bad flags or unreadable input: exit 2.
    Input(String),
    /// Calibration ran out of surviving streams: exit 3.
    Exhausted(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.into())
    }
}

/// Reproducibility record embedded in every artifact.
#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    input: Option<&'a str>,
    config: C,
    seed: Option<u64>,
    output: &'a str,
}

impl<C: Serialize> RunManifest<'_, C> {
    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serialises")
    }
}

fn manifest<'a, C: Serialize>(
    subcommand: &'static str,
    input: Option<&'a str>,
    config: C,
    seed: Option<u64>,
    output: &'a str,
) -> RunManifest<'a, C> {
    RunManifest {
        tool: "seqglr",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        input,
        config,
        seed,
        output,
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>, CliError> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        let file = File::create(path).with_context(|| format!("cannot create {path}"))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn open_input(path: &str) -> Result<Box<dyn BufRead>, CliError> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin().lock())))
    } else {
        let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {path}: {e}")))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn load_threshold_file(path: &Path) -> Result<ThresholdTable, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    ThresholdTable::from_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    let kind = statistic_kind(args.family, args.statistic)?;
    let table = match &args.threshold_file {
        Some(path) => load_threshold_file(path)?,
        None => {
            let arl0 = args.arl0.unwrap_or(500);
            shipped_table(kind, arl0).ok_or_else(|| {
                CliError::Input(format!(
                    "no shipped {kind} table for ARL0={arl0} (shipped: {SHIPPED_ARL0:?}); \
                     produce one with `seqglr calibrate` and pass --threshold-file"
                ))
            })?
        }
    };
    let config = DetectorConfig {
        statistic: kind,
        threshold: ThresholdSource::Table(table.clone()),
        window: args.window.map(|w| w as usize),
        burn_in: args.burn_in,
        multi_change: args.multi,
    };
    let mut monitor = Monitor::new(config).map_err(|e| CliError::Input(e.to_string()))?;

    let echo = json!({
        "statistic": kind,
        "arl0": table.arl0(),
        "threshold_file": args.threshold_file,
        "window": args.window,
        "multi": args.multi,
        "burn_in": args.burn_in,
    });
    let mut out = open_output(&args.output)?;
    writeln!(
        out,
        "# {}",
        manifest("detect", Some(&args.input), echo, None, &args.output).to_json()
    )?;
    out.flush()?;

    let input = open_input(&args.input)?;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CliError::Input(format!("line {line_no}: {e}")))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let x: f64 = text
            .parse()
            .map_err(|_| CliError::Input(format!("line {line_no}: cannot parse `{text}` as a number")))?;
        let reports = monitor.push(x).map_err(|e| match e {
            Error::AtPosition { source, .. } => CliError::Input(format!("line {line_no}: {source}")),
            other => CliError::Input(format!("line {line_no}: {other}")),
        })?;
        for r in reports {
            serde_json::to_writer(&mut out, &r).context("writing report")?;
            writeln!(out)?;
            out.flush()?;
        }
        if monitor.is_finished() {
            break;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let kind = statistic_kind(args.family, args.statistic)?;
    if !(args.arl0 >= 1.0 && args.arl0.is_finite()) {
        return Err(CliError::Input(format!("--arl0 must be at least 1, got {}", args.arl0)));
    }
    let mut plan = CalibrationPlan::new(args.arl0, args.tmax, args.seed);
    plan.replications = args.reps;
    plan.smoothing_weight = args.smoothing;
    plan.start_t = args.start_t;
    let table = calibrate(&plan, kind).map_err(|e| match e {
        Error::CalibrationExhausted { .. } => CliError::Exhausted(e.to_string()),
        Error::Config(_) => CliError::Input(e.to_string()),
        other => CliError::Other(other.into()),
    })?;
    let echo = json!({
        "statistic": kind,
        "arl0": args.arl0,
        "reps": args.reps,
        "tmax": args.tmax,
        "smoothing": args.smoothing,
        "start_t": args.start_t,
    });
    let header = format!(
        "manifest {}",
        manifest("calibrate", None, echo, Some(args.seed), &args.output).to_json()
    );
    let mut out = open_output(&args.output)?;
    out.write_all(table.to_csv(&[header]).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let table: BenchmarkTable = args.table.into();
    let reps = args.reps.unwrap_or(match table {
        BenchmarkTable::Bayes | BenchmarkTable::PriorSampled => harness::DEFAULT_BAYES_REPLICATIONS,
        _ => harness::DEFAULT_REPLICATIONS,
    });
    let grids = harness::benchmark(table, reps, args.seed).map_err(|e| match e {
        Error::Config(_) => CliError::Input(e.to_string()),
        other => CliError::Other(other.into()),
    })?;
    let echo = json!({ "table": args.table, "reps": reps });
    let record = manifest("benchmark", None, echo, Some(args.seed), &args.output);
    let mut out = open_output(&args.output)?;
    writeln!(out, "# {}", record.to_json())?;
    for (i, grid) in grids.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "# {}", grid.title)?;
        out.write_all(grid.to_csv().as_bytes())?;
    }
    out.flush()?;
    if let Some(path) = &args.json {
        let summary = json!({ "manifest": record, "grids": grids });
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &summary).context("writing JSON summary")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Exhausted(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
