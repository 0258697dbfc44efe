//! Command-line front end: run tuning jobs, resume interrupted ones, race
//! strategies on synthetic landscapes, and summarize history files.
//!
//! Results go to stdout as stable `key: value` lines (or CSV for `compare`);
//! progress and errors go to stderr. Exit codes: 0 success, 2 for usage and
//! configuration problems, 3 for runtime failures.

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use autotune_core::diagnostics::{
    compare_strategies, empirical_phi, landscape_eval, summarize, write_comparison_csv,
    ComparisonConfig, Strategy,
};
use autotune_core::landscape::{get_landscape, list_landscapes};
use autotune_core::tuner::history::{HistoryFile, HistoryRecord, TestRecord};
use autotune_core::tuner::{read_history, FileSink, HistorySink, NullSink};
use autotune_core::{
    resume_tuning, run_tuning, Error, OptimizerChoice, RoundReason, SamplerChoice, TuningJob,
    TuningOutcome,
};

#[derive(Parser)]
#[command(
    name = "autotune",
    version,
    about = "Budget-bounded automatic configuration tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a tuning job described by a TOML file
    Tune(TuneArgs),
    /// Continue an interrupted run from its history file
    Resume(ResumeArgs),
    /// Race strategy pairings on synthetic landscapes, emitting CSV
    Compare(CompareArgs),
    /// Fraction of a landscape that cannot beat a reference value
    Phi(PhiArgs),
    /// Summarize a history file: trajectory, totals, failures
    Report(ReportArgs),
}

#[derive(Args)]
struct TuneArgs {
    /// Job description (TOML)
    job_file: PathBuf,
    /// Total test budget (default: job file value)
    #[arg(long)]
    budget: Option<u64>,
    /// Tests per round (default: job file value)
    #[arg(long = "set-size")]
    set_size: Option<usize>,
    /// Run seed (default: job file value, then AUTOTUNE_SEED)
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling strategy: dds, lhs, uniform, grid (default: job file value)
    #[arg(long)]
    sampler: Option<String>,
    /// Search strategy: rbs, rrs (default: job file value)
    #[arg(long)]
    optimizer: Option<String>,
    /// History file path (default: job file value, else no history)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Suppress per-round progress on stderr (default: off)
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ResumeArgs {
    /// Job description the interrupted run was started from
    job_file: PathBuf,
    /// History file to continue (default: the job file's history path)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Rejected: the seed always comes from the history header
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated landscape ids (default: bumpy)
    #[arg(long = "landscape", value_delimiter = ',', default_value = "bumpy")]
    landscapes: Vec<String>,
    /// Comma-separated sampler+optimizer pairings (default: dds+rbs,uniform+rbs)
    #[arg(long, value_delimiter = ',', default_value = "dds+rbs,uniform+rbs")]
    strategies: Vec<String>,
    /// Seeded trials per pairing and landscape (default: 10)
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// First seed; trial i uses seed-base + i (default: 0)
    #[arg(long = "seed-base", default_value_t = 0)]
    seed_base: u64,
    /// Test budget per trial (default: 200)
    #[arg(long, default_value_t = 200)]
    budget: u64,
    /// Tests per round (default: 100)
    #[arg(long = "set-size", default_value_t = 100)]
    set_size: usize,
    /// Multiplicative measurement noise (default: 0)
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// CSV output path; per-strategy medians then go to stdout
    /// (default: CSV on stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhiArgs {
    /// Landscape id, variant suffixes allowed
    #[arg(long)]
    landscape: String,
    /// Reference value; counts points that cannot beat it
    #[arg(long)]
    y0: f64,
    /// Lattice points per dimension (default: 200)
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Restrict counting to a box, as lo:hi pairs joined by commas
    /// (default: whole space)
    #[arg(long)]
    bounds: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// History file (JSON lines)
    history_file: PathBuf,
}

struct CliFailure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> CliFailure {
    CliFailure { code: 2, message: message.into() }
}

impl From<std::io::Error> for CliFailure {
    fn from(error: std::io::Error) -> Self {
        CliFailure::from(Error::from(error))
    }
}

impl From<Error> for CliFailure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::BadParameter { .. }
            | Error::ZeroIntervals
            | Error::KTooLarge { .. }
            | Error::SpaceParse { .. }
            | Error::UtilityParse { .. }
            | Error::NotDeclaredPositive { .. }
            | Error::UnknownMetric { .. }
            | Error::UnknownLandscape { .. }
            | Error::BadVariant { .. }
            | Error::BadTargetSpec { .. }
            | Error::JobParse { .. }
            | Error::JobInvalid { .. }
            | Error::HistoryCorrupt { .. }
            | Error::SchemaMismatch { .. }
            | Error::GridGuard { .. }
            | Error::InvalidBounds { .. } => 2,
            _ => 3,
        };
        CliFailure { code, message: error.to_string() }
    }
}

fn main() -> ExitCode {
    // die quietly when stdout is closed early, as under `autotune ... | head`
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tune(args) => cmd_tune(args),
        Command::Resume(args) => cmd_resume(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Phi(args) => cmd_phi(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// Forwards records to the real sink while narrating rounds on stderr.
struct ProgressSink<S> {
    inner: S,
    quiet: bool,
    best: Option<f64>,
}

impl<S: HistorySink> HistorySink for ProgressSink<S> {
    fn record(&mut self, record: &HistoryRecord) -> autotune_core::Result<()> {
        if !self.quiet {
            match record {
                HistoryRecord::Test(test) => {
                    if let Some(utility) = test.utility {
                        if self.best.is_none_or(|b| utility > b) {
                            self.best = Some(utility);
                        }
                    }
                }
                HistoryRecord::Round(round) => {
                    let reason = match round.reason {
                        RoundReason::Initial => "initial",
                        RoundReason::Improved => "improved",
                        RoundReason::NoImprovementRestart => "no improvement, restarting",
                        RoundReason::BudgetExhausted => "budget exhausted",
                    };
                    let best = self
                        .best
                        .map_or_else(|| "none".to_string(), |b| b.to_string());
                    eprintln!(
                        "round {}: best so far {best}; next {} ({reason})",
                        round.round, round.next_action
                    );
                }
                _ => {}
            }
        }
        self.inner.record(record)
    }
}

fn apply_overrides(job: &mut TuningJob, args: &TuneArgs) -> Result<(), CliFailure> {
    if let Some(budget) = args.budget {
        job.budget = budget;
    }
    if let Some(set_size) = args.set_size {
        job.set_size = set_size;
    }
    if let Some(sampler) = &args.sampler {
        job.sampler = sampler.parse()?;
    }
    if let Some(optimizer) = &args.optimizer {
        job.optimizer = optimizer.parse()?;
    }
    if let Some(history) = &args.history {
        job.history_path = Some(history.clone());
    }
    job.validate()?;
    Ok(())
}

fn resolve_seed(flag: Option<u64>, job: &TuningJob) -> Result<u64, CliFailure> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = job.seed {
        return Ok(seed);
    }
    match std::env::var("AUTOTUNE_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            usage(format!("AUTOTUNE_SEED is not an unsigned integer: {text:?}"))
        }),
        Err(_) => Err(usage(
            "no seed given: pass --seed, set `seed` in the job file, or export AUTOTUNE_SEED",
        )),
    }
}

fn print_outcome(outcome: &TuningOutcome, history: Option<&PathBuf>) {
    println!("seed: {}", outcome.seed);
    println!("tests_run: {}", outcome.tests_run);
    println!("rounds: {}", outcome.rounds_completed);
    println!("whole_space_restarts: {}", outcome.whole_space_restarts);
    println!("best_test_index: {}", outcome.best_test_index);
    println!("best_utility: {}", outcome.best_utility);
    for (name, value) in &outcome.best_decoded {
        println!("best.{name} = {value}");
    }
    if let Some(metrics) = &outcome.best_metrics {
        for (name, value) in metrics.iter() {
            println!("metric.{name} = {value}");
        }
    }
    for (reason, count) in &outcome.failure_counts {
        println!("failures.{reason}: {count}");
    }
    if let Some(path) = history {
        println!("history: {}", path.display());
    }
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliFailure> {
    let mut job = TuningJob::from_file(&args.job_file)?;
    apply_overrides(&mut job, &args)?;
    let seed = resolve_seed(args.seed, &job)?;
    let outcome = match &job.history_path {
        Some(path) => {
            let mut sink = ProgressSink {
                inner: FileSink::open(path)?,
                quiet: args.quiet,
                best: None,
            };
            run_tuning(&job, seed, &mut sink)?
        }
        None => {
            let mut sink = ProgressSink { inner: NullSink, quiet: args.quiet, best: None };
            run_tuning(&job, seed, &mut sink)?
        }
    };
    print_outcome(&outcome, job.history_path.as_ref());
    Ok(())
}

fn cmd_resume(args: ResumeArgs) -> Result<(), CliFailure> {
    if args.seed.is_some() {
        return Err(usage(
            "resume always continues with the seed recorded in the history header; drop --seed",
        ));
    }
    let mut job = TuningJob::from_file(&args.job_file)?;
    if let Some(history) = &args.history {
        job.history_path = Some(history.clone());
    }
    let Some(history_path) = job.history_path.clone() else {
        return Err(usage(
            "no history file: pass --history or set `history` in the job file",
        ));
    };
    let outcome = resume_tuning(&job, &history_path)?;
    print_outcome(&outcome, Some(&history_path));
    Ok(())
}

fn parse_strategy(text: &str) -> Result<Strategy, CliFailure> {
    let parts: Vec<&str> = text.split('+').collect();
    let [sampler, optimizer] = parts.as_slice() else {
        return Err(usage(format!(
            "strategy {text:?} is not of the form <sampler>+<optimizer>, like dds+rbs"
        )));
    };
    Ok(Strategy {
        sampler: sampler.parse::<SamplerChoice>()?,
        optimizer: optimizer.parse::<OptimizerChoice>()?,
    })
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliFailure> {
    let strategies = args
        .strategies
        .iter()
        .map(|s| parse_strategy(s))
        .collect::<Result<Vec<_>, _>>()?;
    for id in &args.landscapes {
        get_landscape(id)?;
    }
    let config = ComparisonConfig {
        strategies,
        landscapes: args.landscapes.clone(),
        trials: args.trials,
        seed_base: args.seed_base,
        budget: args.budget,
        set_size: args.set_size,
        noise: args.noise,
    };
    let rows = compare_strategies(&config)?;
    match &args.out {
        Some(path) => {
            write_comparison_csv(&rows, File::create(path)?)?;
            for summary in summarize(&rows) {
                println!(
                    "{}+{} on {}: median {} (p25 {}, p75 {}) over {} trials",
                    summary.sampler,
                    summary.optimizer,
                    summary.landscape,
                    summary.median_best,
                    summary.p25_best,
                    summary.p75_best,
                    summary.trials
                );
            }
            eprintln!("wrote {} trajectory rows to {}", rows.len(), path.display());
        }
        None => write_comparison_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn parse_bounds(text: &str, dimension: usize) -> Result<Vec<(f64, f64)>, CliFailure> {
    let pairs: Vec<&str> = text.split(',').collect();
    if pairs.len() != dimension {
        return Err(usage(format!(
            "--bounds has {} pairs but the landscape has {dimension} dimensions",
            pairs.len()
        )));
    }
    pairs
        .iter()
        .map(|pair| {
            let Some((low, high)) = pair.split_once(':') else {
                return Err(usage(format!("bound {pair:?} is not of the form lo:hi")));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bound {pair:?} has a non-numeric end")))
            };
            Ok((parse(low)?, parse(high)?))
        })
        .collect()
}

fn cmd_phi(args: PhiArgs) -> Result<(), CliFailure> {
    let def = get_landscape(&args.landscape).map_err(|e| {
        let available = list_landscapes().join(", ");
        usage(format!("{e} (available: {available})"))
    })?;
    let space = def.canonical_space();
    let bounds = args
        .bounds
        .as_deref()
        .map(|text| parse_bounds(text, space.dimension()))
        .transpose()?;
    let estimate = empirical_phi(
        &space,
        landscape_eval(&def),
        args.y0,
        bounds.as_deref(),
        args.resolution,
    )?;
    println!("phi: {}", estimate.fraction);
    println!("points_total: {}", estimate.points_total);
    println!("points_qualifying: {}", estimate.points_qualifying);
    Ok(())
}

/// Best successful test, ties to the earliest.
fn best_test(tests: &[TestRecord]) -> Option<&TestRecord> {
    tests
        .iter()
        .filter(|t| t.utility.is_some())
        .max_by(|a, b| {
            a.utility
                .partial_cmp(&b.utility)
                .unwrap()
                .then(b.test_index.cmp(&a.test_index))
        })
}

fn print_report(file: &HistoryFile) {
    let header = &file.header;
    println!(
        "job: {}+{}, budget {}, set {}, seed {}",
        header.sampler, header.optimizer, header.budget, header.set_size, header.seed
    );
    let max_round = file.tests.iter().map(|t| t.round).max().unwrap_or(0);
    let mut best_so_far = f64::NEG_INFINITY;
    for round in 0..=max_round {
        let in_round: Vec<&TestRecord> =
            file.tests.iter().filter(|t| t.round == round).collect();
        if in_round.is_empty() {
            continue;
        }
        for test in &in_round {
            if let Some(utility) = test.utility {
                best_so_far = best_so_far.max(utility);
            }
        }
        let label = if round == 0 { "baseline".to_string() } else { format!("round {round}") };
        let best = if best_so_far.is_finite() {
            best_so_far.to_string()
        } else {
            "none".to_string()
        };
        println!("{label}: tests {}, best_so_far {best}", in_round.len());
    }
    let failed = file.tests.iter().filter(|t| t.utility.is_none()).count();
    println!("tests: {} ({failed} failed)", file.tests.len());
    let mut failure_counts: std::collections::BTreeMap<String, usize> = Default::default();
    for test in &file.tests {
        if let Some(reason) = &test.reason {
            *failure_counts.entry(reason.to_string()).or_default() += 1;
        }
    }
    for (reason, count) in &failure_counts {
        println!("failures.{reason}: {count}");
    }
    if file.final_record.is_none() {
        eprintln!("run incomplete: no final record; reporting what was logged");
    }
    if let Some(best) = best_test(&file.tests) {
        println!("best_test_index: {}", best.test_index);
        println!("best_utility: {}", best.utility.unwrap());
        for (name, value) in &best.decoded {
            println!("best.{name} = {value}");
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<(), CliFailure> {
    let file = read_history(&args.history_file)?;
    if file.tests.is_empty() {
        println!("no tests recorded");
        return Ok(());
    }
    print_report(&file);
    Ok(())
}
