//! The `turfsim` command line.
//!
//! Exit codes: 0 on success, 2 for bad input (config, flags, malformed
//! files), 3 for filesystem failures.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use turfsim_core::{classify, thresholds, CheckOptions, MetricsAccumulator, Simulation, StreakMode};

use crate::config::{load_config, ConfigFileError, Overrides};
use crate::dayevents::{read_day_events, summarize, write_summary, DayLogError};
use crate::eventlog::{write_log, StoredLog, SpillLog, DEFAULT_SPILL_CAP};
use crate::report::{read_profile_json, write_metrics_csv, write_metrics_json, write_profile_json};
use crate::sweep::{
    parse_grid, replicate_config, run_sweep, solve_point_profile, write_table, PlanError, SweepPlan,
    DEFAULT_GRID, DEFAULT_SEEDS_PER_POINT, FINE_GRID,
};

pub const SEED_ENV: &str = "TURFSIM_SEED";

pub const EVENTS_FILE: &str = "events.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const PROFILE_JSON: &str = "profile.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const PROFILES_JSON: &str = "profiles.json";
pub const VERDICTS_JSON: &str = "verdicts.json";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io { .. } => CliError::io(e.to_string()),
            _ => CliError::user(format!("invalid config: {e}")),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::user(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn flushed(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    flushed(w, path)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "turfsim", version, about = "Simulate and analyze groups competing for city areas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its event log, metrics and profile.
    Simulate(SimulateArgs),
    /// Run replicate simulations over a grid of departure rates.
    Sweep(SweepArgs),
    /// Summarize a day-stamped activity log (`day,area_id,ocg_id`).
    Analyze(AnalyzeArgs),
    /// Print the regime thresholds of a config as JSON.
    Thresholds(ThresholdsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StreakModeArg {
    SpellCount,
    Duration,
}

impl From<StreakModeArg> for StreakMode {
    fn from(m: StreakModeArg) -> Self {
        match m {
            StreakModeArg::SpellCount => StreakMode::SpellCount,
            StreakModeArg::Duration => StreakMode::Duration,
        }
    }
}

/// Flags that override config values.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Master seed. Falls back to the config, then to TURFSIM_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated time per run.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub n_ocgs: Option<usize>,
    #[arg(long)]
    pub collision_cost: Option<f64>,
    /// Fraction of the horizon discarded before measuring.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, value_enum)]
    pub streak_mode: Option<StreakModeArg>,
    /// Let a collision end the current streak in the area.
    #[arg(long)]
    pub collision_breaks_streak: bool,
}

impl ConfigArgs {
    fn overrides(&self, eta: Option<f64>) -> Result<Overrides, CliError> {
        let fallback_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::user(format!("{SEED_ENV}: {v:?} is not an unsigned 64-bit integer")))?,
            ),
            Err(_) => None,
        };
        Ok(Overrides {
            eta,
            seed: self.seed,
            horizon: self.horizon,
            n_ocgs: self.n_ocgs,
            collision_cost: self.collision_cost,
            warmup_fraction: self.warmup,
            streak_mode: self.streak_mode.map(Into::into),
            collision_breaks_streak: self.collision_breaks_streak.then_some(true),
            fallback_seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Departure rate, overriding the config.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Use this stationary profile (JSON) instead of solving for one.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Events held in memory before the log streams to disk.
    #[arg(long, default_value_t = DEFAULT_SPILL_CAP)]
    pub log_cap: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub out: PathBuf,
    /// `start:stop:step` or a comma list. Default 0.5:35:0.5.
    #[arg(long, conflicts_with = "fine_grid")]
    pub grid: Option<String>,
    /// Use the 0.01-step grid up to 35.
    #[arg(long)]
    pub fine_grid: bool,
    /// Replicate runs per grid point.
    #[arg(long, default_value_t = DEFAULT_SEEDS_PER_POINT)]
    pub seeds: usize,
    /// Worker threads. Default: available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also run the regime checkers and write verdicts.json.
    #[arg(long)]
    pub check: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Distance from each threshold of the paired corollary points.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Day log CSV.
    pub input: PathBuf,
    /// Output CSV. Default: standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Count the streak still running at the last observed day.
    #[arg(long)]
    pub include_censored: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdsArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub eta: Option<f64>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Analyze(a) => analyze(a),
        Command::Thresholds(a) => print_thresholds(a),
    }
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let base = load_config(&a.config.config, &a.config.overrides(a.eta)?)?;
    make_dir(&a.out)?;
    let profile = match &a.profile {
        Some(path) => {
            let file = File::open(path).map_err(io_err(path))?;
            let profile = read_profile_json(io::BufReader::new(file))
                .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
            if profile.p.len() != base.n_areas() || profile.p.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(CliError::user(format!(
                    "{}: field `p` needs {} probabilities strictly between 0 and 1",
                    path.display(),
                    base.n_areas()
                )));
            }
            profile
        }
        None => solve_point_profile(&base, base.departure_rate, 0, Default::default())
            .map_err(|e| CliError::user(format!("stationary profile: {e}")))?,
    };

    let cfg = replicate_config(&base, base.departure_rate, 0, 0);
    let events_path = a.out.join(EVENTS_FILE);
    let mut sinks = (SpillLog::new(a.log_cap, &events_path), MetricsAccumulator::new(&cfg));
    let summary = Simulation::new(&cfg, &profile).run(&mut sinks);
    let (log, meter) = sinks;
    match log.finish().map_err(|e| CliError::io(format!("{}: {e}", events_path.display())))? {
        StoredLog::Memory(events) => {
            let w = write_log(create(&events_path)?, &events)
                .map_err(|e| CliError::io(format!("{}: {e}", events_path.display())))?;
            flushed(w, &events_path)?;
        }
        StoredLog::Disk { .. } => {}
    }
    let report = meter.finish().map_err(|e| CliError::user(format!("metrics: {e}")))?;

    let path = a.out.join(METRICS_CSV);
    let mut w = create(&path)?;
    write_metrics_csv(&mut w, &report).map_err(csv_err(&path))?;
    flushed(w, &path)?;
    let path = a.out.join(METRICS_JSON);
    let mut w = create(&path)?;
    write_metrics_json(&mut w, &report).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    flushed(w, &path)?;
    let path = a.out.join(PROFILE_JSON);
    let mut w = create(&path)?;
    write_profile_json(&mut w, &profile).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    flushed(w, &path)?;

    eprintln!(
        "{} events, {} collisions, profile {} after {} iterations",
        summary.event_count,
        report.total_collisions,
        if profile.converged { "converged" } else { "not converged" },
        profile.iterations_used
    );
    Ok(())
}

#[derive(Serialize)]
struct PointProfile<'a> {
    eta: f64,
    profile: Option<&'a turfsim_core::StationaryProfile>,
    error: Option<&'a str>,
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let base = load_config(&a.config.config, &a.config.overrides(None)?)?;
    let grid = match (&a.grid, a.fine_grid) {
        (Some(spec), _) => parse_grid(spec)?,
        (None, true) => parse_grid(&format!("{}:{}:{}", FINE_GRID.0, FINE_GRID.1, FINE_GRID.2))?,
        (None, false) => parse_grid(&format!("{}:{}:{}", DEFAULT_GRID.0, DEFAULT_GRID.1, DEFAULT_GRID.2))?,
    };
    if !(a.alpha > 0.0 && a.alpha < 0.5) {
        return Err(CliError::user(format!("field `alpha`: {} is outside (0, 0.5)", a.alpha)));
    }
    if a.resamples == 0 {
        return Err(CliError::user("field `resamples`: must be at least 1"));
    }
    let mut plan = SweepPlan::new(base, grid, a.seeds);
    if let Some(jobs) = a.jobs {
        plan.parallelism = jobs;
    }
    plan.alpha = a.alpha;
    plan.resamples = a.resamples;
    plan.validate()?;
    make_dir(&a.out)?;

    let result = run_sweep(&plan)?;
    for (eta, err) in result.failures() {
        eprintln!("warning: point eta={eta} failed: {err}");
    }
    let path = a.out.join(SWEEP_CSV);
    let mut w = create(&path)?;
    write_table(&mut w, &result.table()).map_err(csv_err(&path))?;
    flushed(w, &path)?;

    let profiles: Vec<PointProfile> = result
        .points
        .iter()
        .map(|p| PointProfile {
            eta: p.eta,
            profile: p.outcome.as_ref().ok().map(|d| &d.profile),
            error: p.outcome.as_ref().err().map(String::as_str),
        })
        .collect();
    write_json(&a.out.join(PROFILES_JSON), &profiles)?;

    if a.check {
        let opts = CheckOptions { alpha: a.alpha, resamples: a.resamples, seed: plan.base.seed };
        let doc = result.check(opts, a.epsilon);
        let clauses = doc
            .propositions
            .iter()
            .flat_map(|p| p.result.clauses())
            .chain(doc.corollaries.clauses());
        let (total, failed) = clauses.fold((0, 0), |(t, f), c| (t + 1, f + usize::from(!c.passed())));
        write_json(&a.out.join(VERDICTS_JSON), &doc)?;
        eprintln!("{failed} of {total} clauses did not pass");
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let file = File::open(&a.input).map_err(io_err(&a.input))?;
    let events = read_day_events(io::BufReader::new(file)).map_err(|e| match e {
        DayLogError::Io(io) => CliError::io(format!("{}: {io}", a.input.display())),
        other => CliError::user(format!("{}: {other}", a.input.display())),
    })?;
    let rows = summarize(&events, a.include_censored);
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_summary(&mut w, &rows).map_err(csv_err(path))?;
            flushed(w, path)
        }
        None => write_summary(io::stdout().lock(), &rows).map_err(|e| CliError::io(format!("stdout: {e}"))),
    }
}

#[derive(Serialize)]
struct ThresholdReport {
    eta_lower: f64,
    eta_upper: f64,
    gap_ratios: Vec<f64>,
    eta: f64,
    regime: turfsim_core::Regime,
    on_boundary: bool,
}

fn print_thresholds(a: ThresholdsArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.config, &Overrides { eta: a.eta, ..Default::default() })?;
    let th = thresholds(&cfg);
    let class = classify(cfg.departure_rate, &th);
    if class.on_boundary {
        eprintln!(
            "warning: eta={} lies exactly on a threshold; classified as {}",
            cfg.departure_rate, class.regime
        );
    }
    let report = ThresholdReport {
        eta_lower: th.eta_lower,
        eta_upper: th.eta_upper,
        gap_ratios: th.gap_ratios,
        eta: cfg.departure_rate,
        regime: class.regime,
        on_boundary: class.on_boundary,
    };
    let text = serde_json::to_string_pretty(&report).expect("threshold report serializes");
    println!("{text}");
    Ok(())
}
