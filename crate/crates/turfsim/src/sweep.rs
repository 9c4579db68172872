//! Parallel experiments over a grid of departure rates.
//!
//! Every grid point gets one stationary profile, solved with the calibration
//! seed of that point, and `seeds_per_point` replicate runs with their own
//! run seeds. Seeds depend only on the master seed and the (point, replicate)
//! indices, so results do not depend on the thread count. A lone simulation
//! is replicate 0 of point 0.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use turfsim_core::rng::{calibration_seed, run_seed, Purpose, Stream};
use turfsim_core::stats::{mean, mean_ci};
use turfsim_core::{
    calibrate, check_corollaries, check_propositions, classify, thresholds, CheckOptions, CityConfig,
    Classification, ClauseVerdict, ConfigError, MetricsAccumulator, MetricsReport, Regime, RegimeThresholds,
    Simulation, SolverOptions, StationaryProfile, SweepPoint, ThresholdPair,
};

pub const DEFAULT_SEEDS_PER_POINT: usize = 20;
pub const DEFAULT_GRID: (f64, f64, f64) = (0.5, 35.0, 0.5);
pub const FINE_GRID: (f64, f64, f64) = (0.01, 35.0, 0.01);

pub const TABLE_HEADER: [&str; 14] = [
    "eta", "regime", "area_id", "revenue", "O_mean", "O_ci_lo", "O_ci_hi", "V_mean", "V_ci_lo", "V_ci_hi", "R_mean",
    "R_ci_lo", "R_ci_hi", "seeds",
];

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("field `grid`: {0}")]
    Grid(String),
    #[error("field `seeds`: at least one seed per point is needed")]
    NoSeeds,
    #[error("field `jobs`: must be at least 1")]
    NoJobs,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub base: CityConfig,
    pub eta_grid: Vec<f64>,
    pub seeds_per_point: usize,
    pub parallelism: usize,
    pub solver: SolverOptions,
    /// Level of the per-area confidence intervals in the table.
    pub alpha: f64,
    pub resamples: usize,
}

impl SweepPlan {
    pub fn new(base: CityConfig, eta_grid: Vec<f64>, seeds_per_point: usize) -> Self {
        SweepPlan {
            base,
            eta_grid,
            seeds_per_point,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            solver: SolverOptions::default(),
            alpha: 0.05,
            resamples: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.base.validate()?;
        if self.eta_grid.is_empty() {
            return Err(PlanError::Grid("empty".into()));
        }
        if let Some(eta) = self.eta_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(PlanError::Grid(format!("{eta} is not a positive rate")));
        }
        if self.eta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PlanError::Grid("values must be strictly increasing".into()));
        }
        if self.seeds_per_point == 0 {
            return Err(PlanError::NoSeeds);
        }
        if self.parallelism == 0 {
            return Err(PlanError::NoJobs);
        }
        Ok(())
    }
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a comma
/// separated list of values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, PlanError> {
    let bad = |what: &str| PlanError::Grid(format!("{what} in {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("cannot parse {:?}", s.trim())));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop.is_nan() || stop < start {
                return Err(bad("need step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // Multiplying rather than accumulating keeps 0.1-style steps exact
            // to the printed precision.
            Ok((0..=n).map(|k| round_grid(start + k as f64 * step)).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad("expected start:stop:step or a comma list")),
    }
}

fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Config of grid point `point_index` with its calibration seed.
pub fn point_config(base: &CityConfig, eta: f64, point_index: usize) -> CityConfig {
    let mut cfg = base.clone();
    cfg.departure_rate = eta;
    cfg.seed = calibration_seed(base.seed, point_index as u64);
    cfg
}

/// Config of one replicate run.
pub fn replicate_config(base: &CityConfig, eta: f64, point_index: usize, seed_index: usize) -> CityConfig {
    let mut cfg = base.clone();
    cfg.departure_rate = eta;
    cfg.seed = run_seed(base.seed, point_index as u64, seed_index as u64);
    cfg
}

pub fn solve_point_profile(
    base: &CityConfig,
    eta: f64,
    point_index: usize,
    solver: SolverOptions,
) -> Result<StationaryProfile, String> {
    calibrate(&point_config(base, eta, point_index), solver).map_err(|e| e.to_string())
}

pub fn run_replicate(cfg: &CityConfig, profile: &StationaryProfile) -> Result<MetricsReport, String> {
    let mut meter = MetricsAccumulator::new(cfg);
    Simulation::new(cfg, profile).run(&mut meter);
    meter.finish().map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct PointData {
    pub profile: StationaryProfile,
    pub reports: Vec<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub index: usize,
    pub eta: f64,
    pub classification: Classification,
    pub outcome: Result<PointData, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub thresholds: RegimeThresholds,
    pub points: Vec<PointResult>,
}

fn run_point(plan: &SweepPlan, index: usize, eta: f64) -> Result<PointData, String> {
    let profile = solve_point_profile(&plan.base, eta, index, plan.solver)?;
    let reports = (0..plan.seeds_per_point)
        .into_par_iter()
        .map(|s| run_replicate(&replicate_config(&plan.base, eta, index, s), &profile))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointData { profile, reports })
}

/// Runs every point. A failing point is recorded and the others go on.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult, PlanError> {
    plan.validate()?;
    let th = thresholds(&plan.base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .expect("thread pool");
    let points = pool.install(|| {
        plan.eta_grid
            .par_iter()
            .enumerate()
            .map(|(index, &eta)| PointResult {
                index,
                eta,
                classification: classify(eta, &th),
                outcome: run_point(plan, index, eta),
            })
            .collect()
    });
    Ok(SweepResult { plan: plan.clone(), thresholds: th, points })
}

/// Mean and interval of one observable of one area across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub eta: f64,
    pub regime: Regime,
    pub area_id: usize,
    pub revenue: f64,
    /// `None` when the point failed.
    pub stats: Option<[Aggregate; 3]>,
    pub seeds: usize,
}

fn aggregate(values: &[f64], plan: &SweepPlan, path: [u64; 3]) -> Aggregate {
    let mut stream = Stream::derived(plan.base.seed, &[Purpose::Bootstrap as u64, path[0], path[1], path[2]]);
    let (ci_lo, ci_hi) = mean_ci(values, plan.alpha, plan.resamples, &mut stream);
    Aggregate { mean: mean(values), ci_lo, ci_hi }
}

impl SweepResult {
    /// One row per (point, area), in grid then area order.
    pub fn table(&self) -> Vec<TableRow> {
        let mut rows = Vec::with_capacity(self.points.len() * self.plan.base.n_areas());
        for point in &self.points {
            for area in &self.plan.base.areas {
                let stats = point.outcome.as_ref().ok().map(|data| {
                    let pick = |f: fn(&turfsim_core::AreaMetrics) -> f64| -> Vec<f64> {
                        data.reports.iter().map(|r| f(&r.areas[area.area_id])).collect()
                    };
                    let path = |obs: u64| [point.index as u64, area.area_id as u64, obs];
                    [
                        aggregate(&pick(|a| a.occupancy_fraction), &self.plan, path(0)),
                        aggregate(&pick(|a| a.violence_rate), &self.plan, path(1)),
                        aggregate(&pick(|a| a.mean_streak), &self.plan, path(2)),
                    ]
                });
                rows.push(TableRow {
                    eta: point.eta,
                    regime: point.classification.regime,
                    area_id: area.area_id,
                    revenue: area.revenue,
                    seeds: point.outcome.as_ref().map_or(0, |d| d.reports.len()),
                    stats,
                });
            }
        }
        rows
    }

    pub fn failures(&self) -> impl Iterator<Item = (f64, &str)> {
        self.points.iter().filter_map(|p| p.outcome.as_ref().err().map(|e| (p.eta, e.as_str())))
    }

    fn reports_at(&self, eta: f64) -> Option<&[MetricsReport]> {
        self.points
            .iter()
            .find(|p| (p.eta - eta).abs() < 1e-9)
            .and_then(|p| p.outcome.as_ref().ok())
            .map(|d| d.reports.as_slice())
    }

    /// Runs the proposition checker at every successful point, and the
    /// corollary checker on the points at `threshold ± epsilon` when the
    /// grid contains them.
    pub fn check(&self, opts: CheckOptions, epsilon: f64) -> VerdictDocument {
        let th = &self.thresholds;
        let propositions = self
            .points
            .iter()
            .map(|p| {
                let result = match &p.outcome {
                    Ok(data) => check_propositions(&data.reports, p.eta, th, opts).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("point failed: {e}")),
                };
                PointVerdicts { eta: p.eta, regime: p.classification.regime, result: result.into() }
            })
            .collect();
        let pair = |t: f64| {
            let below = self.reports_at(round_grid(t - epsilon))?;
            let above = self.reports_at(round_grid(t + epsilon))?;
            Some(ThresholdPair {
                below: SweepPoint { eta: t - epsilon, reports: below },
                above: SweepPoint { eta: t + epsilon, reports: above },
            })
        };
        let corollaries =
            check_corollaries(th, pair(th.eta_lower), pair(th.eta_upper), opts).map_err(|e| e.to_string()).into();
        VerdictDocument { alpha: opts.alpha, epsilon, thresholds: th.clone(), propositions, corollaries }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckResult {
    Clauses(Vec<ClauseVerdict>),
    Error(String),
}

impl From<Result<Vec<ClauseVerdict>, String>> for CheckResult {
    fn from(r: Result<Vec<ClauseVerdict>, String>) -> Self {
        match r {
            Ok(c) => CheckResult::Clauses(c),
            Err(e) => CheckResult::Error(e),
        }
    }
}

impl CheckResult {
    pub fn clauses(&self) -> &[ClauseVerdict] {
        match self {
            CheckResult::Clauses(c) => c,
            CheckResult::Error(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointVerdicts {
    pub eta: f64,
    pub regime: Regime,
    pub result: CheckResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictDocument {
    pub alpha: f64,
    pub epsilon: f64,
    pub thresholds: RegimeThresholds,
    pub propositions: Vec<PointVerdicts>,
    pub corollaries: CheckResult,
}

pub fn write_table<W: Write>(w: W, rows: &[TableRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE_HEADER)?;
    for r in rows {
        let mut record = vec![r.eta.to_string(), r.regime.as_str().to_owned(), r.area_id.to_string(), r.revenue.to_string()];
        match &r.stats {
            Some(stats) => {
                for s in stats {
                    record.extend([s.mean.to_string(), s.ci_lo.to_string(), s.ci_hi.to_string()]);
                }
            }
            None => record.extend(std::iter::repeat_n(String::new(), 9)),
        }
        record.push(r.seeds.to_string());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
