//! Beliefs about whether an area is unoccupied, and the stationary profile
//! those beliefs relax towards.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BeliefRecord, CityConfig};

/// Stationary probabilities are kept inside `[P_CLAMP, 1 - P_CLAMP]` so the
/// relaxation rate `1 / (1 - p)` stays finite.
pub const P_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum BeliefError {
    ClockRegression { now: f64, last_seen: f64 },
    InvalidPrior(f64),
    InvalidSolverOptions(&'static str),
    /// The calibration callback returned something other than one
    /// probability per area.
    BadCalibration { iteration: u32 },
}

impl fmt::Display for BeliefError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeliefError::ClockRegression { now, last_seen } => {
                write!(f, "clock regression: now {now} precedes last observation at {last_seen}")
            }
            BeliefError::InvalidPrior(p) => write!(f, "stationary probability {p} not in (0, 1)"),
            BeliefError::InvalidSolverOptions(what) => write!(f, "invalid solver options: {what}"),
            BeliefError::BadCalibration { iteration } => {
                write!(f, "calibration run {iteration} returned malformed occupancy")
            }
        }
    }
}

impl core::error::Error for BeliefError {}

/// Probability that an area is unoccupied at `now`, given what was last seen
/// there and the stationary probability `p_m`.
///
/// The belief starts at `1 - z` (0 right after finding the area occupied, 1
/// right after leaving it empty) and relaxes exponentially towards `p_m` with
/// time constant `1 - p_m`. Never-seen areas sit at `p_m`.
pub fn belief_unoccupied(record: &BeliefRecord, p_m: f64, now: f64) -> Result<f64, BeliefError> {
    if !(p_m > 0.0 && p_m < 1.0) {
        return Err(BeliefError::InvalidPrior(p_m));
    }
    let Some(last_seen) = record.last_seen_time else {
        return Ok(p_m);
    };
    if now < last_seen {
        return Err(BeliefError::ClockRegression { now, last_seen });
    }
    let decay = libm::exp(-(now - last_seen) / (1.0 - p_m));
    let left_empty = if record.last_seen_occupied { 0.0 } else { 1.0 };
    let q = p_m * (1.0 - decay) + left_empty * decay;
    Ok(q.clamp(0.0, 1.0))
}

/// Overwrites `record` with an observation made at `now`.
///
/// Leaving an exploited area is recorded as `found_occupied = false` at the
/// time of leaving.
pub fn record_observation(
    record: &BeliefRecord,
    now: f64,
    found_occupied: bool,
) -> Result<BeliefRecord, BeliefError> {
    match record.last_seen_time {
        Some(last_seen) if now < last_seen => Err(BeliefError::ClockRegression { now, last_seen }),
        _ => Ok(BeliefRecord::seen(now, found_occupied)),
    }
}

/// Common-knowledge probability that each area is unoccupied, with the
/// convergence data of the fixed-point iteration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub p: Vec<f64>,
    pub iterations_used: u32,
    pub converged: bool,
    pub residual: f64,
}

impl StationaryProfile {
    /// A profile fixed by hand rather than solved for.
    pub fn fixed(p: Vec<f64>) -> Self {
        let p = p.into_iter().map(clamp_probability).collect();
        StationaryProfile { p, iterations_used: 0, converged: true, residual: 0.0 }
    }

    /// The initial guess `1 / (1 + eta)` for every area.
    pub fn initial(cfg: &CityConfig) -> Self {
        let guess = cfg.return_rate / (cfg.return_rate + cfg.departure_rate);
        let mut profile = Self::fixed(alloc::vec![guess; cfg.n_areas()]);
        profile.converged = false;
        profile
    }
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { damping: 0.5, tol: 1e-3, max_iter: 50 }
    }
}

/// Damped fixed-point iteration for the stationary profile.
///
/// `simulate(cfg, profile, iteration)` must run the model with beliefs built
/// on `profile` and return the measured fraction of time each area was
/// unoccupied. The next iterate is `(1 - damping) * p + damping * measured`,
/// clamped. Iteration stops once the sup-norm change drops below `tol`.
pub fn solve_stationary<F>(
    cfg: &CityConfig,
    mut simulate: F,
    opts: SolverOptions,
) -> Result<StationaryProfile, BeliefError>
where
    F: FnMut(&CityConfig, &StationaryProfile, u32) -> Vec<f64>,
{
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(BeliefError::InvalidSolverOptions("damping must lie in (0, 1]"));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(BeliefError::InvalidSolverOptions("tol must be positive"));
    }
    let mut profile = StationaryProfile::initial(cfg);
    for iteration in 0..opts.max_iter {
        let measured = simulate(cfg, &profile, iteration);
        if measured.len() != profile.p.len()
            || measured.iter().any(|m| !(0.0..=1.0).contains(m))
        {
            return Err(BeliefError::BadCalibration { iteration });
        }
        let mut residual: f64 = 0.0;
        for (p, m) in profile.p.iter_mut().zip(&measured) {
            let next = clamp_probability((1.0 - opts.damping) * *p + opts.damping * m);
            residual = residual.max((next - *p).abs());
            *p = next;
        }
        profile.iterations_used = iteration + 1;
        profile.residual = residual;
        if residual < opts.tol {
            profile.converged = true;
            break;
        }
    }
    Ok(profile)
}
