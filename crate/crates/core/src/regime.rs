//! Activity-rate thresholds, regime classification and statistical checks of
//! the predicted orderings of concentration, violence and streaks.
//!
//! The checks are written for three-area cities, with areas referred to by
//! rank (area 1 is the most lucrative).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsReport;
use crate::model::CityConfig;
use crate::rng::{derive_seed, Purpose, Stream};
use crate::stats::{diff_bounds, mean, mean_ci};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// Largest adjacent revenue gap over the collision cost.
    pub eta_lower: f64,
    /// Spread between the best and worst area over the collision cost.
    pub eta_upper: f64,
    /// `(u_j - u_{j+1}) / c` for each adjacent pair.
    pub gap_ratios: Vec<f64>,
}

pub fn thresholds(cfg: &CityConfig) -> RegimeThresholds {
    let c = cfg.collision_cost;
    let gap_ratios: Vec<f64> = cfg.areas.windows(2).map(|p| (p[0].revenue - p[1].revenue) / c).collect();
    let eta_upper = match (cfg.areas.first(), cfg.areas.last()) {
        (Some(first), Some(last)) => (first.revenue - last.revenue) / c,
        _ => 0.0,
    };
    RegimeThresholds {
        eta_lower: gap_ratios.iter().copied().fold(0.0, f64::max),
        eta_upper,
        gap_ratios,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoPropertyRights,
    Intermediate,
    FullPropertyRights,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NoPropertyRights => "no_property_rights",
            Regime::Intermediate => "intermediate",
            Regime::FullPropertyRights => "full_property_rights",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: Regime,
    /// `eta` sits exactly on a threshold; it was assigned the regime above.
    pub on_boundary: bool,
}

pub fn classify(eta: f64, th: &RegimeThresholds) -> Classification {
    let regime = if eta >= th.eta_upper {
        Regime::FullPropertyRights
    } else if eta >= th.eta_lower {
        Regime::Intermediate
    } else {
        Regime::NoPropertyRights
    };
    Classification { regime, on_boundary: eta == th.eta_upper || eta == th.eta_lower }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { alpha: 0.05, resamples: 10_000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one clause.
///
/// For orderings `statistic` is the difference of means and `ci` the interval
/// it was judged on; for zero clauses `statistic` is the collision count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseVerdict {
    pub clause: String,
    pub regime: Regime,
    pub statistic: f64,
    pub ci: Option<(f64, f64)>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl ClauseVerdict {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckError {
    InsufficientSeeds(usize),
    UnsupportedAreaCount(usize),
    InvalidAlpha(f64),
    MissingPoints,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::InsufficientSeeds(n) => write!(f, "need at least 2 seeds per point, got {n}"),
            CheckError::UnsupportedAreaCount(m) => write!(f, "checks are defined for 3 areas, got {m}"),
            CheckError::InvalidAlpha(a) => write!(f, "alpha {a} not in (0, 0.5)"),
            CheckError::MissingPoints => write!(f, "no paired sweep points supplied"),
        }
    }
}

impl core::error::Error for CheckError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Observable {
    Occupancy,
    Violence,
    Streak,
}

impl Observable {
    fn letter(self) -> char {
        match self {
            Observable::Occupancy => 'O',
            Observable::Violence => 'V',
            Observable::Streak => 'R',
        }
    }

    fn samples(self, reports: &[MetricsReport], area: usize) -> Vec<f64> {
        reports
            .iter()
            .map(|r| {
                let a = &r.areas[area];
                match self {
                    Observable::Occupancy => a.occupancy_fraction,
                    Observable::Violence => a.violence_rate,
                    Observable::Streak => a.mean_streak,
                }
            })
            .collect()
    }
}

struct Checker<'a> {
    reports: &'a [MetricsReport],
    regime: Regime,
    opts: CheckOptions,
    stream: Stream,
}

impl Checker<'_> {
    fn verdict(&self, clause: String, statistic: f64, ci: Option<(f64, f64)>, pass: bool) -> ClauseVerdict {
        ClauseVerdict {
            clause,
            regime: self.regime,
            statistic,
            ci,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            note: None,
        }
    }

    fn ci(&mut self, obs: Observable, area: usize) -> (f64, f64) {
        let xs = obs.samples(self.reports, area);
        mean_ci(&xs, self.opts.alpha, self.opts.resamples, &mut self.stream)
    }

    /// `X_hi > X_lo`, passing when the two intervals separate. With
    /// `strict == false` it only fails when they separate the other way.
    fn greater(&mut self, obs: Observable, hi: usize, lo: usize, strict: bool) -> ClauseVerdict {
        let (a_lo, a_hi) = self.ci(obs, hi);
        let (b_lo, b_hi) = self.ci(obs, lo);
        let statistic = mean(&obs.samples(self.reports, hi)) - mean(&obs.samples(self.reports, lo));
        let gap = (a_lo - b_hi, a_hi - b_lo);
        let (op, pass) = if strict { (">", gap.0 > 0.0) } else { (">=", gap.1 >= 0.0) };
        let l = obs.letter();
        self.verdict(format!("{l}{}{op}{l}{}", hi + 1, lo + 1), statistic, Some(gap), pass)
    }

    fn positive(&mut self, obs: Observable, area: usize) -> ClauseVerdict {
        let ci = self.ci(obs, area);
        let statistic = mean(&obs.samples(self.reports, area));
        self.verdict(format!("{}{}>0", obs.letter(), area + 1), statistic, Some(ci), ci.0 > 0.0)
    }

    fn zero_violence(&self, area: usize) -> ClauseVerdict {
        let count: u64 = self.reports.iter().map(|r| r.areas[area].collisions).sum();
        self.verdict(format!("V{}=0", area + 1), count as f64, None, count == 0)
    }

    /// All pairwise intervals overlap and, when `target` is given, each
    /// contains it.
    fn all_equal(&mut self, obs: Observable, target: Option<f64>) -> ClauseVerdict {
        let cis: Vec<(f64, f64)> = (0..3).map(|m| self.ci(obs, m)).collect();
        let means: Vec<f64> = (0..3).map(|m| mean(&obs.samples(self.reports, m))).collect();
        let mut pass = true;
        let mut spread: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                pass &= cis[i].0 <= cis[j].1 && cis[j].0 <= cis[i].1;
                spread = spread.max((means[i] - means[j]).abs());
            }
        }
        if let Some(t) = target {
            pass &= cis.iter().all(|&(lo, hi)| lo <= t && t <= hi);
        }
        let l = obs.letter();
        let mut v = self.verdict(format!("{l}1={l}2={l}3"), spread, None, pass);
        if let Some(t) = target {
            v.note = Some(format!("target {t}"));
        }
        v
    }
}

/// Evaluates every clause predicted for the regime of `eta` on a set of
/// independent-seed reports of a three-area city.
///
/// Strict orderings pass when the `1 - alpha` bootstrap intervals of the two
/// means separate; zero-violence clauses need an exact zero; equalities need
/// overlapping intervals, and concentrations must also cover
/// `eta / (1 + eta)`.
pub fn check_propositions(
    reports: &[MetricsReport],
    eta: f64,
    th: &RegimeThresholds,
    opts: CheckOptions,
) -> Result<Vec<ClauseVerdict>, CheckError> {
    if reports.len() < 2 {
        return Err(CheckError::InsufficientSeeds(reports.len()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 0.5) {
        return Err(CheckError::InvalidAlpha(opts.alpha));
    }
    if let Some(r) = reports.iter().find(|r| r.areas.len() != 3) {
        return Err(CheckError::UnsupportedAreaCount(r.areas.len()));
    }
    let regime = classify(eta, th).regime;
    let mut c = Checker {
        reports,
        regime,
        opts,
        stream: Stream::derived(opts.seed, &[Purpose::Bootstrap as u64]),
    };
    use Observable::*;
    let verdicts = match regime {
        Regime::FullPropertyRights => alloc::vec![
            c.all_equal(Occupancy, Some(eta / (1.0 + eta))),
            c.zero_violence(0),
            c.zero_violence(1),
            c.zero_violence(2),
            c.all_equal(Streak, None),
        ],
        Regime::Intermediate => alloc::vec![
            c.greater(Occupancy, 1, 2, true),
            c.greater(Occupancy, 0, 1, true),
            c.positive(Violence, 0),
            c.zero_violence(1),
            c.zero_violence(2),
            c.greater(Streak, 1, 0, true),
            c.greater(Streak, 0, 2, true),
        ],
        Regime::NoPropertyRights => alloc::vec![
            c.greater(Occupancy, 1, 2, true),
            c.greater(Occupancy, 0, 1, true),
            c.greater(Violence, 0, 1, true),
            c.positive(Violence, 1),
            c.zero_violence(2),
            c.greater(Streak, 0, 1, true),
            c.greater(Streak, 1, 2, false),
        ],
    };
    Ok(verdicts)
}

/// Reports from independent seeds at one activity rate.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint<'a> {
    pub eta: f64,
    pub reports: &'a [MetricsReport],
}

/// Points just below and just above a threshold.
#[derive(Clone, Copy, Debug)]
pub struct ThresholdPair<'a> {
    pub below: SweepPoint<'a>,
    pub above: SweepPoint<'a>,
}

/// One-sided tests of the jumps in concentration and violence across the
/// thresholds: crossing either threshold downwards raises the best area's
/// concentration and lowers the worst area's; violence in area 1 rises at
/// both thresholds and in area 2 at the lower one.
///
/// Each clause passes when the `alpha` quantile of the bootstrap difference
/// is positive. Violence clauses with no collisions on either side are
/// skipped. A pair whose two points fall in the same regime is evaluated but
/// flagged in the clause note.
pub fn check_corollaries(
    th: &RegimeThresholds,
    lower: Option<ThresholdPair<'_>>,
    upper: Option<ThresholdPair<'_>>,
    opts: CheckOptions,
) -> Result<Vec<ClauseVerdict>, CheckError> {
    if lower.is_none() && upper.is_none() {
        return Err(CheckError::MissingPoints);
    }
    if !(opts.alpha > 0.0 && opts.alpha < 0.5) {
        return Err(CheckError::InvalidAlpha(opts.alpha));
    }
    let mut verdicts = Vec::new();
    for (name, pair) in [("lower", lower), ("upper", upper)] {
        let Some(pair) = pair else { continue };
        for p in [pair.below, pair.above] {
            if p.reports.len() < 2 {
                return Err(CheckError::InsufficientSeeds(p.reports.len()));
            }
            if let Some(r) = p.reports.iter().find(|r| r.areas.len() < 3) {
                return Err(CheckError::UnsupportedAreaCount(r.areas.len()));
            }
        }
        let below_regime = classify(pair.below.eta, th).regime;
        let degenerate = below_regime == classify(pair.above.eta, th).regime;
        // (observable, area, true when the value below the threshold is larger)
        let mut clauses = alloc::vec![
            (Observable::Occupancy, 0, true),
            (Observable::Occupancy, 2, false),
            (Observable::Violence, 0, true),
        ];
        if name == "lower" {
            clauses.push((Observable::Violence, 1, true));
        }
        let mut stream = Stream::new(derive_seed(opts.seed, &[Purpose::Bootstrap as u64, name.len() as u64]));
        for (obs, area, below_larger) in clauses {
            let below = obs.samples(pair.below.reports, area);
            let above = obs.samples(pair.above.reports, area);
            let (big, small) = if below_larger { (&below, &above) } else { (&above, &below) };
            let l = obs.letter();
            let rel = if below_larger { ">" } else { "<" };
            let clause = format!("{name}:{l}{}(eta-){rel}{l}{}(eta+)", area + 1, area + 1);
            let statistic = mean(big) - mean(small);
            let mut verdict = if obs == Observable::Violence && below.iter().chain(&above).all(|&v| v == 0.0) {
                ClauseVerdict {
                    clause,
                    regime: below_regime,
                    statistic,
                    ci: None,
                    verdict: Verdict::Skipped,
                    note: Some(String::from("no collisions on either side")),
                }
            } else {
                let ci = diff_bounds(big, small, opts.alpha, opts.resamples, &mut stream);
                ClauseVerdict {
                    clause,
                    regime: below_regime,
                    statistic,
                    ci: Some(ci),
                    verdict: if ci.0 > 0.0 { Verdict::Pass } else { Verdict::Fail },
                    note: None,
                }
            };
            if degenerate {
                verdict.note = Some(format!(
                    "warning: eta {} and {} are both {}",
                    pair.below.eta, pair.above.eta, below_regime
                ));
            }
            verdicts.push(verdict);
        }
    }
    Ok(verdicts)
}
