//! Shared domain types and configuration validation.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub type AreaId = usize;
pub type OcgId = usize;

/// A city area. Areas are indexed in rank order, area 0 being the most
/// lucrative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaSpec {
    pub area_id: AreaId,
    pub revenue: f64,
}

/// How a run of consecutive occupation spells by the same group is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreakMode {
    /// Number of spells in the run.
    #[default]
    SpellCount,
    /// Time from the first spell's start to the last spell's end.
    Duration,
}

/// Full parameterization of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    pub areas: Vec<AreaSpec>,
    pub n_ocgs: usize,
    /// Rate at which a group in its turf leaves for the city.
    pub departure_rate: f64,
    /// Rate at which an occupying group returns to its turf.
    pub return_rate: f64,
    pub collision_cost: f64,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub streak_mode: StreakMode,
    pub collision_breaks_streak: bool,
}

pub const DEFAULT_RETURN_RATE: f64 = 1.0;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

impl CityConfig {
    /// Builds a config from revenues listed in rank order; optional fields
    /// take their defaults.
    pub fn new(
        revenues: &[f64],
        n_ocgs: usize,
        departure_rate: f64,
        collision_cost: f64,
        horizon: f64,
        seed: u64,
    ) -> Self {
        CityConfig {
            areas: revenues
                .iter()
                .enumerate()
                .map(|(area_id, &revenue)| AreaSpec { area_id, revenue })
                .collect(),
            n_ocgs,
            departure_rate,
            return_rate: DEFAULT_RETURN_RATE,
            collision_cost,
            horizon,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            seed,
            streak_mode: StreakMode::default(),
            collision_breaks_streak: false,
        }
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn revenues(&self) -> impl Iterator<Item = f64> + '_ {
        self.areas.iter().map(|a| a.revenue)
    }

    /// Start of the measurement window.
    pub fn warmup_end(&self) -> f64 {
        self.warmup_fraction * self.horizon
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.areas.is_empty() {
            return Err(ConfigError::NoAreas);
        }
        if self.n_ocgs == 0 {
            return Err(ConfigError::NoOcgs);
        }
        for (index, area) in self.areas.iter().enumerate() {
            if area.area_id != index {
                return Err(ConfigError::AreaIdOutOfOrder { index, area_id: area.area_id });
            }
            if !(area.revenue.is_finite() && area.revenue > 0.0) {
                return Err(ConfigError::NonPositiveRevenue { area: index });
            }
        }
        for pair in self.areas.windows(2) {
            if pair[1].revenue >= pair[0].revenue {
                return Err(ConfigError::RevenuesNotDecreasing { area: pair[1].area_id });
            }
        }
        if !(self.collision_cost.is_finite() && self.collision_cost > 0.0) {
            return Err(ConfigError::NonPositiveCost);
        }
        let last = self.areas[self.areas.len() - 1];
        if last.revenue <= self.collision_cost {
            return Err(ConfigError::RevenueNotAboveCost { area: last.area_id });
        }
        // Interior thresholds only exist with four or more areas; with three
        // the two gaps enter a single max and may coincide.
        if self.areas.len() >= 4 {
            let gaps: Vec<f64> = self.areas.windows(2).map(|p| p[0].revenue - p[1].revenue).collect();
            for i in 0..gaps.len() {
                for j in i + 1..gaps.len() {
                    if gaps[i] == gaps[j] {
                        return Err(ConfigError::DuplicateGap { first: i, second: j });
                    }
                }
            }
        }
        if !(self.departure_rate.is_finite() && self.departure_rate >= 0.0) {
            return Err(ConfigError::InvalidRate { field: "departure_rate" });
        }
        if !(self.return_rate.is_finite() && self.return_rate > 0.0) {
            return Err(ConfigError::InvalidRate { field: "return_rate" });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ConfigError::NonPositiveHorizon);
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(ConfigError::InvalidWarmup);
        }
        Ok(())
    }
}

/// Returns `cfg` unchanged when every configuration invariant holds.
pub fn validate_config(cfg: CityConfig) -> Result<CityConfig, ConfigError> {
    cfg.validate().map(|()| cfg)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigError {
    NoAreas,
    NoOcgs,
    AreaIdOutOfOrder { index: usize, area_id: AreaId },
    NonPositiveRevenue { area: AreaId },
    RevenuesNotDecreasing { area: AreaId },
    NonPositiveCost,
    RevenueNotAboveCost { area: AreaId },
    DuplicateGap { first: usize, second: usize },
    InvalidRate { field: &'static str },
    NonPositiveHorizon,
    InvalidWarmup,
}

impl ConfigError {
    /// Name of the configuration field at fault.
    pub fn field(&self) -> &'static str {
        match self {
            ConfigError::NoAreas
            | ConfigError::AreaIdOutOfOrder { .. }
            | ConfigError::NonPositiveRevenue { .. }
            | ConfigError::RevenuesNotDecreasing { .. }
            | ConfigError::RevenueNotAboveCost { .. }
            | ConfigError::DuplicateGap { .. } => "areas",
            ConfigError::NoOcgs => "n_ocgs",
            ConfigError::NonPositiveCost => "collision_cost",
            ConfigError::InvalidRate { field } => field,
            ConfigError::NonPositiveHorizon => "horizon",
            ConfigError::InvalidWarmup => "warmup_fraction",
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::NoAreas => write!(f, "areas: at least one area is required"),
            ConfigError::NoOcgs => write!(f, "n_ocgs: at least one group is required"),
            ConfigError::AreaIdOutOfOrder { index, area_id } => {
                write!(f, "areas: entry {index} has area_id {area_id}, expected {index}")
            }
            ConfigError::NonPositiveRevenue { area } => {
                write!(f, "areas: revenue of area {area} must be positive and finite")
            }
            ConfigError::RevenuesNotDecreasing { area } => {
                write!(f, "areas: revenues not strictly decreasing at area {area}")
            }
            ConfigError::NonPositiveCost => write!(f, "collision_cost: must be positive and finite"),
            ConfigError::RevenueNotAboveCost { area } => {
                write!(f, "areas: revenue of area {area} does not exceed collision_cost")
            }
            ConfigError::DuplicateGap { first, second } => write!(
                f,
                "areas: revenue gaps {first}->{} and {second}->{} are equal",
                first + 1,
                second + 1
            ),
            ConfigError::InvalidRate { field } => write!(f, "{field}: invalid rate"),
            ConfigError::NonPositiveHorizon => write!(f, "horizon: must be positive and finite"),
            ConfigError::InvalidWarmup => write!(f, "warmup_fraction: must lie in [0, 1)"),
        }
    }
}

impl core::error::Error for ConfigError {}

/// What a group last saw in one area: when, and whether it was occupied.
///
/// `last_seen_time == None` means the group has never been there; its belief
/// is then the stationary prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub last_seen_time: Option<f64>,
    pub last_seen_occupied: bool,
}

impl BeliefRecord {
    pub const NEVER: BeliefRecord = BeliefRecord { last_seen_time: None, last_seen_occupied: false };

    pub fn seen(time: f64, occupied: bool) -> Self {
        BeliefRecord { last_seen_time: Some(time), last_seen_occupied: occupied }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    InTurf,
    Occupying(AreaId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcgState {
    pub ocg_id: OcgId,
    pub location: Location,
    pub beliefs: Vec<BeliefRecord>,
    pub cumulative_payoff: f64,
    pub next_event_time: f64,
}

impl OcgState {
    pub fn new(ocg_id: OcgId, n_areas: usize) -> Self {
        OcgState {
            ocg_id,
            location: Location::InTurf,
            beliefs: alloc::vec![BeliefRecord::NEVER; n_areas],
            cumulative_payoff: 0.0,
            next_event_time: f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Departure,
    CollisionAt(AreaId),
    OccupyStart(AreaId),
    /// `None` when the excursion found nothing worth taking.
    ReturnToTurf(Option<AreaId>),
}

impl EventKind {
    pub fn area(&self) -> Option<AreaId> {
        match *self {
            EventKind::Departure => None,
            EventKind::CollisionAt(m) | EventKind::OccupyStart(m) => Some(m),
            EventKind::ReturnToTurf(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Departure => "departure",
            EventKind::CollisionAt(_) => "collision",
            EventKind::OccupyStart(_) => "occupy",
            EventKind::ReturnToTurf(_) => "return",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub ocg_id: OcgId,
    pub incumbent_id: Option<OcgId>,
}

impl EventRecord {
    pub fn new(time: f64, kind: EventKind, ocg_id: OcgId) -> Self {
        EventRecord { time, kind, ocg_id, incumbent_id: None }
    }

    pub fn collision(time: f64, area: AreaId, ocg_id: OcgId, incumbent: OcgId) -> Self {
        EventRecord { time, kind: EventKind::CollisionAt(area), ocg_id, incumbent_id: Some(incumbent) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> CityConfig {
        CityConfig::new(&[30.0, 20.0, 10.0], 3, 25.0, 1.0, 1e4, 1)
    }

    #[test]
    fn accepts_three_area_city() {
        assert_eq!(validate_config(three()), Ok(three()));
    }

    #[test]
    fn accepts_ten_area_city() {
        let u = [173.0, 125.0, 100.0, 76.0, 63.0, 51.0, 42.0, 35.0, 29.0, 26.0];
        assert!(CityConfig::new(&u, 10, 10.0, 5.0, 8e4, 1).validate().is_ok());
    }

    #[test]
    fn rejects_increasing_revenues() {
        let cfg = CityConfig::new(&[10.0, 20.0, 30.0], 3, 1.0, 1.0, 10.0, 1);
        assert_eq!(cfg.validate(), Err(ConfigError::RevenuesNotDecreasing { area: 1 }));
        assert_eq!(cfg.validate().unwrap_err().field(), "areas");
    }

    #[test]
    fn rejects_revenue_at_cost() {
        let cfg = CityConfig::new(&[30.0, 20.0, 5.0], 3, 1.0, 5.0, 10.0, 1);
        assert_eq!(cfg.validate(), Err(ConfigError::RevenueNotAboveCost { area: 2 }));
    }

    #[test]
    fn rejects_duplicate_gaps_with_four_areas() {
        let cfg = CityConfig::new(&[40.0, 30.0, 25.0, 15.0], 3, 1.0, 1.0, 10.0, 1);
        assert_eq!(cfg.validate(), Err(ConfigError::DuplicateGap { first: 0, second: 2 }));
    }

    #[test]
    fn rejects_bad_rates_and_horizon() {
        let mut cfg = three();
        cfg.departure_rate = -1.0;
        assert_eq!(cfg.validate().unwrap_err().field(), "departure_rate");
        let mut cfg = three();
        cfg.return_rate = 0.0;
        assert_eq!(cfg.validate().unwrap_err().field(), "return_rate");
        let mut cfg = three();
        cfg.horizon = 0.0;
        assert_eq!(cfg.validate(), Err(ConfigError::NonPositiveHorizon));
        let mut cfg = three();
        cfg.warmup_fraction = 1.0;
        assert_eq!(cfg.validate(), Err(ConfigError::InvalidWarmup));
    }

    #[test]
    fn zero_departure_rate_is_allowed() {
        let mut cfg = three();
        cfg.departure_rate = 0.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_config(three()).unwrap();
        assert_eq!(validate_config(once.clone()), Ok(once));
    }
}
