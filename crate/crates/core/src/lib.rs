//! Event-driven simulation of organized criminal groups (OCGs) competing for
//! city areas.
//!
//! Each group alternates between its turf and the city. When it leaves the
//! turf it ranks areas by expected return, computed from a time-decaying
//! belief that each area is unoccupied, and walks that ranking until it finds
//! a free area. Entering an occupied area is a collision: the intruder pays
//! the collision cost and moves on.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel sweeps and
//! the command-line tool live in the `turfsim` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod belief;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod regime;
pub mod rng;
pub mod stats;
pub mod strategy;

pub use belief::{
    belief_unoccupied, record_observation, solve_stationary, BeliefError, SolverOptions,
    StationaryProfile,
};
pub use engine::{calibrate, replay_check, run, EventSink, ReplayViolation, RunSummary, Simulation};
pub use metrics::{
    compute_metrics, empirical_streaks, ocg_count, AreaMetrics, DayEvent, MetricsAccumulator,
    MetricsError, MetricsReport,
};
pub use model::{
    validate_config, AreaId, AreaSpec, BeliefRecord, CityConfig, ConfigError, EventKind,
    EventRecord, Location, OcgId, OcgState, StreakMode,
};
pub use regime::{
    check_corollaries, check_propositions, classify, thresholds, CheckError, CheckOptions,
    Classification, ClauseVerdict, Regime, RegimeThresholds, SweepPoint, ThresholdPair, Verdict,
};
pub use strategy::{expected_return, exploration_order};
