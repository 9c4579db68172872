//! Continuous-time event-driven simulation.
//!
//! Every group holds one pending clock: an exponential(`departure_rate`)
//! departure clock while in its turf, an exponential(`return_rate`) return
//! clock while occupying an area. The engine repeatedly fires the earliest
//! clock (ties go to the lower group id).
//!
//! A departure is a whole excursion, resolved instantly: the group ranks the
//! areas once, then walks that ranking. Each occupied area it meets is a
//! collision (it pays the cost, records the area as occupied and moves on);
//! the first free area is occupied. If the ranking runs out the group goes
//! straight back to its turf. The incumbent of an intruded area learns
//! nothing and stays.
//!
//! The city starts empty and every group knows it: all beliefs begin as
//! "seen free at time 0" and relax towards the stationary profile from there.

use alloc::vec::Vec;
use core::fmt;

use crate::belief::{solve_stationary, BeliefError, SolverOptions, StationaryProfile};
use crate::metrics::MetricsAccumulator;
use crate::model::{AreaId, BeliefRecord, CityConfig, EventKind, EventRecord, Location, OcgId, OcgState};
use crate::rng::{derive_seed, Purpose, Stream};
use crate::strategy::rank_areas;

/// Destination of the event stream.
pub trait EventSink {
    fn record(&mut self, event: &EventRecord);
}

impl EventSink for Vec<EventRecord> {
    fn record(&mut self, event: &EventRecord) {
        self.push(*event);
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn record(&mut self, event: &EventRecord) {
        (**self).record(event);
    }
}

impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn record(&mut self, event: &EventRecord) {
        self.0.record(event);
        self.1.record(event);
    }
}

/// State left behind when a run reaches its horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub final_states: Vec<OcgState>,
    pub occupancy: Vec<Option<OcgId>>,
    pub event_count: u64,
    pub clock: f64,
}

pub struct Simulation<'a> {
    cfg: &'a CityConfig,
    profile: &'a StationaryProfile,
    ocgs: Vec<OcgState>,
    occupancy: Vec<Option<OcgId>>,
    clock: f64,
    departures: Vec<Stream>,
    returns: Vec<Stream>,
    event_count: u64,
    scratch: Vec<(f64, AreaId)>,
    order: Vec<AreaId>,
}

impl<'a> Simulation<'a> {
    /// Sets every group in its turf with a fresh departure clock and the
    /// knowledge that every area is free at time 0.
    ///
    /// # Panics
    ///
    /// If `profile` does not carry one probability per area.
    pub fn new(cfg: &'a CityConfig, profile: &'a StationaryProfile) -> Self {
        assert_eq!(profile.p.len(), cfg.n_areas(), "stationary profile does not match the city");
        let n = cfg.n_ocgs;
        let departures: Vec<Stream> = (0..n)
            .map(|i| Stream::derived(cfg.seed, &[Purpose::Departure as u64, i as u64]))
            .collect();
        let returns = (0..n)
            .map(|i| Stream::derived(cfg.seed, &[Purpose::Return as u64, i as u64]))
            .collect();
        let mut sim = Simulation {
            cfg,
            profile,
            ocgs: (0..n).map(|i| OcgState::new(i, cfg.n_areas())).collect(),
            occupancy: alloc::vec![None; cfg.n_areas()],
            clock: 0.0,
            departures,
            returns,
            event_count: 0,
            scratch: Vec::with_capacity(cfg.n_areas()),
            order: Vec::with_capacity(cfg.n_areas()),
        };
        for i in 0..n {
            sim.ocgs[i].beliefs.fill(BeliefRecord::seen(0.0, false));
            let wait = sim.departures[i].exponential(cfg.departure_rate);
            sim.ocgs[i].next_event_time = wait;
        }
        sim
    }

    pub fn ocgs(&self) -> &[OcgState] {
        &self.ocgs
    }

    pub fn occupancy(&self) -> &[Option<OcgId>] {
        &self.occupancy
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    fn next_ocg(&self) -> Option<OcgId> {
        let mut best: Option<(f64, OcgId)> = None;
        for ocg in &self.ocgs {
            if best.is_none_or(|(t, _)| ocg.next_event_time < t) {
                best = Some((ocg.next_event_time, ocg.ocg_id));
            }
        }
        best.filter(|&(t, _)| t <= self.cfg.horizon).map(|(_, i)| i)
    }

    /// Fires the next pending clock. Returns `false` once nothing is left
    /// before the horizon.
    pub fn step<S: EventSink>(&mut self, sink: &mut S) -> bool {
        let Some(i) = self.next_ocg() else {
            return false;
        };
        let now = self.ocgs[i].next_event_time;
        debug_assert!(now >= self.clock);
        self.clock = now;
        match self.ocgs[i].location {
            Location::InTurf => self.excursion(i, now, sink),
            Location::Occupying(area) => self.return_to_turf(i, area, now, sink),
        }
        true
    }

    pub fn run<S: EventSink>(mut self, sink: &mut S) -> RunSummary {
        while self.step(sink) {}
        RunSummary {
            final_states: self.ocgs,
            occupancy: self.occupancy,
            event_count: self.event_count,
            clock: self.clock,
        }
    }

    fn emit<S: EventSink>(&mut self, sink: &mut S, event: EventRecord) {
        self.event_count += 1;
        sink.record(&event);
    }

    fn excursion<S: EventSink>(&mut self, i: OcgId, now: f64, sink: &mut S) {
        self.emit(sink, EventRecord::new(now, EventKind::Departure, i));
        rank_areas(&self.ocgs[i].beliefs, self.cfg, self.profile, now, &mut self.scratch, &mut self.order)
            .expect("beliefs are never recorded after the current clock");
        for k in 0..self.order.len() {
            let area = self.order[k];
            match self.occupancy[area] {
                Some(incumbent) => {
                    assert_ne!(incumbent, i, "group {i} explores an area it occupies");
                    self.emit(sink, EventRecord::collision(now, area, i, incumbent));
                    let ocg = &mut self.ocgs[i];
                    ocg.beliefs[area] = BeliefRecord::seen(now, true);
                    ocg.cumulative_payoff -= self.cfg.collision_cost;
                }
                None => {
                    self.occupancy[area] = Some(i);
                    self.emit(sink, EventRecord::new(now, EventKind::OccupyStart(area), i));
                    let wait = self.returns[i].exponential(self.cfg.return_rate);
                    let ocg = &mut self.ocgs[i];
                    ocg.location = Location::Occupying(area);
                    ocg.next_event_time = now + wait;
                    return;
                }
            }
        }
        self.emit(sink, EventRecord::new(now, EventKind::ReturnToTurf(None), i));
        let wait = self.departures[i].exponential(self.cfg.departure_rate);
        self.ocgs[i].next_event_time = now + wait;
    }

    fn return_to_turf<S: EventSink>(&mut self, i: OcgId, area: AreaId, now: f64, sink: &mut S) {
        assert_eq!(self.occupancy[area], Some(i), "occupancy out of sync for area {area}");
        self.occupancy[area] = None;
        self.emit(sink, EventRecord::new(now, EventKind::ReturnToTurf(Some(area)), i));
        let wait = self.departures[i].exponential(self.cfg.departure_rate);
        let ocg = &mut self.ocgs[i];
        ocg.location = Location::InTurf;
        ocg.beliefs[area] = BeliefRecord::seen(now, false);
        ocg.cumulative_payoff += self.cfg.areas[area].revenue;
        ocg.next_event_time = now + wait;
    }
}

/// Simulates from time 0 to the horizon and returns the full event log.
pub fn run(cfg: &CityConfig, profile: &StationaryProfile) -> Vec<EventRecord> {
    let mut log = Vec::new();
    Simulation::new(cfg, profile).run(&mut log);
    log
}

/// Solves the stationary profile by repeated calibration runs of the full
/// horizon. Occupancy is measured over the post-warm-up window; each
/// iteration draws from its own stream derived from `cfg.seed`.
pub fn calibrate(cfg: &CityConfig, opts: SolverOptions) -> Result<StationaryProfile, BeliefError> {
    solve_stationary(
        cfg,
        |cfg, profile, iteration| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = derive_seed(cfg.seed, &[Purpose::Calibration as u64, iteration as u64]);
            let mut meter = MetricsAccumulator::new(&run_cfg);
            Simulation::new(&run_cfg, profile).run(&mut meter);
            match meter.finish() {
                Ok(report) => report.areas.iter().map(|a| 1.0 - a.occupancy_fraction).collect(),
                Err(_) => Vec::new(),
            }
        },
        opts,
    )
}

/// The first rule a log breaks.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayViolation {
    /// Position of the offending event in the log.
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    TimeRegression { previous: f64, time: f64 },
    TimeOutOfRange(f64),
    UnknownOcg(OcgId),
    UnknownArea(AreaId),
    /// The event does not fit the group's departure / explore / occupy /
    /// return cycle.
    OutOfSequence { ocg: OcgId, event: &'static str },
    /// Another group's event arrived in the middle of an excursion, or an
    /// excursion step carries a different time from its departure.
    BrokenExcursion { ocg: OcgId },
    AreaAlreadyOccupied { area: AreaId, occupant: OcgId },
    IncumbentMismatch { area: AreaId, claimed: Option<OcgId>, actual: Option<OcgId> },
    UnexpectedIncumbent,
    ReturnFromWrongArea { ocg: OcgId, area: Option<AreaId> },
    UnfinishedExcursion { ocg: OcgId },
}

impl fmt::Display for ReplayViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {:?}", self.index, self.kind)
    }
}

impl core::error::Error for ReplayViolation {}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    InTurf,
    Exploring { since: f64 },
    Occupying(AreaId),
}

/// Streaming validator for event logs against the model dynamics.
#[derive(Clone, Debug)]
pub struct ReplayChecker {
    n_areas: usize,
    horizon: f64,
    phases: Vec<Phase>,
    occupancy: Vec<Option<OcgId>>,
    exploring: Option<OcgId>,
    last_time: f64,
    index: usize,
}

impl ReplayChecker {
    pub fn new(cfg: &CityConfig) -> Self {
        ReplayChecker {
            n_areas: cfg.n_areas(),
            horizon: cfg.horizon,
            phases: alloc::vec![Phase::InTurf; cfg.n_ocgs],
            occupancy: alloc::vec![None; cfg.n_areas()],
            exploring: None,
            last_time: 0.0,
            index: 0,
        }
    }

    pub fn push(&mut self, event: &EventRecord) -> Result<(), ReplayViolation> {
        let index = self.index;
        self.index += 1;
        self.apply(event).map_err(|kind| ReplayViolation { index, kind })
    }

    fn apply(&mut self, e: &EventRecord) -> Result<(), ViolationKind> {
        use ViolationKind as V;
        if !(e.time >= 0.0 && e.time <= self.horizon) {
            return Err(V::TimeOutOfRange(e.time));
        }
        if e.time < self.last_time {
            return Err(V::TimeRegression { previous: self.last_time, time: e.time });
        }
        self.last_time = e.time;
        let i = e.ocg_id;
        if i >= self.phases.len() {
            return Err(V::UnknownOcg(i));
        }
        if let Some(area) = e.kind.area() {
            if area >= self.n_areas {
                return Err(V::UnknownArea(area));
            }
        }
        if let Some(explorer) = self.exploring {
            if explorer != i {
                return Err(V::BrokenExcursion { ocg: explorer });
            }
        }
        if e.incumbent_id.is_some() && !matches!(e.kind, EventKind::CollisionAt(_)) {
            return Err(V::UnexpectedIncumbent);
        }
        let phase = self.phases[i];
        let out_of_sequence = V::OutOfSequence { ocg: i, event: e.kind.name() };
        if let (Phase::Exploring { since }, false) = (phase, matches!(e.kind, EventKind::Departure)) {
            if since != e.time {
                return Err(V::BrokenExcursion { ocg: i });
            }
        }
        match (e.kind, phase) {
            (EventKind::Departure, Phase::InTurf) => {
                self.phases[i] = Phase::Exploring { since: e.time };
                self.exploring = Some(i);
            }
            (EventKind::CollisionAt(area), Phase::Exploring { .. }) => {
                let actual = self.occupancy[area];
                if e.incumbent_id.is_none() || e.incumbent_id == Some(i) || actual != e.incumbent_id {
                    return Err(V::IncumbentMismatch { area, claimed: e.incumbent_id, actual });
                }
            }
            (EventKind::OccupyStart(area), Phase::Exploring { .. }) => {
                if let Some(occupant) = self.occupancy[area] {
                    return Err(V::AreaAlreadyOccupied { area, occupant });
                }
                self.occupancy[area] = Some(i);
                self.phases[i] = Phase::Occupying(area);
                self.exploring = None;
            }
            (EventKind::ReturnToTurf(None), Phase::Exploring { .. }) => {
                self.phases[i] = Phase::InTurf;
                self.exploring = None;
            }
            (EventKind::ReturnToTurf(area), Phase::Occupying(held)) => {
                if area != Some(held) || self.occupancy[held] != Some(i) {
                    return Err(V::ReturnFromWrongArea { ocg: i, area });
                }
                self.occupancy[held] = None;
                self.phases[i] = Phase::InTurf;
            }
            _ => return Err(out_of_sequence),
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(), ReplayViolation> {
        match self.exploring {
            Some(ocg) => Err(ReplayViolation { index: self.index, kind: ViolationKind::UnfinishedExcursion { ocg } }),
            None => Ok(()),
        }
    }
}

impl EventSink for ReplayChecker {
    fn record(&mut self, event: &EventRecord) {
        // Streaming use keeps going; call `replay_check` for the verdict.
        let _ = self.push(event);
    }
}

/// Re-validates a log against the dynamics: monotone time, one occupant per
/// area, collisions naming the actual incumbent, and every group following
/// departure, collisions, then occupation and return (or a direct return).
pub fn replay_check(log: &[EventRecord], cfg: &CityConfig) -> Result<(), ReplayViolation> {
    let mut checker = ReplayChecker::new(cfg);
    for event in log {
        checker.push(event)?;
    }
    checker.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn fixed(cfg: &CityConfig) -> StationaryProfile {
        StationaryProfile::initial(cfg)
    }

    #[test]
    fn lone_group_occupies_half_the_time() {
        // Two-state chain: occupied fraction eta / (eta + gamma) = 0.5.
        let cfg = CityConfig::new(&[10.0], 1, 1.0, 1.0, 1e5, 11);
        let profile = StationaryProfile::fixed(vec![0.5]);
        let log = run(&cfg, &profile);
        replay_check(&log, &cfg).unwrap();
        let mut occupied = 0.0;
        let mut start = None;
        for e in &log {
            match e.kind {
                EventKind::OccupyStart(_) => start = Some(e.time),
                EventKind::ReturnToTurf(Some(_)) => occupied += e.time - start.take().unwrap(),
                _ => {}
            }
        }
        if let Some(s) = start {
            occupied += cfg.horizon - s;
        }
        let fraction = occupied / cfg.horizon;
        assert!((fraction - 0.5).abs() < 0.01, "fraction {fraction}");
    }

    #[test]
    fn zero_departure_rate_gives_empty_log() {
        let mut cfg = CityConfig::new(&[30.0, 20.0, 10.0], 3, 0.0, 1.0, 1e3, 3);
        cfg.departure_rate = 0.0;
        assert!(run(&cfg, &fixed(&cfg)).is_empty());
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 3, 15.0, 1.0, 500.0, 99);
        let profile = fixed(&cfg);
        assert_eq!(run(&cfg, &profile), run(&cfg, &profile));
        let mut other = cfg.clone();
        other.seed = 100;
        assert_ne!(run(&cfg, &profile), run(&other, &profile));
    }

    #[test]
    fn fresh_runs_replay_cleanly() {
        for (seed, eta) in [(1, 0.5), (2, 5.0), (3, 15.0), (4, 25.0)] {
            let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 4, eta, 1.0, 300.0, seed);
            let log = run(&cfg, &fixed(&cfg));
            assert!(!log.is_empty());
            replay_check(&log, &cfg).unwrap();
        }
    }

    #[test]
    fn payoffs_match_the_log() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 3, 8.0, 1.0, 200.0, 5);
        let profile = fixed(&cfg);
        let mut log = Vec::new();
        let summary = Simulation::new(&cfg, &profile).run(&mut log);
        assert_eq!(summary.event_count as usize, log.len());
        let mut payoff = vec![0.0; 3];
        for e in &log {
            match e.kind {
                EventKind::CollisionAt(_) => payoff[e.ocg_id] -= 1.0,
                EventKind::ReturnToTurf(Some(m)) => payoff[e.ocg_id] += cfg.areas[m].revenue,
                _ => {}
            }
        }
        for (state, expected) in summary.final_states.iter().zip(payoff) {
            assert!((state.cumulative_payoff - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn turf_residence_is_exponential() {
        // Kolmogorov-Smirnov at the 1% level against exponential(eta).
        let eta = 3.0;
        let cfg = CityConfig::new(&[10.0], 1, eta, 1.0, 2e4, 21);
        let log = run(&cfg, &StationaryProfile::fixed(vec![0.25]));
        let mut waits = Vec::new();
        let mut back = Some(0.0);
        for e in &log {
            match e.kind {
                EventKind::Departure => waits.push(e.time - back.take().unwrap()),
                EventKind::ReturnToTurf(_) => back = Some(e.time),
                _ => {}
            }
        }
        assert!(waits.len() >= 10_000, "only {} samples", waits.len());
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = waits.len() as f64;
        let d = waits
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let cdf = 1.0 - libm::exp(-eta * x);
                (cdf - k as f64 / n).abs().max(((k + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / libm::sqrt(n), "KS statistic {d}");
    }

    fn ev(time: f64, kind: EventKind, ocg: usize) -> EventRecord {
        EventRecord::new(time, kind, ocg)
    }

    #[test]
    fn detects_double_occupation() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 2, 1.0, 1.0, 10.0, 0);
        let log = vec![
            ev(1.0, EventKind::Departure, 0),
            ev(1.0, EventKind::OccupyStart(0), 0),
            ev(1.5, EventKind::Departure, 1),
            ev(1.5, EventKind::OccupyStart(0), 1),
        ];
        let err = replay_check(&log, &cfg).unwrap_err();
        assert_eq!(err.index, 3);
        assert_eq!(err.kind, ViolationKind::AreaAlreadyOccupied { area: 0, occupant: 0 });
    }

    #[test]
    fn detects_absent_incumbent() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 2, 1.0, 1.0, 10.0, 0);
        let log = vec![
            ev(1.0, EventKind::Departure, 1),
            EventRecord::collision(1.0, 0, 1, 0),
            ev(1.0, EventKind::OccupyStart(1), 1),
        ];
        let err = replay_check(&log, &cfg).unwrap_err();
        assert_eq!(err.index, 1);
        assert!(matches!(err.kind, ViolationKind::IncumbentMismatch { area: 0, .. }));
    }

    #[test]
    fn detects_time_regression_and_bad_sequence() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 2, 1.0, 1.0, 10.0, 0);
        let log = vec![
            ev(2.0, EventKind::Departure, 0),
            ev(2.0, EventKind::OccupyStart(0), 0),
            ev(1.0, EventKind::Departure, 1),
        ];
        assert!(matches!(
            replay_check(&log, &cfg).unwrap_err().kind,
            ViolationKind::TimeRegression { .. }
        ));
        let log = vec![ev(1.0, EventKind::OccupyStart(0), 0)];
        assert!(matches!(
            replay_check(&log, &cfg).unwrap_err().kind,
            ViolationKind::OutOfSequence { .. }
        ));
        let log = vec![ev(1.0, EventKind::Departure, 0)];
        assert!(matches!(
            replay_check(&log, &cfg).unwrap_err().kind,
            ViolationKind::UnfinishedExcursion { ocg: 0 }
        ));
    }

    #[test]
    fn calibration_recovers_two_state_occupancy() {
        let cfg = CityConfig::new(&[10.0], 1, 1.0, 1.0, 2e4, 8);
        let profile = calibrate(&cfg, SolverOptions::default()).unwrap();
        assert!((profile.p[0] - 0.5).abs() < 0.01, "p = {:?}", profile.p);
    }

    #[test]
    fn calibration_with_idle_groups_saturates() {
        let cfg = CityConfig::new(&[30.0, 20.0, 10.0], 3, 0.0, 1.0, 100.0, 8);
        let profile = calibrate(&cfg, SolverOptions::default()).unwrap();
        assert!(profile.converged);
        assert!(profile.p.iter().all(|&p| p > 1.0 - 1e-3));
    }
}
