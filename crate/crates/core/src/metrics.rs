//! Observables computed from event logs: concentration, violence and streaks
//! per area, plus the streak and group-count measures for day-stamped
//! activity records.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::EventSink;
use crate::model::{AreaId, CityConfig, EventKind, EventRecord, OcgId, StreakMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaMetrics {
    pub area_id: AreaId,
    pub revenue: f64,
    /// Fraction of the window the area was occupied.
    pub occupancy_fraction: f64,
    /// Collisions per unit time.
    pub violence_rate: f64,
    /// Mean length of maximal runs of spells by the same group.
    pub mean_streak: f64,
    pub streak_count: u64,
    pub occupied_time: f64,
    pub collisions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub areas: Vec<AreaMetrics>,
    pub total_collisions: u64,
    /// Revenue of spells completed in the window minus collision costs paid
    /// in the window, per group.
    pub payoffs: Vec<f64>,
    pub window: (f64, f64),
    pub streak_mode: StreakMode,
}

impl MetricsReport {
    pub fn occupancy(&self) -> Vec<f64> {
        self.areas.iter().map(|a| a.occupancy_fraction).collect()
    }

    pub fn violence(&self) -> Vec<f64> {
        self.areas.iter().map(|a| a.violence_rate).collect()
    }

    pub fn streaks(&self) -> Vec<f64> {
        self.areas.iter().map(|a| a.mean_streak).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    EmptyWindow,
    UnknownArea { index: usize, area: AreaId },
    UnknownOcg { index: usize, ocg: OcgId },
    /// A return without a matching occupation.
    UnmatchedReturn { index: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyWindow => write!(f, "measurement window is empty"),
            MetricsError::UnknownArea { index, area } => write!(f, "event {index}: unknown area {area}"),
            MetricsError::UnknownOcg { index, ocg } => write!(f, "event {index}: unknown group {ocg}"),
            MetricsError::UnmatchedReturn { index } => {
                write!(f, "event {index}: return without a matching occupation")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

#[derive(Clone, Copy, Debug)]
struct Spell {
    ocg: OcgId,
    start: f64,
    /// Started inside the window, so it takes part in streaks.
    counted: bool,
}

#[derive(Clone, Copy, Debug)]
struct Streak {
    owner: OcgId,
    spells: u64,
    first_start: f64,
    last_end: f64,
    broken: bool,
}

#[derive(Clone, Debug, Default)]
struct AreaTrack {
    spell: Option<Spell>,
    streak: Option<Streak>,
    occupied_time: f64,
    collisions: u64,
    streak_count: u64,
    streak_total: f64,
}

/// Streaming computation of a [`MetricsReport`]; feed it events as an
/// [`EventSink`] and call [`finish`](Self::finish) after the run.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    start: f64,
    end: f64,
    revenues: Vec<f64>,
    cost: f64,
    mode: StreakMode,
    collision_breaks_streak: bool,
    areas: Vec<AreaTrack>,
    payoffs: Vec<f64>,
    index: usize,
    error: Option<MetricsError>,
}

impl MetricsAccumulator {
    pub fn new(cfg: &CityConfig) -> Self {
        MetricsAccumulator {
            start: cfg.warmup_end(),
            end: cfg.horizon,
            revenues: cfg.revenues().collect(),
            cost: cfg.collision_cost,
            mode: cfg.streak_mode,
            collision_breaks_streak: cfg.collision_breaks_streak,
            areas: alloc::vec![AreaTrack::default(); cfg.n_areas()],
            payoffs: alloc::vec![0.0; cfg.n_ocgs],
            index: 0,
            error: None,
        }
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    fn overlap(&self, from: f64, to: f64) -> f64 {
        (to.min(self.end) - from.max(self.start)).max(0.0)
    }

    fn close_streak(&mut self, area: AreaId) {
        let mode = self.mode;
        let track = &mut self.areas[area];
        if let Some(streak) = track.streak.take() {
            track.streak_count += 1;
            track.streak_total += match mode {
                StreakMode::SpellCount => streak.spells as f64,
                StreakMode::Duration => streak.last_end - streak.first_start,
            };
        }
    }

    fn apply(&mut self, index: usize, e: &EventRecord) -> Result<(), MetricsError> {
        if e.ocg_id >= self.payoffs.len() {
            return Err(MetricsError::UnknownOcg { index, ocg: e.ocg_id });
        }
        if let Some(area) = e.kind.area() {
            if area >= self.areas.len() {
                return Err(MetricsError::UnknownArea { index, area });
            }
        }
        let t = e.time;
        match e.kind {
            EventKind::Departure | EventKind::ReturnToTurf(None) => {}
            EventKind::CollisionAt(area) => {
                if self.in_window(t) {
                    self.areas[area].collisions += 1;
                    self.payoffs[e.ocg_id] -= self.cost;
                    if self.collision_breaks_streak {
                        if let Some(streak) = self.areas[area].streak.as_mut() {
                            streak.broken = true;
                        }
                    }
                }
            }
            EventKind::OccupyStart(area) => {
                let counted = self.in_window(t);
                self.areas[area].spell = Some(Spell { ocg: e.ocg_id, start: t, counted });
                if counted {
                    let extends = self.areas[area]
                        .streak
                        .is_some_and(|s| s.owner == e.ocg_id && !s.broken);
                    if extends {
                        if let Some(streak) = self.areas[area].streak.as_mut() {
                            streak.spells += 1;
                            streak.last_end = t;
                        }
                    } else {
                        self.close_streak(area);
                        self.areas[area].streak = Some(Streak {
                            owner: e.ocg_id,
                            spells: 1,
                            first_start: t,
                            last_end: t,
                            broken: false,
                        });
                    }
                }
            }
            EventKind::ReturnToTurf(Some(area)) => {
                let spell = match self.areas[area].spell.take() {
                    Some(s) if s.ocg == e.ocg_id => s,
                    _ => return Err(MetricsError::UnmatchedReturn { index }),
                };
                let overlap = self.overlap(spell.start, t);
                self.areas[area].occupied_time += overlap;
                if spell.counted {
                    if let Some(streak) = self.areas[area].streak.as_mut() {
                        streak.last_end = t;
                    }
                }
                if self.in_window(t) {
                    self.payoffs[e.ocg_id] += self.revenues[area];
                }
            }
        }
        Ok(())
    }

    pub fn push(&mut self, e: &EventRecord) {
        let index = self.index;
        self.index += 1;
        if self.error.is_none() {
            if let Err(err) = self.apply(index, e) {
                self.error = Some(err);
            }
        }
    }

    /// Closes spells still open at the horizon and produces the report.
    pub fn finish(mut self) -> Result<MetricsReport, MetricsError> {
        if let Some(err) = self.error.take() {
            return Err(err);
        }
        let length = self.end - self.start;
        if length.is_nan() || length <= 0.0 {
            return Err(MetricsError::EmptyWindow);
        }
        for area in 0..self.areas.len() {
            if let Some(spell) = self.areas[area].spell.take() {
                let overlap = self.overlap(spell.start, self.end);
                self.areas[area].occupied_time += overlap;
                if spell.counted {
                    if let Some(streak) = self.areas[area].streak.as_mut() {
                        streak.last_end = self.end;
                    }
                }
            }
            self.close_streak(area);
        }
        let areas: Vec<AreaMetrics> = self
            .areas
            .iter()
            .enumerate()
            .map(|(area_id, track)| AreaMetrics {
                area_id,
                revenue: self.revenues[area_id],
                occupancy_fraction: (track.occupied_time / length).clamp(0.0, 1.0),
                violence_rate: track.collisions as f64 / length,
                mean_streak: if track.streak_count > 0 {
                    track.streak_total / track.streak_count as f64
                } else {
                    0.0
                },
                streak_count: track.streak_count,
                occupied_time: track.occupied_time,
                collisions: track.collisions,
            })
            .collect();
        Ok(MetricsReport {
            total_collisions: areas.iter().map(|a| a.collisions).sum(),
            areas,
            payoffs: self.payoffs,
            window: (self.start, self.end),
            streak_mode: self.mode,
        })
    }
}

impl EventSink for MetricsAccumulator {
    fn record(&mut self, event: &EventRecord) {
        self.push(event);
    }
}

/// Concentration, violence and streak statistics over the post-warm-up
/// window `[warmup_fraction * horizon, horizon]`.
///
/// Only spells starting inside the window take part in streaks. Spells still
/// open at the horizon end there. When `collision_breaks_streak` is set, a
/// collision ends the current streak once the incumbent's spell is over.
pub fn compute_metrics(log: &[EventRecord], cfg: &CityConfig) -> Result<MetricsReport, MetricsError> {
    let mut acc = MetricsAccumulator::new(cfg);
    for e in log {
        acc.push(e);
    }
    acc.finish()
}

/// One day-stamped activity record attributed to a group in an area.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayEvent {
    pub day: u32,
    pub area_id: AreaId,
    pub ocg_id: OcgId,
}

/// Streak lengths in days for one area.
///
/// Days without activity do not interrupt a streak; only activity by a
/// different group does. A streak's length runs from its first day to the
/// first day of the activity that breaks it. A day with several groups ends
/// the running streak and starts one owned by the group listed last that day.
/// The still-running final streak counts up to and including the last
/// observed day, and is only returned with `include_censored`.
pub fn empirical_streaks(events: &[DayEvent], area_id: AreaId, include_censored: bool) -> Vec<u32> {
    let mut area_events: Vec<&DayEvent> = events.iter().filter(|e| e.area_id == area_id).collect();
    area_events.sort_by_key(|e| e.day);

    let mut streaks = Vec::new();
    let mut current: Option<(OcgId, u32)> = None;
    for day_events in area_events.chunk_by(|a, b| a.day == b.day) {
        let day = day_events[0].day;
        let last_listed = day_events[day_events.len() - 1].ocg_id;
        match current {
            None => current = Some((last_listed, day)),
            Some((owner, start)) => {
                if day_events.iter().any(|e| e.ocg_id != owner) {
                    streaks.push(day - start);
                    current = Some((last_listed, day));
                }
            }
        }
    }
    if include_censored {
        if let (Some((_, start)), Some(last)) = (current, area_events.last()) {
            streaks.push(last.day + 1 - start);
        }
    }
    streaks
}

/// Number of distinct groups with at least one event in the area.
pub fn ocg_count(events: &[DayEvent], area_id: AreaId) -> usize {
    events
        .iter()
        .filter(|e| e.area_id == area_id)
        .map(|e| e.ocg_id)
        .collect::<BTreeSet<_>>()
        .len()
}
