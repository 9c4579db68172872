//! Day-stamped activity logs (`day,area_id,ocg_id`) and their per-area
//! summary table.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;
use turfsim_core::{empirical_streaks, ocg_count, AreaId, DayEvent};

pub const HEADER: [&str; 3] = ["day", "area_id", "ocg_id"];

#[derive(Debug, Error)]
pub enum DayLogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

fn malformed(line: u64, message: impl Into<String>) -> DayLogError {
    DayLogError::Malformed { line, message: message.into() }
}

impl From<csv::Error> for DayLogError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DayLogError::Io(io),
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                malformed(line, format!("expected {expected_len} fields, found {len}"))
            }
            other => malformed(line, format!("{other:?}")),
        }
    }
}

/// Reads a day log. Columns may come in any order but each of the three must
/// appear exactly once.
pub fn read_day_events<R: Read>(r: R) -> Result<Vec<DayEvent>, DayLogError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = reader.headers()?.clone();
    let mut columns = [usize::MAX; 3];
    for (index, name) in header.iter().enumerate() {
        let Some(slot) = HEADER.iter().position(|&h| h == name) else {
            return Err(malformed(1, format!("unknown column {name:?}")));
        };
        if columns[slot] != usize::MAX {
            return Err(malformed(1, format!("duplicate column {name:?}")));
        }
        columns[slot] = index;
    }
    if let Some(slot) = columns.iter().position(|&c| c == usize::MAX) {
        return Err(malformed(1, format!("missing column {:?}", HEADER[slot])));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |slot: usize| -> Result<u64, DayLogError> {
            let raw = &row[columns[slot]];
            raw.parse()
                .map_err(|_| malformed(line, format!("field `{}`: {raw:?} is not a non-negative integer", HEADER[slot])))
        };
        let day = field(0)?;
        out.push(DayEvent {
            day: u32::try_from(day).map_err(|_| malformed(line, format!("field `day`: {day} is too large")))?,
            area_id: field(1)? as AreaId,
            ocg_id: field(2)? as usize,
        });
    }
    Ok(out)
}

/// One row of the analysis table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaSummary {
    pub area_id: AreaId,
    pub ocg_count: usize,
    pub events: usize,
    pub streaks: usize,
    pub mean_streak: Option<f64>,
    pub max_streak: Option<u32>,
}

pub fn summarize(events: &[DayEvent], include_censored: bool) -> Vec<AreaSummary> {
    let areas: BTreeSet<AreaId> = events.iter().map(|e| e.area_id).collect();
    areas
        .into_iter()
        .map(|area_id| {
            let streaks = empirical_streaks(events, area_id, include_censored);
            AreaSummary {
                area_id,
                ocg_count: ocg_count(events, area_id),
                events: events.iter().filter(|e| e.area_id == area_id).count(),
                streaks: streaks.len(),
                mean_streak: (!streaks.is_empty())
                    .then(|| streaks.iter().map(|&s| f64::from(s)).sum::<f64>() / streaks.len() as f64),
                max_streak: streaks.iter().copied().max(),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[AreaSummary]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["area_id", "ocg_count", "events", "streaks", "mean_streak", "max_streak"])?;
    for r in rows {
        out.write_record([
            r.area_id.to_string(),
            r.ocg_count.to_string(),
            r.events.to_string(),
            r.streaks.to_string(),
            r.mean_streak.map(|m| m.to_string()).unwrap_or_default(),
            r.max_streak.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
