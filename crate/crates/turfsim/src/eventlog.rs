//! Event log CSV: `time,kind,ocg_id,area_id,incumbent_id`.
//!
//! `kind` is one of `departure`, `collision`, `occupy`, `return`. A `return`
//! without an area is a failed excursion. Times are written losslessly with
//! at least nine significant digits.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use turfsim_core::{EventKind, EventRecord, EventSink};

pub const HEADER: [&str; 5] = ["time", "kind", "ocg_id", "area_id", "incumbent_id"];

/// Events kept in memory before a [`SpillLog`] starts streaming to disk.
pub const DEFAULT_SPILL_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("event log line {line}: {message}")]
    Malformed { line: u64, message: String },
}

impl From<csv::Error> for LogError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => LogError::Io(io),
            other => LogError::Malformed { line, message: format!("{other:?}") },
        }
    }
}

/// Shortest round-trip decimal, padded with zeros to nine significant digits.
pub fn format_time(t: f64) -> String {
    let mut s = format!("{t}");
    let digits = s
        .trim_start_matches('-')
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if digits < 9 {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', 9 - digits));
    }
    s
}

fn kind_fields(kind: EventKind) -> (&'static str, Option<usize>) {
    match kind {
        EventKind::Departure => ("departure", None),
        EventKind::CollisionAt(a) => ("collision", Some(a)),
        EventKind::OccupyStart(a) => ("occupy", Some(a)),
        EventKind::ReturnToTurf(a) => ("return", a),
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Streams events as CSV rows.
pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
    written: u64,
}

impl<W: Write> LogWriter<W> {
    pub fn new(w: W) -> Result<Self, LogError> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(HEADER)?;
        Ok(LogWriter { inner, written: 0 })
    }

    pub fn write(&mut self, e: &EventRecord) -> Result<(), LogError> {
        let (kind, area) = kind_fields(e.kind);
        self.inner.write_record([
            format_time(e.time),
            kind.to_owned(),
            e.ocg_id.to_string(),
            opt(area),
            opt(e.incumbent_id),
        ])?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W, LogError> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| LogError::Io(e.into_error()))
    }
}

pub fn write_log<W: Write>(w: W, events: &[EventRecord]) -> Result<W, LogError> {
    let mut writer = LogWriter::new(w)?;
    for e in events {
        writer.write(e)?;
    }
    writer.finish()
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T, LogError> {
    s.trim().parse().map_err(|_| LogError::Malformed {
        line,
        message: format!("field `{name}`: cannot parse {s:?}"),
    })
}

fn parse_opt(s: &str, name: &str, line: u64) -> Result<Option<usize>, LogError> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(s, name, line).map(Some)
    }
}

pub fn read_log<R: Read>(r: R) -> Result<Vec<EventRecord>, LogError> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(LogError::Malformed { line: 1, message: format!("expected header {}", HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let area = parse_opt(&row[3], "area_id", line)?;
        let need_area = || {
            area.ok_or_else(|| LogError::Malformed { line, message: "field `area_id`: missing".into() })
        };
        let kind = match row[1].trim() {
            "departure" => EventKind::Departure,
            "collision" => EventKind::CollisionAt(need_area()?),
            "occupy" => EventKind::OccupyStart(need_area()?),
            "return" => EventKind::ReturnToTurf(area),
            other => {
                return Err(LogError::Malformed { line, message: format!("field `kind`: unknown {other:?}") })
            }
        };
        out.push(EventRecord {
            time: parse_field(&row[0], "time", line)?,
            kind,
            ocg_id: parse_field(&row[2], "ocg_id", line)?,
            incumbent_id: parse_opt(&row[4], "incumbent_id", line)?,
        });
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    read_log(File::open(path)?)
}

/// Where a [`SpillLog`] ended up keeping its events.
#[derive(Debug)]
pub enum StoredLog {
    Memory(Vec<EventRecord>),
    /// Streamed to the spill file, `count` rows.
    Disk { path: PathBuf, count: u64 },
}

/// Buffers events in memory up to `cap`, then moves them to `path` and
/// streams every later event there. IO errors are held until
/// [`finish`](Self::finish) because [`EventSink`] cannot fail.
pub struct SpillLog {
    cap: usize,
    path: PathBuf,
    buffer: Vec<EventRecord>,
    disk: Option<LogWriter<BufWriter<File>>>,
    error: Option<LogError>,
}

impl SpillLog {
    pub fn new(cap: usize, path: impl Into<PathBuf>) -> Self {
        SpillLog { cap, path: path.into(), buffer: Vec::new(), disk: None, error: None }
    }

    fn spill(&mut self) -> Result<(), LogError> {
        let mut w = LogWriter::new(BufWriter::new(File::create(&self.path)?))?;
        for e in self.buffer.drain(..) {
            w.write(&e)?;
        }
        self.buffer.shrink_to_fit();
        self.disk = Some(w);
        Ok(())
    }

    pub fn is_spilled(&self) -> bool {
        self.disk.is_some()
    }

    pub fn finish(self) -> Result<StoredLog, LogError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        match self.disk {
            None => Ok(StoredLog::Memory(self.buffer)),
            Some(w) => {
                let count = w.written();
                w.finish()?.flush()?;
                Ok(StoredLog::Disk { path: self.path, count })
            }
        }
    }
}

impl EventSink for SpillLog {
    fn record(&mut self, event: &EventRecord) {
        if self.error.is_some() {
            return;
        }
        let result = match &mut self.disk {
            Some(w) => w.write(event),
            None => {
                self.buffer.push(*event);
                if self.buffer.len() > self.cap {
                    self.spill()
                } else {
                    Ok(())
                }
            }
        };
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}
