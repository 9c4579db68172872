//! Metrics and stationary-profile files.

use std::io::{Read, Write};

use turfsim_core::{MetricsReport, StationaryProfile};

pub const METRICS_HEADER: [&str; 6] = ["area_id", "revenue", "O", "V", "R", "streaks"];

/// One row per area: `area_id,revenue,O,V,R,streaks`.
pub fn write_metrics_csv<W: Write>(w: W, report: &MetricsReport) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_HEADER)?;
    for a in &report.areas {
        out.write_record([
            a.area_id.to_string(),
            a.revenue.to_string(),
            a.occupancy_fraction.to_string(),
            a.violence_rate.to_string(),
            a.mean_streak.to_string(),
            a.streak_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics_json<W: Write>(w: W, report: &MetricsReport) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, report)
}

pub fn write_profile_json<W: Write>(w: W, profile: &StationaryProfile) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, profile)
}

pub fn read_profile_json<R: Read>(r: R) -> serde_json::Result<StationaryProfile> {
    serde_json::from_reader(r)
}
