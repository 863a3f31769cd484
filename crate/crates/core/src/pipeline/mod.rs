//! From raw fixes to per-window training records.
//!
//! Matched fixes are averaged per (10-minute window, journey) into vehicle
//! samples, windows are joined to the station record of the same bin, and the
//! joined weather is encoded into a feature vector.

mod features;
mod io;
mod parse;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};

pub use features::{
    build_features, Encoding, FeatureDescriptor, FeatureEncoder, FeatureSchema, FeatureSource,
    FeatureVector,
};
pub use io::{read_samples, read_windows, write_samples, write_windows, WindowTable};
pub use parse::{
    parse_cv, parse_cv_reader, parse_rwis, parse_rwis_reader, parse_timestamp, ParseReport, Parsed,
    CV_COLUMNS, RWIS_COLUMNS,
};

use crate::error::{Error, Result};
use crate::geo::{is_excluded_for, MatchIndex};
use crate::model::{CvPoint, RoadSegment, RwisObservation, WindowSample};
use crate::stats::quartiles;
use crate::units::kmh_to_mph;

pub const WINDOW_SECONDS: i64 = 600;

/// 10-minute bins since the Unix epoch.
pub fn window_index(t: DateTime<Utc>) -> i64 {
    t.timestamp().div_euclid(WINDOW_SECONDS)
}

pub fn window_start(index: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(index * WINDOW_SECONDS, 0).expect("window index within chrono range")
}

/// Averages matched fixes per (window, journey), in mph.
///
/// Output is ordered by window then journey id; groups with fewer than
/// `min_points` fixes are dropped.
pub fn aggregate_vehicle_windows(
    points: &[CvPoint],
    min_points: usize,
) -> Result<Vec<WindowSample>> {
    let mut groups: BTreeMap<(i64, &str), (f64, usize)> = BTreeMap::new();
    for p in points {
        let mph = kmh_to_mph(p.speed_kmh)?;
        let e = groups
            .entry((window_index(p.captured_at), p.journey_id.as_str()))
            .or_default();
        e.0 += mph;
        e.1 += 1;
    }
    Ok(groups
        .into_iter()
        .filter(|(_, (_, n))| *n >= min_points.max(1))
        .map(|((w, j), (sum, n))| WindowSample {
            window_index: w,
            journey_id: j.to_string(),
            mean_speed_mph: sum / n as f64,
            n_points: n,
        })
        .collect())
}

/// Quartiles of the vehicle mean speeds.
pub fn observed_quantiles(samples: &[WindowSample]) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Err(Error::validation("observed quantiles of an empty window"));
    }
    let speeds: Vec<f64> = samples.iter().map(|s| s.mean_speed_mph).collect();
    quartiles(&speeds)
}

/// One window joined to its weather: features, vehicle targets, observed quartiles.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub window_index: i64,
    pub features: FeatureVector,
    pub samples: Vec<WindowSample>,
    pub observed_q25: f64,
    pub observed_q50: f64,
    pub observed_q75: f64,
    pub vehicle_count: usize,
}

impl WindowRecord {
    pub fn window_start(&self) -> DateTime<Utc> {
        window_start(self.window_index)
    }

    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.mean_speed_mph)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Aligned {
    pub records: Vec<WindowRecord>,
    /// Windows with vehicles but no station record in the same bin.
    pub dropped_windows: usize,
    pub dropped_samples: usize,
}

/// Joins vehicle samples to the station observation of the same window.
pub fn align_weather(
    samples: &[WindowSample],
    rwis: &[RwisObservation],
    encoder: &FeatureEncoder,
) -> Result<Aligned> {
    let by_window: HashMap<i64, &RwisObservation> = rwis
        .iter()
        .map(|o| (window_index(o.observed_at), o))
        .collect();
    let mut grouped: BTreeMap<i64, Vec<WindowSample>> = BTreeMap::new();
    for s in samples {
        grouped.entry(s.window_index).or_default().push(s.clone());
    }
    let mut out = Aligned::default();
    for (w, group) in grouped {
        let Some(obs) = by_window.get(&w) else {
            out.dropped_windows += 1;
            out.dropped_samples += group.len();
            continue;
        };
        let (q25, q50, q75) = observed_quantiles(&group)?;
        out.records.push(WindowRecord {
            window_index: w,
            features: encoder.encode(obs, w, group.len())?,
            vehicle_count: group.len(),
            samples: group,
            observed_q25: q25,
            observed_q50: q50,
            observed_q75: q75,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareOptions {
    pub min_points: usize,
    pub target_maxspeed_mph: f64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            min_points: 1,
            target_maxspeed_mph: crate::geo::TARGET_MAXSPEED_MPH,
        }
    }
}

/// Counters for every record removed along the way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrepareSummary {
    pub cv_rows: usize,
    pub cv_dropped_invalid: usize,
    pub rwis_rows: usize,
    pub rwis_dropped_invalid: usize,
    pub rwis_unknown_rain_states: usize,
    pub segments_total: usize,
    pub segments_excluded: usize,
    pub points_unmatched: usize,
    pub points_matched: usize,
    pub vehicle_samples: usize,
    pub windows_dropped_no_weather: usize,
    pub samples_dropped_no_weather: usize,
    pub windows_emitted: usize,
    pub samples_emitted: usize,
}

impl PrepareSummary {
    pub fn rows(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("cv_rows", self.cv_rows),
            ("cv_dropped_invalid", self.cv_dropped_invalid),
            ("rwis_rows", self.rwis_rows),
            ("rwis_dropped_invalid", self.rwis_dropped_invalid),
            ("rwis_unknown_rain_states", self.rwis_unknown_rain_states),
            ("segments_total", self.segments_total),
            ("segments_excluded", self.segments_excluded),
            ("points_unmatched", self.points_unmatched),
            ("points_matched", self.points_matched),
            ("vehicle_samples", self.vehicle_samples),
            (
                "windows_dropped_no_weather",
                self.windows_dropped_no_weather,
            ),
            (
                "samples_dropped_no_weather",
                self.samples_dropped_no_weather,
            ),
            ("windows_emitted", self.windows_emitted),
            ("samples_emitted", self.samples_emitted),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub records: Vec<WindowRecord>,
    pub summary: PrepareSummary,
}

/// Match, window, align and encode already-parsed inputs.
pub fn prepare(
    cv: &Parsed<CvPoint>,
    rwis: &Parsed<RwisObservation>,
    segments: &[RoadSegment],
    encoder: &FeatureEncoder,
    opts: PrepareOptions,
) -> Result<Prepared> {
    let kept: Vec<RoadSegment> = segments
        .iter()
        .filter(|s| !is_excluded_for(s, opts.target_maxspeed_mph))
        .cloned()
        .collect();
    let mut summary = PrepareSummary {
        cv_rows: cv.report.rows,
        cv_dropped_invalid: cv.report.dropped,
        rwis_rows: rwis.report.rows,
        rwis_dropped_invalid: rwis.report.dropped,
        rwis_unknown_rain_states: rwis.report.unknown_rain_states,
        segments_total: segments.len(),
        segments_excluded: segments.len() - kept.len(),
        ..Default::default()
    };
    let matched: Vec<CvPoint> = if kept.is_empty() {
        Vec::new()
    } else {
        let index = MatchIndex::new(&kept)?;
        cv.items
            .iter()
            .filter(|p| index.match_point(p).is_some())
            .cloned()
            .collect()
    };
    summary.points_matched = matched.len();
    summary.points_unmatched = cv.items.len() - matched.len();

    let samples = aggregate_vehicle_windows(&matched, opts.min_points)?;
    summary.vehicle_samples = samples.len();
    let aligned = align_weather(&samples, &rwis.items, encoder)?;
    summary.windows_dropped_no_weather = aligned.dropped_windows;
    summary.samples_dropped_no_weather = aligned.dropped_samples;
    summary.windows_emitted = aligned.records.len();
    summary.samples_emitted = aligned.records.iter().map(|r| r.vehicle_count).sum();
    Ok(Prepared {
        records: aligned.records,
        summary,
    })
}
