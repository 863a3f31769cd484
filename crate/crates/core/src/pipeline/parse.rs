//! Readers for the vehicle-movement and road-weather delimited files.
//!
//! Bad rows are dropped and counted rather than failing the whole file; only
//! a missing file or missing required column is an error.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::error::{Error, Result};
use crate::model::{CvPoint, RainCodeTable, RainState, RwisObservation};

pub const CV_COLUMNS: [&str; 7] = [
    "dataPointId",
    "journeyId",
    "capturedTimestamp",
    "latitude",
    "longitude",
    "ignitionStatus",
    "speed",
];

pub const RWIS_COLUMNS: [&str; 10] = [
    "Timestamp",
    "SurfaceTemp",
    "Grip",
    "RainState",
    "Visibility",
    "Precip1",
    "Precip3",
    "Precip6",
    "Precip12",
    "Precip24",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    pub dropped: usize,
    /// Rows kept with an unrecognized rain state.
    pub unknown_rain_states: usize,
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub report: ParseReport,
}

/// Parses a timestamp and normalizes it to UTC.
///
/// Offsets are honored; timestamps without one are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f%:z",
        "%Y-%m-%d %H:%M:%S%.f%#z",
        "%Y-%m-%dT%H:%M:%S%.f%#z",
    ] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    let s = s.trim_end_matches('Z');
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn column_map(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let mut missing = Vec::new();
    let mut idx = Vec::with_capacity(required.len());
    for want in required {
        match names.iter().position(|h| h == want) {
            Some(i) => idx.push(i),
            None => missing.push(want.to_string()),
        }
    }
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(Error::MissingColumns(missing))
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

pub fn parse_cv(path: &Path) -> Result<Parsed<CvPoint>> {
    parse_cv_reader(open(path)?)
}

pub fn parse_cv_reader<R: Read>(input: R) -> Result<Parsed<CvPoint>> {
    let mut rdr = reader(input);
    let cols = column_map(rdr.headers()?, &CV_COLUMNS)?;
    let mut items = Vec::new();
    let mut report = ParseReport::default();
    for row in rdr.records() {
        let row = row?;
        report.rows += 1;
        let field = |k: usize| row.get(cols[k]).unwrap_or("");
        let point = (|| {
            let p = CvPoint {
                data_point_id: field(0).to_string(),
                journey_id: field(1).to_string(),
                captured_at: parse_timestamp(field(2))?,
                latitude: field(3).parse().ok()?,
                longitude: field(4).parse().ok()?,
                ignition_status: field(5).parse().ok()?,
                speed_kmh: field(6).parse().ok()?,
            };
            if p.journey_id.is_empty() {
                return None;
            }
            p.validate().ok().map(|_| p)
        })();
        match point {
            Some(p) => items.push(p),
            None => report.dropped += 1,
        }
    }
    Ok(Parsed { items, report })
}

pub fn parse_rwis(path: &Path, table: &RainCodeTable) -> Result<Parsed<RwisObservation>> {
    parse_rwis_reader(open(path)?, table)
}

/// Columns beyond the required set are read as optional numeric sensors;
/// blank or non-numeric cells leave that sensor absent for the row.
/// A repeated timestamp keeps the first row and counts the rest as dropped.
pub fn parse_rwis_reader<R: Read>(
    input: R,
    table: &RainCodeTable,
) -> Result<Parsed<RwisObservation>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let cols = column_map(&headers, &RWIS_COLUMNS)?;
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !cols.contains(i))
        .map(|(i, h)| (i, h.trim().to_string()))
        .filter(|(_, h)| !h.is_empty())
        .collect();

    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    let mut report = ParseReport::default();
    for row in rdr.records() {
        let row = row?;
        report.rows += 1;
        let field = |k: usize| row.get(cols[k]).unwrap_or("");
        let obs = (|| {
            let num = |k: usize| field(k).parse::<f64>().ok().filter(|v| v.is_finite());
            let mut precip = [0.0; 5];
            for (j, p) in precip.iter_mut().enumerate() {
                *p = num(5 + j)?;
            }
            let sensors: BTreeMap<String, f64> = extra
                .iter()
                .filter_map(|(i, name)| {
                    let v = row.get(*i)?.parse::<f64>().ok().filter(|v| v.is_finite())?;
                    Some((name.clone(), v))
                })
                .collect();
            let o = RwisObservation {
                observed_at: parse_timestamp(field(0))?,
                surface_temp_c: num(1)?,
                grip: num(2)?,
                rain_state: table.parse(field(3)),
                visibility_m: num(4)?,
                precip_mm: precip,
                sensors,
            };
            o.validate().ok().map(|_| o)
        })();
        match obs {
            Some(o) if seen.insert(o.observed_at) => {
                if o.rain_state == RainState::Unknown {
                    report.unknown_rain_states += 1;
                }
                items.push(o);
            }
            _ => report.dropped += 1,
        }
    }
    items.sort_by_key(|o| o.observed_at);
    Ok(Parsed { items, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const CV_HEADER: &str =
        "dataPointId,journeyId,capturedTimestamp,latitude,longitude,ignitionStatus,speed\n";
    const RWIS_HEADER: &str =
        "Timestamp,SurfaceTemp,Grip,RainState,Visibility,Precip1,Precip3,Precip6,Precip12,Precip24,WindSpeed\n";

    #[test]
    fn cv_one_row() {
        let text = format!(
            "{CV_HEADER}p1,j1,2022-10-19T10:07:00-04:00,42.900001,-78.800002,MID_JOURNEY,96.56\n"
        );
        let parsed = parse_cv_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed.items.len(), 1);
        let p = &parsed.items[0];
        assert_eq!(
            p.captured_at,
            Utc.with_ymd_and_hms(2022, 10, 19, 14, 7, 0).unwrap()
        );
        assert_eq!(p.latitude, 42.900001);
        assert_eq!(
            parsed.report,
            ParseReport {
                rows: 1,
                dropped: 0,
                unknown_rain_states: 0
            }
        );
    }

    #[test]
    fn cv_negative_speed_dropped() {
        let text = format!(
            "{CV_HEADER}p1,j1,2022-10-19T14:07:00Z,42.9,-78.8,KEY_ON,-5\n\
             p2,j1,2022-10-19T14:07:05Z,42.9,-78.8,KEY_ON,80\n\
             p3,j1,not-a-time,42.9,-78.8,KEY_ON,80\n"
        );
        let parsed = parse_cv_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.report.dropped, 2);
    }

    #[test]
    fn cv_empty_file_with_header() {
        let parsed = parse_cv_reader(CV_HEADER.as_bytes()).unwrap();
        assert!(parsed.items.is_empty());
        assert_eq!(parsed.report.rows, 0);
    }

    #[test]
    fn cv_missing_columns_listed() {
        let err = parse_cv_reader("dataPointId,journeyId,latitude\n".as_bytes()).unwrap_err();
        match err {
            Error::MissingColumns(cols) => {
                assert_eq!(
                    cols,
                    vec!["capturedTimestamp", "longitude", "ignitionStatus", "speed"]
                )
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_cv(Path::new("/nonexistent/cv.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn rwis_rows() {
        let t = RainCodeTable::default();
        let text = format!(
            "{RWIS_HEADER}2022-10-19 14:00:00,8.5,0.82,none,1500,0,0,0,0,0.2,3.1\n\
             2022-10-19 14:10:00,8.5,1.2,none,1500,0,0,0,0,0,\n\
             2022-10-19 14:20:00,1.0,0.4,moderate snow,300,1,2,2,3,4,\n\
             2022-10-19 14:30:00,1.0,0.4,sleet,300,1,2,2,3,4,\n\
             2022-10-19 14:35:00,1.0,0.4,none,300,1,2,2,3,4,\n\
             2022-10-19 14:20:00,1.0,0.4,none,300,1,2,2,3,4,\n"
        );
        let parsed = parse_rwis_reader(text.as_bytes(), &t).unwrap();
        assert_eq!(parsed.report.rows, 6);
        // grip 1.2, off-grid 14:35, duplicate 14:20
        assert_eq!(parsed.report.dropped, 3);
        assert_eq!(parsed.report.unknown_rain_states, 1);
        let first = &parsed.items[0];
        assert_eq!((first.grip, first.visibility_m), (0.82, 1500.0));
        assert_eq!(first.sensors.get("WindSpeed"), Some(&3.1));
        assert_eq!(parsed.items[1].rain_state, RainState::Code(5));
        assert!(parsed.items[1].sensors.is_empty());
        assert_eq!(parsed.items[2].rain_state, RainState::Unknown);
    }
}
