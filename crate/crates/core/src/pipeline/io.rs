//! Delimited window and vehicle-sample files.
//!
//! Floats are written in shortest round-trip form so a re-read record is
//! bit-identical to the one written.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::WindowSample;

use super::{window_start, FeatureVector, WindowRecord};

const LEAD: [&str; 2] = ["window_index", "window_start"];
const TAIL: [&str; 4] = [
    "observed_q25",
    "observed_q50",
    "observed_q75",
    "vehicle_count",
];
const SAMPLE_COLUMNS: [&str; 4] = ["window_index", "journey_id", "mean_speed_mph", "n_points"];

pub fn write_windows<W: Write>(
    out: W,
    feature_names: &[String],
    records: &[WindowRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = LEAD
        .iter()
        .copied()
        .chain(feature_names.iter().map(String::as_str))
        .chain(TAIL.iter().copied())
        .collect();
    w.write_record(&header)?;
    for r in records {
        if r.features.len() != feature_names.len() {
            return Err(Error::validation(format!(
                "window {} has {} features, header has {}",
                r.window_index,
                r.features.len(),
                feature_names.len()
            )));
        }
        let mut row = vec![
            r.window_index.to_string(),
            r.window_start().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        ];
        row.extend(r.features.0.iter().map(f64::to_string));
        row.extend(
            [r.observed_q25, r.observed_q50, r.observed_q75]
                .iter()
                .map(f64::to_string),
        );
        row.push(r.vehicle_count.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<windows>", e))?;
    Ok(())
}

pub fn write_samples<W: Write>(out: W, records: &[WindowRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLE_COLUMNS)?;
    for s in records.iter().flat_map(|r| r.samples.iter()) {
        w.write_record([
            s.window_index.to_string(),
            s.journey_id.clone(),
            s.mean_speed_mph.to_string(),
            s.n_points.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<samples>", e))?;
    Ok(())
}

pub fn read_samples<R: Read>(input: R) -> Result<Vec<WindowSample>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != SAMPLE_COLUMNS {
        return Err(Error::format(
            "samples",
            format!("unexpected header {headers:?}"),
        ));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::format("samples", format!("row {}: bad {what}", line + 1));
        out.push(WindowSample {
            window_index: row[0].parse().map_err(|_| bad("window_index"))?,
            journey_id: row[1].to_string(),
            mean_speed_mph: row[2].parse().map_err(|_| bad("mean_speed_mph"))?,
            n_points: row[3].parse().map_err(|_| bad("n_points"))?,
        });
    }
    Ok(out)
}

/// Window records read back from disk with their feature column names.
#[derive(Debug, Clone)]
pub struct WindowTable {
    pub feature_names: Vec<String>,
    pub records: Vec<WindowRecord>,
}

/// Reads a window file and attaches the vehicle samples of each window.
pub fn read_windows<R: Read, S: Read>(windows: R, samples: S) -> Result<WindowTable> {
    let mut rdr = csv::Reader::from_reader(windows);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = headers.len();
    if n < LEAD.len() + TAIL.len() || headers[..2] != LEAD || headers[n - 4..] != TAIL {
        return Err(Error::format(
            "windows",
            "header does not match the window record layout",
        ));
    }
    let feature_names = headers[2..n - 4].to_vec();
    let mut by_window: BTreeMap<i64, Vec<WindowSample>> = BTreeMap::new();
    for s in read_samples(samples)? {
        by_window.entry(s.window_index).or_default().push(s);
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::format("windows", format!("row {}: bad {what}", line + 1));
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad(&headers[i]));
        let window_index: i64 = row[0].parse().map_err(|_| bad("window_index"))?;
        if row[1]
            != *window_start(window_index)
                .format("%Y-%m-%dT%H:%M:%SZ")
                .to_string()
        {
            return Err(bad("window_start"));
        }
        let features = (2..n - 4).map(num).collect::<Result<Vec<_>>>()?;
        let vehicle_count: usize = row[n - 1].parse().map_err(|_| bad("vehicle_count"))?;
        let samples = by_window.remove(&window_index).unwrap_or_default();
        if samples.len() != vehicle_count {
            return Err(Error::format(
                "windows",
                format!(
                    "window {window_index}: vehicle_count {vehicle_count} but {} samples",
                    samples.len()
                ),
            ));
        }
        records.push(WindowRecord {
            window_index,
            features: FeatureVector(features),
            samples,
            observed_q25: num(n - 4)?,
            observed_q50: num(n - 3)?,
            observed_q75: num(n - 2)?,
            vehicle_count,
        });
    }
    Ok(WindowTable {
        feature_names,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(w: i64, speeds: &[f64]) -> WindowRecord {
        let samples: Vec<WindowSample> = speeds
            .iter()
            .enumerate()
            .map(|(i, &s)| WindowSample {
                window_index: w,
                journey_id: format!("j{i}"),
                mean_speed_mph: s,
                n_points: 2,
            })
            .collect();
        let (q25, q50, q75) = super::super::observed_quantiles(&samples).unwrap();
        WindowRecord {
            window_index: w,
            features: FeatureVector(vec![0.1 + 0.2, 1.0 / 3.0]),
            vehicle_count: samples.len(),
            samples,
            observed_q25: q25,
            observed_q50: q50,
            observed_q75: q75,
        }
    }

    #[test]
    fn windows_round_trip_bit_exact() {
        let names = vec!["a".to_string(), "b".to_string()];
        let recs = vec![
            record(2776980, &[61.123456789, 55.5]),
            record(2776981, &[40.0]),
        ];
        let mut wbuf = Vec::new();
        let mut sbuf = Vec::new();
        write_windows(&mut wbuf, &names, &recs).unwrap();
        write_samples(&mut sbuf, &recs).unwrap();
        let text = String::from_utf8(wbuf.clone()).unwrap();
        assert!(text.starts_with("window_index,window_start,a,b,observed_q25,"));
        assert!(text.contains("2776980,2022-10-19T14:00:00Z,"));
        let table = read_windows(wbuf.as_slice(), sbuf.as_slice()).unwrap();
        assert_eq!(table.feature_names, names);
        assert_eq!(table.records, recs);
    }

    #[test]
    fn count_mismatch_rejected() {
        let names = vec!["a".to_string(), "b".to_string()];
        let recs = vec![record(5, &[50.0, 51.0])];
        let mut wbuf = Vec::new();
        write_windows(&mut wbuf, &names, &recs).unwrap();
        let samples = "window_index,journey_id,mean_speed_mph,n_points\n5,j0,50,1\n";
        assert!(read_windows(wbuf.as_slice(), samples.as_bytes()).is_err());
    }
}
