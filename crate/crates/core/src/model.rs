//! Domain records shared by every stage.
//!
//! These are plain immutable values. Speeds are mph and distances feet once a
//! record has been ingested; [`CvPoint::speed_kmh`] and
//! [`RwisObservation::visibility_m`] keep the source units because they mirror
//! the input schemas one to one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IgnitionStatus {
    KeyOn,
    MidJourney,
    KeyOff,
}

impl IgnitionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            IgnitionStatus::KeyOn => "KEY_ON",
            IgnitionStatus::MidJourney => "MID_JOURNEY",
            IgnitionStatus::KeyOff => "KEY_OFF",
        }
    }
}

impl FromStr for IgnitionStatus {
    type Err = Error;

    /// Accepts both `KEY_ON` and the spaced `KEY ON` spelling.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| {
                if c == ' ' || c == '-' {
                    '_'
                } else {
                    c.to_ascii_uppercase()
                }
            })
            .collect();
        match norm.as_str() {
            "KEY_ON" => Ok(IgnitionStatus::KeyOn),
            "MID_JOURNEY" => Ok(IgnitionStatus::MidJourney),
            "KEY_OFF" => Ok(IgnitionStatus::KeyOff),
            _ => Err(Error::validation(format!("unknown ignition status {s:?}"))),
        }
    }
}

impl fmt::Display for IgnitionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped GPS fix of one vehicle journey.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    pub data_point_id: String,
    pub journey_id: String,
    pub captured_at: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    pub ignition_status: IgnitionStatus,
    pub speed_kmh: f64,
}

impl CvPoint {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::validation(format!(
                "latitude {} out of range",
                self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::validation(format!(
                "longitude {} out of range",
                self.longitude
            )));
        }
        if !(self.speed_kmh >= 0.0) || !self.speed_kmh.is_finite() {
            return Err(Error::validation(format!(
                "speed {} must be >= 0",
                self.speed_kmh
            )));
        }
        Ok(())
    }
}

/// Coarse weather grouping used for per-condition reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherGroup {
    Clear,
    Rain,
    Snow,
    Unknown,
}

impl WeatherGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            WeatherGroup::Clear => "clear",
            WeatherGroup::Rain => "rain",
            WeatherGroup::Snow => "snow",
            WeatherGroup::Unknown => "unknown",
        }
    }
}

impl fmt::Display for WeatherGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rain-state category as reported by the weather station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RainState {
    Code(u16),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RainCodeEntry {
    pub label: String,
    pub code: u16,
    pub group: WeatherGroup,
}

/// Maps station rain-state strings to category codes and weather groups.
///
/// Codes must be unique; the one-hot feature block follows table order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RainCodeTable {
    entries: Vec<RainCodeEntry>,
}

impl Default for RainCodeTable {
    fn default() -> Self {
        let e = |label: &str, code, group| RainCodeEntry {
            label: label.to_string(),
            code,
            group,
        };
        RainCodeTable {
            entries: vec![
                e("none", 0, WeatherGroup::Clear),
                e("light rain", 1, WeatherGroup::Rain),
                e("moderate rain", 2, WeatherGroup::Rain),
                e("heavy rain", 3, WeatherGroup::Rain),
                e("light snow", 4, WeatherGroup::Snow),
                e("moderate snow", 5, WeatherGroup::Snow),
                e("heavy snow", 6, WeatherGroup::Snow),
            ],
        }
    }
}

impl RainCodeTable {
    pub fn new(entries: Vec<RainCodeEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation("rain code table is empty"));
        }
        for (i, a) in entries.iter().enumerate() {
            for b in &entries[i + 1..] {
                if a.code == b.code {
                    return Err(Error::validation(format!("duplicate rain code {}", a.code)));
                }
                if normalize_label(&a.label) == normalize_label(&b.label) {
                    return Err(Error::validation(format!(
                        "duplicate rain label {:?}",
                        a.label
                    )));
                }
            }
        }
        Ok(RainCodeTable { entries })
    }

    pub fn entries(&self) -> &[RainCodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves a label (case and whitespace insensitive) or a bare numeric
    /// code. Anything else is [`RainState::Unknown`].
    pub fn parse(&self, raw: &str) -> RainState {
        let norm = normalize_label(raw);
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| normalize_label(&e.label) == norm)
        {
            return RainState::Code(e.code);
        }
        if let Ok(code) = norm.parse::<u16>() {
            if self.entries.iter().any(|e| e.code == code) {
                return RainState::Code(code);
            }
        }
        RainState::Unknown
    }

    /// Position of a state in the one-hot block.
    pub fn position(&self, state: RainState) -> Option<usize> {
        match state {
            RainState::Code(c) => self.entries.iter().position(|e| e.code == c),
            RainState::Unknown => None,
        }
    }

    pub fn label(&self, state: RainState) -> &str {
        self.position(state)
            .map(|i| self.entries[i].label.as_str())
            .unwrap_or("unknown")
    }

    pub fn group(&self, state: RainState) -> WeatherGroup {
        self.position(state)
            .map(|i| self.entries[i].group)
            .unwrap_or(WeatherGroup::Unknown)
    }
}

fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Number of rolling precipitation aggregates reported by the station.
pub const PRECIP_HORIZONS_H: [u32; 5] = [1, 3, 6, 12, 24];

/// One 10-minute road-weather record.
#[derive(Debug, Clone, PartialEq)]
pub struct RwisObservation {
    pub observed_at: DateTime<Utc>,
    pub surface_temp_c: f64,
    pub grip: f64,
    pub rain_state: RainState,
    pub visibility_m: f64,
    /// Precipitation aggregates in mm, ordered as [`PRECIP_HORIZONS_H`].
    pub precip_mm: [f64; 5],
    /// Optional extended sensors, e.g. wind speed or surface layer depths.
    pub sensors: BTreeMap<String, f64>,
}

impl RwisObservation {
    pub fn validate(&self) -> Result<()> {
        if self
            .observed_at
            .timestamp()
            .rem_euclid(crate::pipeline::WINDOW_SECONDS)
            != 0
        {
            return Err(Error::validation(format!(
                "timestamp {} is not on a 10-minute boundary",
                self.observed_at
            )));
        }
        if !(0.0..=1.0).contains(&self.grip) {
            return Err(Error::validation(format!(
                "grip {} outside [0, 1]",
                self.grip
            )));
        }
        if !(0.0..=2000.0).contains(&self.visibility_m) {
            return Err(Error::validation(format!(
                "visibility {} outside [0, 2000] m",
                self.visibility_m
            )));
        }
        if let Some(p) = self.precip_mm.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::validation(format!("precipitation {p} must be >= 0")));
        }
        if !self.surface_temp_c.is_finite() {
            return Err(Error::validation("surface temperature is not finite"));
        }
        Ok(())
    }
}

/// A road centerline as listed in the network file.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub osm_id: String,
    pub lanes: u32,
    pub highway_class: String,
    pub maxspeed_mph: f64,
    /// Vertices as (lat, lon) degrees.
    pub polyline: Vec<(f64, f64)>,
    pub name: String,
}

impl RoadSegment {
    pub fn validate(&self) -> Result<()> {
        if self.lanes < 1 {
            return Err(Error::validation(format!(
                "segment {} has no lanes",
                self.osm_id
            )));
        }
        if self.polyline.len() < 2 {
            return Err(Error::validation(format!(
                "segment {} polyline has fewer than 2 vertices",
                self.osm_id
            )));
        }
        Ok(())
    }
}

/// A vehicle's mean speed inside one 10-minute window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub window_index: i64,
    pub journey_id: String,
    pub mean_speed_mph: f64,
    pub n_points: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ignition_spellings() {
        assert_eq!(
            "KEY ON".parse::<IgnitionStatus>().unwrap(),
            IgnitionStatus::KeyOn
        );
        assert_eq!(
            "mid_journey".parse::<IgnitionStatus>().unwrap(),
            IgnitionStatus::MidJourney
        );
        assert!("PARKED".parse::<IgnitionStatus>().is_err());
    }

    #[test]
    fn rain_table_lookup() {
        let t = RainCodeTable::default();
        assert_eq!(t.parse("Moderate  Snow"), RainState::Code(5));
        assert_eq!(t.parse("2"), RainState::Code(2));
        assert_eq!(t.parse("hail"), RainState::Unknown);
        assert_eq!(t.parse("99"), RainState::Unknown);
        assert_eq!(t.group(RainState::Code(5)), WeatherGroup::Snow);
        assert_eq!(t.group(RainState::Unknown), WeatherGroup::Unknown);
        assert_eq!(t.label(RainState::Code(1)), "light rain");
    }

    #[test]
    fn rain_table_rejects_duplicates() {
        let mut entries = RainCodeTable::default().entries().to_vec();
        entries[1].code = 0;
        assert!(RainCodeTable::new(entries).is_err());
    }
}
