//! Feature encoding for one window.
//!
//! A [`FeatureSchema`] is an ordered list of descriptors; each expands to one
//! or more columns. Numeric values pass through, rain state and day of week
//! are one-hot, hour of day is a (sin, cos) pair. Optional sensors fall back
//! to a declared default and can carry a `<name>_missing` indicator column.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RainCodeTable, RwisObservation, PRECIP_HORIZONS_H};
use crate::pipeline::window_start;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureSource {
    SurfaceTemp,
    Grip,
    Visibility,
    RainState,
    /// Precipitation aggregate over the given number of hours.
    Precip(u32),
    /// Optional station column, by header name.
    Sensor(String),
    HourOfDay,
    DayOfWeek,
    VehicleCount,
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix("sensor:") {
            if name.is_empty() {
                return Err(Error::schema("empty sensor name"));
            }
            return Ok(FeatureSource::Sensor(name.to_string()));
        }
        if let Some(h) = s.strip_prefix("precip_").and_then(|r| r.strip_suffix('h')) {
            let h: u32 = h
                .parse()
                .map_err(|_| Error::schema(format!("bad precipitation source {s:?}")))?;
            if !PRECIP_HORIZONS_H.contains(&h) {
                return Err(Error::schema(format!("no {h}h precipitation aggregate")));
            }
            return Ok(FeatureSource::Precip(h));
        }
        Ok(match s {
            "surface_temp" => FeatureSource::SurfaceTemp,
            "grip" => FeatureSource::Grip,
            "visibility" => FeatureSource::Visibility,
            "rain_state" => FeatureSource::RainState,
            "hour_of_day" => FeatureSource::HourOfDay,
            "day_of_week" => FeatureSource::DayOfWeek,
            "vehicle_count" => FeatureSource::VehicleCount,
            _ => return Err(Error::schema(format!("unknown feature source {s:?}"))),
        })
    }
}

impl TryFrom<String> for FeatureSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSource> for String {
    fn from(s: FeatureSource) -> String {
        s.to_string()
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::SurfaceTemp => f.write_str("surface_temp"),
            FeatureSource::Grip => f.write_str("grip"),
            FeatureSource::Visibility => f.write_str("visibility"),
            FeatureSource::RainState => f.write_str("rain_state"),
            FeatureSource::Precip(h) => write!(f, "precip_{h}h"),
            FeatureSource::Sensor(n) => write!(f, "sensor:{n}"),
            FeatureSource::HourOfDay => f.write_str("hour_of_day"),
            FeatureSource::DayOfWeek => f.write_str("day_of_week"),
            FeatureSource::VehicleCount => f.write_str("vehicle_count"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Numeric,
    OneHot,
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDescriptor {
    pub name: String,
    pub source: FeatureSource,
    pub encoding: Encoding,
    /// Imputed value when an optional sensor is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
    #[serde(default)]
    pub missing_indicator: bool,
}

impl FeatureDescriptor {
    fn new(name: &str, source: FeatureSource, encoding: Encoding) -> Self {
        FeatureDescriptor {
            name: name.to_string(),
            source,
            encoding,
            default: None,
            missing_indicator: false,
        }
    }

    fn imputed(mut self, default: f64) -> Self {
        self.default = Some(default);
        self.missing_indicator = true;
        self
    }

    fn flagged(mut self) -> Self {
        self.missing_indicator = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "feature")]
    pub features: Vec<FeatureDescriptor>,
}

impl Default for FeatureSchema {
    /// Weather, pavement and temporal context: surface temperature, grip,
    /// visibility, rain state, the five precipitation aggregates, wind speed,
    /// snow/ice/water layers, hour of day, day of week and vehicle count.
    fn default() -> Self {
        use Encoding::*;
        use FeatureSource as S;
        let mut f = vec![
            FeatureDescriptor::new("surface_temp", S::SurfaceTemp, Numeric),
            FeatureDescriptor::new("grip", S::Grip, Numeric),
            FeatureDescriptor::new("visibility", S::Visibility, Numeric),
            FeatureDescriptor::new("rain_state", S::RainState, OneHot).flagged(),
        ];
        for h in PRECIP_HORIZONS_H {
            f.push(FeatureDescriptor::new(
                &format!("precip_{h}h"),
                S::Precip(h),
                Numeric,
            ));
        }
        for (name, col) in [
            ("wind_speed", "WindSpeed"),
            ("snow_layer", "SnowLayer"),
            ("ice_layer", "IceLayer"),
            ("water_layer", "WaterLayer"),
        ] {
            f.push(FeatureDescriptor::new(name, S::Sensor(col.into()), Numeric).imputed(0.0));
        }
        f.push(FeatureDescriptor::new("hour_of_day", S::HourOfDay, Cyclic));
        f.push(FeatureDescriptor::new("day_of_week", S::DayOfWeek, OneHot));
        f.push(FeatureDescriptor::new(
            "vehicle_count",
            S::VehicleCount,
            Numeric,
        ));
        FeatureSchema { features: f }
    }
}

impl FeatureSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

/// A validated schema bound to a rain code table.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    schema: FeatureSchema,
    table: RainCodeTable,
    columns: Vec<String>,
}

impl FeatureEncoder {
    pub fn new(schema: FeatureSchema, table: RainCodeTable) -> Result<Self> {
        use Encoding::*;
        use FeatureSource as S;
        let mut columns = Vec::new();
        for d in &schema.features {
            let bad = || {
                Error::schema(format!(
                    "feature {:?}: source {} cannot use {:?} encoding",
                    d.name, d.source, d.encoding
                ))
            };
            let optional = matches!(d.source, S::Sensor(_) | S::RainState);
            if d.missing_indicator && !optional {
                return Err(Error::schema(format!(
                    "feature {:?}: source {} is never missing",
                    d.name, d.source
                )));
            }
            match (&d.source, d.encoding) {
                (S::RainState, OneHot) => {
                    for e in table.entries() {
                        columns.push(format!("{}_{}", d.name, slug(&e.label)));
                    }
                }
                (S::DayOfWeek, OneHot) => {
                    columns.extend(WEEKDAYS.iter().map(|w| format!("{}_{w}", d.name)));
                }
                (S::HourOfDay, Cyclic) => {
                    columns.push(format!("{}_sin", d.name));
                    columns.push(format!("{}_cos", d.name));
                }
                (S::RainState, _) | (_, OneHot) | (_, Cyclic) => return Err(bad()),
                (_, Numeric) => columns.push(d.name.clone()),
            }
            if d.missing_indicator {
                columns.push(format!("{}_missing", d.name));
            }
        }
        let mut sorted = columns.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::schema(format!(
                "duplicate feature column {:?}",
                w[0]
            )));
        }
        Ok(FeatureEncoder {
            schema,
            table,
            columns,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn table(&self) -> &RainCodeTable {
        &self.table
    }

    pub fn column_names(&self) -> &[String] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Encodes one window's context into a feature vector.
    pub fn encode(
        &self,
        rwis: &RwisObservation,
        window_index: i64,
        vehicle_count: usize,
    ) -> Result<FeatureVector> {
        use FeatureSource as S;
        let start = window_start(window_index);
        let mut out = Vec::with_capacity(self.columns.len());
        for d in &self.schema.features {
            let mut missing = false;
            match &d.source {
                S::SurfaceTemp => out.push(rwis.surface_temp_c),
                S::Grip => out.push(rwis.grip),
                S::Visibility => out.push(rwis.visibility_m),
                S::Precip(h) => {
                    let i = PRECIP_HORIZONS_H.iter().position(|x| x == h).expect("validated horizon");
                    out.push(rwis.precip_mm[i]);
                }
                S::VehicleCount => out.push(vehicle_count as f64),
                S::Sensor(name) => match (rwis.sensors.get(name), d.default) {
                    (Some(v), _) => out.push(*v),
                    (None, Some(def)) => {
                        missing = true;
                        out.push(def);
                    }
                    (None, None) => {
                        return Err(Error::schema(format!(
                            "feature {:?}: sensor {name:?} absent at window {window_index} and no default declared",
                            d.name
                        )))
                    }
                },
                S::RainState => {
                    let pos = self.table.position(rwis.rain_state);
                    missing = pos.is_none();
                    out.extend((0..self.table.len()).map(|i| if Some(i) == pos { 1.0 } else { 0.0 }));
                }
                S::HourOfDay => {
                    let hour = start.hour() as f64;
                    match d.encoding {
                        Encoding::Cyclic => {
                            let angle = std::f64::consts::TAU * hour / 24.0;
                            out.push(angle.sin());
                            out.push(angle.cos());
                        }
                        _ => out.push(hour),
                    }
                }
                S::DayOfWeek => {
                    let day = start.weekday().num_days_from_monday() as usize;
                    match d.encoding {
                        Encoding::OneHot => out.extend((0..7).map(|i| if i == day { 1.0 } else { 0.0 })),
                        _ => out.push(day as f64),
                    }
                }
            }
            if d.missing_indicator {
                out.push(if missing { 1.0 } else { 0.0 });
            }
        }
        debug_assert_eq!(out.len(), self.columns.len());
        Ok(FeatureVector(out))
    }
}

/// Predictor vector for one window, in schema column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One-shot form of [`FeatureEncoder::encode`].
pub fn build_features(
    rwis: &RwisObservation,
    window_index: i64,
    vehicle_count: usize,
    schema: &FeatureSchema,
    table: &RainCodeTable,
) -> Result<FeatureVector> {
    FeatureEncoder::new(schema.clone(), table.clone())?.encode(rwis, window_index, vehicle_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RainState;
    use crate::pipeline::window_index;
    use chrono::{TimeZone, Utc};

    fn obs(hour: u32) -> RwisObservation {
        RwisObservation {
            observed_at: Utc.with_ymd_and_hms(2022, 10, 17, hour, 0, 0).unwrap(),
            surface_temp_c: 8.5,
            grip: 0.82,
            rain_state: RainState::Code(0),
            visibility_m: 1500.0,
            precip_mm: [0.1, 0.2, 0.3, 0.4, 0.5],
            sensors: [("WindSpeed".to_string(), 4.0)].into(),
        }
    }

    fn encoder() -> FeatureEncoder {
        FeatureEncoder::new(FeatureSchema::default(), RainCodeTable::default()).unwrap()
    }

    fn col(enc: &FeatureEncoder, v: &FeatureVector, name: &str) -> f64 {
        let i = enc
            .column_names()
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("{name}"));
        v.0[i]
    }

    #[test]
    fn default_schema_layout() {
        let enc = encoder();
        // 3 + (7 + 1) + 5 + 4 * 2 + 2 + 7 + 1
        assert_eq!(enc.dim(), 34);
        assert_eq!(enc.column_names()[3], "rain_state_none");
        assert_eq!(enc.column_names()[10], "rain_state_missing");
    }

    #[test]
    fn encoding_examples() {
        let enc = encoder();
        let o = obs(0);
        let w = window_index(o.observed_at);
        let v = enc.encode(&o, w, 12).unwrap();
        assert_eq!(col(&enc, &v, "hour_of_day_sin"), 0.0);
        assert_eq!(col(&enc, &v, "hour_of_day_cos"), 1.0);
        assert_eq!(col(&enc, &v, "grip"), 0.82);
        assert_eq!(col(&enc, &v, "vehicle_count"), 12.0);
        assert_eq!(col(&enc, &v, "day_of_week_mon"), 1.0);
        assert_eq!(col(&enc, &v, "wind_speed"), 4.0);
        assert_eq!(col(&enc, &v, "wind_speed_missing"), 0.0);
        assert_eq!(col(&enc, &v, "snow_layer_missing"), 1.0);
        assert_eq!(col(&enc, &v, "rain_state_none"), 1.0);
        assert_eq!(col(&enc, &v, "rain_state_missing"), 0.0);
    }

    #[test]
    fn unknown_rain_state_is_zero_block_plus_flag() {
        let enc = encoder();
        let mut o = obs(6);
        o.rain_state = RainState::Unknown;
        let v = enc.encode(&o, window_index(o.observed_at), 1).unwrap();
        let block: Vec<f64> = (3..10).map(|i| v.0[i]).collect();
        assert_eq!(block, vec![0.0; 7]);
        assert_eq!(col(&enc, &v, "rain_state_missing"), 1.0);
    }

    #[test]
    fn absent_sensor_without_default_is_schema_error() {
        let schema = FeatureSchema::from_toml(
            r#"
            [[feature]]
            name = "wind"
            source = "sensor:WindGust"
            encoding = "numeric"
            "#,
        )
        .unwrap();
        let o = obs(3);
        let err = build_features(
            &o,
            window_index(o.observed_at),
            1,
            &schema,
            &RainCodeTable::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn invalid_schemas_rejected() {
        let table = RainCodeTable::default();
        let bad = |text: &str| FeatureEncoder::new(FeatureSchema::from_toml(text)?, table.clone());
        assert!(bad("[[feature]]\nname='g'\nsource='grip'\nencoding='one_hot'\n").is_err());
        assert!(bad(
            "[[feature]]\nname='g'\nsource='grip'\nencoding='numeric'\nmissing_indicator=true\n"
        )
        .is_err());
        assert!(bad("[[feature]]\nname='g'\nsource='grip'\nencoding='numeric'\n[[feature]]\nname='g'\nsource='visibility'\nencoding='numeric'\n").is_err());
        assert!(bad("[[feature]]\nname='p'\nsource='precip_2h'\nencoding='numeric'\n").is_err());
        assert!(
            bad("[[feature]]\nname='p'\nsource='grip'\nencoding='numeric'\nbogus=1\n").is_err()
        );
    }

    #[test]
    fn schema_toml_round_trip() {
        let s = FeatureSchema::default();
        assert_eq!(FeatureSchema::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn encoding_is_deterministic() {
        let enc = encoder();
        let o = obs(17);
        let w = window_index(o.observed_at);
        let a = enc.encode(&o, w, 3).unwrap();
        let b = enc.encode(&o, w, 3).unwrap();
        let bits = |v: &FeatureVector| v.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
