//! Seeded synthetic scenarios with known speed quantiles.
//!
//! Each window gets one weather regime from a repeating script. Vehicle mean
//! speeds are `base - shift(regime) + N(0, sigma(regime)^2)`, so the true
//! window quartiles are closed-form. GPS fixes are scattered inside the
//! buffer of a chain of qualifying freeway segments; decoy fixes land either
//! well off the road or on segments the matcher must exclude.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, FixedOffset, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::geo::{buffer_radius_ft, network_to_geojson, M_PER_DEG_LAT, M_PER_DEG_LON};
use crate::model::{
    CvPoint, IgnitionStatus, RainCodeTable, RoadSegment, RwisObservation, WeatherGroup,
};
use crate::pipeline::{window_index, WINDOW_SECONDS};
use crate::units::{FT_PER_M, MPH_PER_KMH};

/// Prefix of `dataPointId` for fixes the matcher must reject.
pub const DECOY_PREFIX: &str = "decoy-";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
}

impl Spread {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.sd == 0.0 {
            return self.mean;
        }
        Normal::new(self.mean, self.sd)
            .expect("validated sd")
            .sample(rng)
    }
}

const fn spread(mean: f64, sd: f64) -> Spread {
    Spread { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeParams {
    pub grip: Spread,
    pub visibility_m: Spread,
    /// Precipitation rate, mm/h.
    pub precip_mm_h: Spread,
    pub surface_temp_c: Spread,
    /// Drop of the mean speed below the base speed.
    pub shift_mph: f64,
    pub sigma_mph: f64,
    /// Station rain-state label written for this regime.
    pub rain_state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regimes {
    pub clear: RegimeParams,
    pub rain: RegimeParams,
    pub snow: RegimeParams,
}

impl Default for Regimes {
    fn default() -> Self {
        Regimes {
            clear: RegimeParams {
                grip: spread(0.82, 0.03),
                visibility_m: spread(1800.0, 150.0),
                precip_mm_h: spread(0.0, 0.0),
                surface_temp_c: spread(12.0, 3.0),
                shift_mph: 0.0,
                sigma_mph: 4.0,
                rain_state: "none".into(),
            },
            rain: RegimeParams {
                grip: spread(0.6, 0.05),
                visibility_m: spread(900.0, 200.0),
                precip_mm_h: spread(2.5, 1.0),
                surface_temp_c: spread(8.0, 2.0),
                shift_mph: 5.0,
                sigma_mph: 6.0,
                rain_state: "moderate rain".into(),
            },
            snow: RegimeParams {
                grip: spread(0.3, 0.05),
                visibility_m: spread(300.0, 100.0),
                precip_mm_h: spread(1.5, 0.5),
                surface_temp_c: spread(-4.0, 2.0),
                shift_mph: 12.0,
                sigma_mph: 8.0,
                rain_state: "moderate snow".into(),
            },
        }
    }
}

impl Regimes {
    pub fn get(&self, g: WeatherGroup) -> Result<&RegimeParams> {
        match g {
            WeatherGroup::Clear => Ok(&self.clear),
            WeatherGroup::Rain => Ok(&self.rain),
            WeatherGroup::Snow => Ok(&self.snow),
            WeatherGroup::Unknown => Err(Error::validation(
                "scenario regimes are clear, rain or snow",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub regime: WeatherGroup,
    /// Length in 10-minute windows.
    pub windows: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub segments: u32,
    pub lanes: u32,
    pub segment_length_m: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            segments: 4,
            lanes: 3,
            segment_length_m: 1500.0,
            origin_lat: 41.6,
            origin_lon: -93.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// First window start; must sit on a 10-minute boundary.
    pub start: DateTime<Utc>,
    pub n_days: u32,
    pub vehicles_per_window: CountRange,
    pub fixes_per_vehicle: CountRange,
    pub network: NetworkSpec,
    /// Repeated until the scenario ends.
    pub weather_script: Vec<ScriptStep>,
    pub regimes: Regimes,
    pub base_speed_mph: f64,
    /// Share of all CV rows that are decoys.
    pub decoy_fraction: f64,
    /// Offset used when writing timestamps; values are still UTC instants.
    pub utc_offset_minutes: i32,
    /// Window numbers (from 0) with no station record.
    pub rwis_gaps: Vec<u32>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            start: DateTime::from_timestamp(1_664_582_400, 0).expect("valid epoch"), // 2022-10-01
            n_days: 7,
            vehicles_per_window: CountRange { min: 6, max: 14 },
            fixes_per_vehicle: CountRange { min: 1, max: 5 },
            network: NetworkSpec::default(),
            weather_script: vec![
                ScriptStep {
                    regime: WeatherGroup::Clear,
                    windows: 36,
                },
                ScriptStep {
                    regime: WeatherGroup::Rain,
                    windows: 18,
                },
                ScriptStep {
                    regime: WeatherGroup::Clear,
                    windows: 24,
                },
                ScriptStep {
                    regime: WeatherGroup::Snow,
                    windows: 18,
                },
            ],
            regimes: Regimes::default(),
            base_speed_mph: 62.0,
            decoy_fraction: 0.05,
            utc_offset_minutes: 0,
            rwis_gaps: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_windows(&self) -> u32 {
        self.n_days * 24 * 6
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation(m));
        if self.start.timestamp().rem_euclid(WINDOW_SECONDS) != 0 {
            return bad(format!(
                "start {} is not on a 10-minute boundary",
                self.start
            ));
        }
        if self.n_days == 0 {
            return bad("n_days must be >= 1".into());
        }
        for (name, r) in [
            ("vehicles_per_window", self.vehicles_per_window),
            ("fixes_per_vehicle", self.fixes_per_vehicle),
        ] {
            if r.min > r.max {
                return bad(format!("{name}: min {} > max {}", r.min, r.max));
            }
        }
        if self.fixes_per_vehicle.min == 0 {
            return bad("fixes_per_vehicle.min must be >= 1".into());
        }
        let n = &self.network;
        if n.segments == 0 || n.lanes == 0 || !(n.segment_length_m > 0.0) {
            return bad("network needs >= 1 segment, >= 1 lane and a positive length".into());
        }
        if self.weather_script.is_empty() {
            return bad("weather_script is empty".into());
        }
        let table = RainCodeTable::default();
        for step in &self.weather_script {
            if step.windows == 0 {
                return bad(format!("{} step has zero duration", step.regime));
            }
            self.regimes.get(step.regime)?;
        }
        for (name, r) in [
            ("clear", &self.regimes.clear),
            ("rain", &self.regimes.rain),
            ("snow", &self.regimes.snow),
        ] {
            let spreads = [r.grip, r.visibility_m, r.precip_mm_h, r.surface_temp_c];
            if spreads
                .iter()
                .any(|s| !(s.sd >= 0.0) || !s.mean.is_finite())
                || !(r.sigma_mph >= 0.0)
            {
                return bad(format!(
                    "regime {name}: spreads need finite means and sd >= 0"
                ));
            }
            if table.parse(&r.rain_state) == crate::model::RainState::Unknown {
                return bad(format!(
                    "regime {name}: unknown rain state {:?}",
                    r.rain_state
                ));
            }
        }
        if !(0.0..1.0).contains(&self.decoy_fraction) {
            return bad(format!(
                "decoy_fraction {} outside [0, 1)",
                self.decoy_fraction
            ));
        }
        if self.utc_offset_minutes.abs() >= 24 * 60 {
            return bad("utc_offset_minutes out of range".into());
        }
        Ok(())
    }
}

/// Analytic quartiles of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub window_index: i64,
    pub regime: WeatherGroup,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// An in-memory scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cv: Vec<CvPoint>,
    pub rwis: Vec<RwisObservation>,
    pub segments: Vec<RoadSegment>,
    pub truth: Vec<TruthRow>,
    /// `dataPointId`s of every decoy fix.
    pub decoys: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub cv: PathBuf,
    pub rwis: PathBuf,
    pub network: PathBuf,
    pub truth: PathBuf,
    pub n_windows: usize,
    pub n_points: usize,
    pub n_decoys: usize,
    pub n_vehicles: usize,
}

/// Quartiles of `N(mean, sigma^2)`.
pub fn normal_quartiles(mean: f64, sigma: f64) -> (f64, f64, f64) {
    if sigma == 0.0 {
        return (mean, mean, mean);
    }
    let z = StdNormal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.75);
    (mean - sigma * z, mean, mean + sigma * z)
}

/// Local east/north metres around the network origin.
struct Frame {
    lat0: f64,
    lon0: f64,
    m_per_deg_lon: f64,
}

impl Frame {
    fn new(net: &NetworkSpec) -> Self {
        Frame {
            lat0: net.origin_lat,
            lon0: net.origin_lon,
            m_per_deg_lon: M_PER_DEG_LON * net.origin_lat.to_radians().cos(),
        }
    }

    fn to_deg(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            self.lat0 + y / M_PER_DEG_LAT,
            self.lon0 + x / self.m_per_deg_lon,
        )
    }
}

/// A segment's vertices in local metres.
struct Line {
    pts: Vec<(f64, f64)>,
    radius_m: f64,
}

impl Line {
    /// Random point at a perpendicular offset `offset_m` from a random spot.
    fn point_at(&self, rng: &mut ChaCha8Rng, offset_m: f64) -> (f64, f64) {
        let k = rng.gen_range(0..self.pts.len() - 1);
        let (a, b) = (self.pts[k], self.pts[k + 1]);
        let t: f64 = rng.gen();
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        let (nx, ny) = (-dy / len, dx / len);
        (a.0 + t * dx + offset_m * nx, a.1 + t * dy + offset_m * ny)
    }
}

fn curve(x0: f64, x1: f64, y_base: f64) -> Vec<(f64, f64)> {
    let steps = ((x1 - x0) / 100.0).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / steps as f64;
            (x, y_base + 30.0 * (x / 2000.0).sin())
        })
        .collect()
}

struct Network {
    segments: Vec<RoadSegment>,
    main: Vec<Line>,
    excluded: Vec<Line>,
}

fn build_network(net: &NetworkSpec) -> Result<Network> {
    let frame = Frame::new(net);
    let mut segments = Vec::new();
    let mut main = Vec::new();
    let lane_radius =
        |lanes: u32| -> Result<f64> { Ok(buffer_radius_ft::<f64>(lanes)? / FT_PER_M) };
    for k in 0..net.segments {
        let x0 = k as f64 * net.segment_length_m;
        let pts = curve(x0, x0 + net.segment_length_m, 0.0);
        segments.push(RoadSegment {
            osm_id: format!("synth-main-{k}"),
            lanes: net.lanes,
            highway_class: "motorway".into(),
            maxspeed_mph: 55.0,
            polyline: pts.iter().map(|&p| frame.to_deg(p)).collect(),
            name: "Synthetic Freeway".into(),
        });
        main.push(Line {
            pts,
            radius_m: lane_radius(net.lanes)?,
        });
    }
    // A ramp 150 m north and a faster road 400 m south, both far outside
    // the main buffers and both excluded by the matcher.
    let span = net.segment_length_m.min(1000.0);
    let extra = [
        ("synth-ramp", 1, "motorway_link", 55.0, 150.0),
        ("synth-fast", 2, "motorway", 65.0, -400.0),
    ];
    let mut excluded = Vec::new();
    for (id, lanes, class, maxspeed, y) in extra {
        let pts = curve(0.0, span, y);
        segments.push(RoadSegment {
            osm_id: id.into(),
            lanes,
            highway_class: class.into(),
            maxspeed_mph: maxspeed,
            polyline: pts.iter().map(|&p| frame.to_deg(p)).collect(),
            name: String::new(),
        });
        excluded.push(Line {
            pts,
            radius_m: lane_radius(lanes)?,
        });
    }
    Ok(Network {
        segments,
        main,
        excluded,
    })
}

struct Weather {
    table: RainCodeTable,
    /// Per-window precipitation amounts, newest last, one day deep.
    amounts: VecDeque<f64>,
}

impl Weather {
    fn observe(
        &mut self,
        rng: &mut ChaCha8Rng,
        at: DateTime<Utc>,
        regime: WeatherGroup,
        p: &RegimeParams,
    ) -> RwisObservation {
        let grip = p.grip.sample(rng).clamp(0.0, 1.0);
        let visibility_m = p.visibility_m.sample(rng).clamp(0.0, 2000.0);
        let rate = p.precip_mm_h.sample(rng).max(0.0);
        let surface_temp_c = p.surface_temp_c.sample(rng);
        if self.amounts.len() == 144 {
            self.amounts.pop_front();
        }
        self.amounts.push_back(rate / 6.0);
        let precip_mm = crate::model::PRECIP_HORIZONS_H
            .map(|h| self.amounts.iter().rev().take(6 * h as usize).sum::<f64>());
        let wind: f64 = 4.0 + 2.0 * rng.gen::<f64>();
        let mut sensors = std::collections::BTreeMap::new();
        sensors.insert("WindSpeed".to_string(), wind);
        sensors.insert(
            "WaterLayer".to_string(),
            if regime == WeatherGroup::Rain {
                0.2 * precip_mm[1]
            } else {
                0.0
            },
        );
        sensors.insert(
            "SnowLayer".to_string(),
            if regime == WeatherGroup::Snow {
                0.5 * precip_mm[2]
            } else {
                0.0
            },
        );
        sensors.insert(
            "IceLayer".to_string(),
            if regime == WeatherGroup::Snow && surface_temp_c < -2.0 {
                0.1
            } else {
                0.0
            },
        );
        RwisObservation {
            observed_at: at,
            surface_temp_c,
            grip,
            rain_state: self.table.parse(&p.rain_state),
            visibility_m,
            precip_mm,
            sensors,
        }
    }
}

fn regime_at(script: &[ScriptStep], w: u32) -> WeatherGroup {
    let cycle: u32 = script.iter().map(|s| s.windows).sum();
    let mut r = w % cycle;
    for s in script {
        if r < s.windows {
            return s.regime;
        }
        r -= s.windows;
    }
    unreachable!("offset lies inside one cycle")
}

/// Builds the whole scenario in memory.
pub fn simulate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = build_network(&config.network)?;
    let frame = Frame::new(&config.network);
    let mut weather = Weather {
        table: RainCodeTable::default(),
        amounts: VecDeque::with_capacity(144),
    };
    let gaps: BTreeSet<u32> = config.rwis_gaps.iter().copied().collect();
    let mut out = Scenario {
        cv: Vec::new(),
        rwis: Vec::new(),
        segments: net.segments.clone(),
        truth: Vec::new(),
        decoys: BTreeSet::new(),
    };

    for w in 0..config.n_windows() {
        let start = config.start + Duration::seconds(w as i64 * WINDOW_SECONDS);
        let wi = window_index(start);
        let regime = regime_at(&config.weather_script, w);
        let p = config.regimes.get(regime)?;
        let obs = weather.observe(&mut rng, start, regime, p);
        if !gaps.contains(&w) {
            out.rwis.push(obs);
        }
        let mean = config.base_speed_mph - p.shift_mph;
        let (q25, q50, q75) = normal_quartiles(mean, p.sigma_mph);
        out.truth.push(TruthRow {
            window_index: wi,
            regime,
            q25,
            q50,
            q75,
        });

        let speed = Normal::new(mean, p.sigma_mph).expect("validated sigma");
        let n_vehicles =
            rng.gen_range(config.vehicles_per_window.min..=config.vehicles_per_window.max);
        let mut real_points = 0;
        for v in 0..n_vehicles {
            let y = if p.sigma_mph == 0.0 {
                mean
            } else {
                speed.sample(&mut rng)
            };
            let n_fix =
                rng.gen_range(config.fixes_per_vehicle.min..=config.fixes_per_vehicle.max) as usize;
            // mean-zero jitter keeps the vehicle's window mean exactly at y
            let mut jitter: Vec<f64> = (0..n_fix).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mj = jitter.iter().sum::<f64>() / n_fix as f64;
            jitter.iter_mut().for_each(|j| *j -= mj);
            let mut secs: Vec<i64> = (0..n_fix)
                .map(|_| rng.gen_range(0..WINDOW_SECONDS * 1000))
                .collect();
            secs.sort_unstable();
            let seg = &net.main[rng.gen_range(0..net.main.len())];
            for (k, (ms, j)) in secs.into_iter().zip(jitter).enumerate() {
                let off = rng.gen_range(-0.8..0.8) * seg.radius_m;
                let (lat, lon) = frame.to_deg(seg.point_at(&mut rng, off));
                let ignition = match k {
                    0 => IgnitionStatus::KeyOn,
                    _ if k + 1 == n_fix => IgnitionStatus::KeyOff,
                    _ => IgnitionStatus::MidJourney,
                };
                out.cv.push(CvPoint {
                    data_point_id: format!("p{wi}-{v}-{k}"),
                    journey_id: format!("j{wi}-{v}"),
                    captured_at: start + Duration::milliseconds(ms),
                    latitude: lat,
                    longitude: lon,
                    ignition_status: ignition,
                    speed_kmh: ((y + j) / MPH_PER_KMH).max(0.0),
                });
                real_points += 1;
            }
        }

        let f = config.decoy_fraction;
        let n_decoys = (f * real_points as f64 / (1.0 - f)).round() as usize;
        for d in 0..n_decoys {
            let (x, y) = match rng.gen_range(0..3) {
                0 => {
                    let seg = &net.main[rng.gen_range(0..net.main.len())];
                    let ft =
                        rng.gen_range(100.0..300.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    seg.point_at(&mut rng, ft / FT_PER_M)
                }
                k => {
                    let seg = &net.excluded[k - 1];
                    let off = rng.gen_range(-0.8..0.8) * seg.radius_m;
                    seg.point_at(&mut rng, off)
                }
            };
            let (lat, lon) = frame.to_deg((x, y));
            let id = format!("{DECOY_PREFIX}{wi}-{d}");
            out.decoys.insert(id.clone());
            out.cv.push(CvPoint {
                data_point_id: id,
                journey_id: format!("d{wi}-{d}"),
                captured_at: start
                    + Duration::milliseconds(rng.gen_range(0..WINDOW_SECONDS * 1000)),
                latitude: lat,
                longitude: lon,
                ignition_status: IgnitionStatus::MidJourney,
                speed_kmh: rng.gen_range(20.0..160.0),
            });
        }
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, std::io::BufWriter<std::fs::File>)> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, std::io::BufWriter::new(f)))
}

fn stamp(t: DateTime<Utc>, tz: &FixedOffset, millis: bool) -> String {
    let local = t.with_timezone(tz);
    if millis {
        local.format("%Y-%m-%dT%H:%M:%S%.3f%:z").to_string()
    } else {
        local.format("%Y-%m-%dT%H:%M:%S%:z").to_string()
    }
}

pub fn write_cv<W: Write>(out: W, points: &[CvPoint], tz: &FixedOffset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(crate::pipeline::CV_COLUMNS)?;
    for p in points {
        w.write_record([
            p.data_point_id.clone(),
            p.journey_id.clone(),
            stamp(p.captured_at, tz, true),
            p.latitude.to_string(),
            p.longitude.to_string(),
            p.ignition_status.as_str().to_string(),
            p.speed_kmh.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cv>", e))?;
    Ok(())
}

pub fn write_rwis<W: Write>(
    out: W,
    obs: &[RwisObservation],
    table: &RainCodeTable,
    tz: &FixedOffset,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let sensors: Vec<String> = obs
        .first()
        .map(|o| o.sensors.keys().cloned().collect())
        .unwrap_or_default();
    let mut header: Vec<String> = crate::pipeline::RWIS_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(sensors.iter().cloned());
    w.write_record(&header)?;
    for o in obs {
        let mut row = vec![
            stamp(o.observed_at, tz, false),
            o.surface_temp_c.to_string(),
            o.grip.to_string(),
            table.label(o.rain_state).to_string(),
            o.visibility_m.to_string(),
        ];
        row.extend(o.precip_mm.iter().map(f64::to_string));
        for s in &sensors {
            row.push(o.sensors.get(s).map(f64::to_string).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<rwis>", e))?;
    Ok(())
}

pub fn write_truth<W: Write>(out: W, truth: &[TruthRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_index", "regime", "true_q25", "true_q50", "true_q75"])?;
    for t in truth {
        w.write_record([
            t.window_index.to_string(),
            t.regime.as_str().to_string(),
            t.q25.to_string(),
            t.q50.to_string(),
            t.q75.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

pub fn read_truth<R: std::io::Read>(input: R) -> Result<Vec<TruthRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || Error::format("truth", format!("row {}", line + 1));
        if row.len() != 5 {
            return Err(bad());
        }
        let regime = match &row[1] {
            "clear" => WeatherGroup::Clear,
            "rain" => WeatherGroup::Rain,
            "snow" => WeatherGroup::Snow,
            _ => return Err(bad()),
        };
        out.push(TruthRow {
            window_index: row[0].parse().map_err(|_| bad())?,
            regime,
            q25: row[2].parse().map_err(|_| bad())?,
            q50: row[3].parse().map_err(|_| bad())?,
            q75: row[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Generates the scenario and writes `cv.csv`, `rwis.csv`,
/// `network.geojson` and `truth.csv` into `out_dir`.
pub fn generate(config: &ScenarioConfig, out_dir: &Path) -> Result<Manifest> {
    let s = simulate(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tz = FixedOffset::east_opt(config.utc_offset_minutes * 60).expect("validated offset");
    let (cv, f) = create(out_dir, "cv.csv")?;
    write_cv(f, &s.cv, &tz)?;
    let (rwis, f) = create(out_dir, "rwis.csv")?;
    write_rwis(f, &s.rwis, &RainCodeTable::default(), &tz)?;
    let (truth, f) = create(out_dir, "truth.csv")?;
    write_truth(f, &s.truth)?;
    let (network, mut f) = create(out_dir, "network.geojson")?;
    f.write_all(network_to_geojson(&s.segments).as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(&network, e))?;
    Ok(Manifest {
        cv,
        rwis,
        network,
        truth,
        n_windows: s.truth.len(),
        n_points: s.cv.len(),
        n_decoys: s.decoys.len(),
        n_vehicles: s
            .cv
            .iter()
            .filter(|p| !s.decoys.contains(&p.data_point_id))
            .map(|p| &p.journey_id)
            .collect::<BTreeSet<_>>()
            .len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::MatchIndex;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_days: 1,
            vehicles_per_window: CountRange { min: 2, max: 4 },
            ..Default::default()
        }
    }

    #[test]
    fn clear_regime_quartiles() {
        let (q25, q50, q75) = normal_quartiles(62.0, 4.0);
        assert_eq!(q50, 62.0);
        assert!((q25 - (62.0 - 4.0 * 0.6744897501960817)).abs() < 1e-9);
        assert!((q75 - (62.0 + 4.0 * 0.6744897501960817)).abs() < 1e-9);
        assert_eq!(normal_quartiles(50.0, 0.0), (50.0, 50.0, 50.0));
    }

    #[test]
    fn truth_matches_regime_parameters() {
        let c = small();
        let s = simulate(&c).unwrap();
        assert_eq!(s.truth.len(), 144);
        for t in &s.truth {
            let p = c.regimes.get(t.regime).unwrap();
            let mean = c.base_speed_mph - p.shift_mph;
            let z = 0.6744897501960817;
            assert!((t.q50 - mean).abs() < 1e-9);
            assert!((t.q25 - (mean - z * p.sigma_mph)).abs() < 1e-9);
            assert!((t.q75 - (mean + z * p.sigma_mph)).abs() < 1e-9);
        }
        assert_eq!(s.truth[0].regime, WeatherGroup::Clear);
        assert_eq!(s.truth[36].regime, WeatherGroup::Rain);
        assert_eq!(s.truth[96].regime, WeatherGroup::Clear);
    }

    #[test]
    fn station_grid_is_exact_with_injected_gaps() {
        let mut c = small();
        let s = simulate(&c).unwrap();
        for (i, o) in s.rwis.iter().enumerate() {
            assert_eq!(o.observed_at, c.start + Duration::seconds(600 * i as i64));
            o.validate().unwrap();
        }
        c.rwis_gaps = vec![3, 10];
        let g = simulate(&c).unwrap();
        assert_eq!(g.rwis.len(), 142);
        assert!(g
            .rwis
            .iter()
            .all(|o| window_index(o.observed_at) != s.truth[3].window_index));
    }

    #[test]
    fn every_decoy_rejected_every_fix_matched() {
        let c = ScenarioConfig {
            decoy_fraction: 0.1,
            ..small()
        };
        let s = simulate(&c).unwrap();
        let kept: Vec<RoadSegment> = s
            .segments
            .iter()
            .filter(|g| !crate::geo::is_excluded(g))
            .cloned()
            .collect();
        assert_eq!(kept.len(), 4);
        let index = MatchIndex::new(&kept).unwrap();
        assert!(!s.decoys.is_empty());
        for p in &s.cv {
            let decoy = s.decoys.contains(&p.data_point_id);
            assert_eq!(index.match_point(p).is_none(), decoy, "{}", p.data_point_id);
        }
        let share = s.decoys.len() as f64 / s.cv.len() as f64;
        assert!((share - 0.1).abs() < 0.02, "{share}");
    }

    #[test]
    fn vehicle_means_are_exact_draws() {
        let s = simulate(&small()).unwrap();
        let mut by_journey: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
        for p in s.cv.iter().filter(|p| !s.decoys.contains(&p.data_point_id)) {
            p.validate().unwrap();
            by_journey
                .entry(&p.journey_id)
                .or_default()
                .push(p.speed_kmh * MPH_PER_KMH);
        }
        // every journey stays inside one window
        for p in &s.cv {
            let j = s.cv.iter().find(|q| q.journey_id == p.journey_id).unwrap();
            assert_eq!(window_index(j.captured_at), window_index(p.captured_at));
        }
        assert!(by_journey.values().all(|v| !v.is_empty()));
    }

    #[test]
    fn written_files_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = ScenarioConfig {
            utc_offset_minutes: -300,
            ..small()
        };
        let ma = generate(&c, a.path()).unwrap();
        generate(&c, b.path()).unwrap();
        for name in ["cv.csv", "rwis.csv", "network.geojson", "truth.csv"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        assert_eq!(ma.n_windows, 144);
        let text = std::fs::read_to_string(&ma.rwis).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("2022-09-30T19:00:00-05:00,"));
        let truth = read_truth(std::fs::File::open(&ma.truth).unwrap()).unwrap();
        assert_eq!(truth, simulate(&c).unwrap().truth);

        let other = ScenarioConfig { seed: 7, ..c };
        let d = tempfile::tempdir().unwrap();
        generate(&other, d.path()).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("cv.csv")).unwrap(),
            std::fs::read(d.path().join("cv.csv")).unwrap()
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small();
        c.weather_script = vec![ScriptStep {
            regime: WeatherGroup::Rain,
            windows: 0,
        }];
        assert!(c.validate().is_err());
        let mut c = small();
        c.start += Duration::seconds(30);
        assert!(c.validate().is_err());
        let mut c = small();
        c.decoy_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.regimes.snow.rain_state = "hail".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_from_toml() {
        let c: ScenarioConfig = toml::from_str(
            r#"
            seed = 9
            n_days = 2
            [[weather_script]]
            regime = "snow"
            windows = 12
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.weather_script.len(), 1);
        c.validate().unwrap();
        assert!(toml::from_str::<ScenarioConfig>("bogus = 1").is_err());
    }
}
