//! Buffer-based matching of GPS fixes to freeway centerlines.
//!
//! Points are projected into a local planar frame in feet, then tested
//! against a round-capped buffer around each centerline whose radius is half
//! the paved width (12 ft per lane).

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{CvPoint, RoadSegment};
use crate::scalar::Scalar;
use crate::units::FT_PER_M;

/// Interstate lane width in feet.
pub const LANE_WIDTH_FT: f64 = 12.0;
/// Meters per degree of latitude used by the local projection.
pub const M_PER_DEG_LAT: f64 = 110_540.0;
/// Meters per degree of longitude at the equator.
pub const M_PER_DEG_LON: f64 = 111_320.0;
/// Posted limit of the mainline network under study.
pub const TARGET_MAXSPEED_MPH: f64 = 55.0;

/// Half the paved width of a road with `lanes` lanes.
pub fn buffer_radius_ft<T: Scalar>(lanes: u32) -> Result<T> {
    if lanes < 1 {
        return Err(Error::validation("lane count must be >= 1"));
    }
    Ok(T::from_u32(lanes).unwrap() * T::lit(LANE_WIDTH_FT) / T::lit(2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint<T> {
    pub x_ft: T,
    pub y_ft: T,
}

impl<T: Scalar> ProjectedPoint<T> {
    pub fn new(x_ft: T, y_ft: T) -> Self {
        ProjectedPoint { x_ft, y_ft }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x_ft - other.x_ft).hypot(self.y_ft - other.y_ft)
    }
}

/// Equirectangular projection of `(lat, lon)` around `origin`, in feet.
pub fn project<T: Scalar>(point: (T, T), origin: (T, T)) -> ProjectedPoint<T> {
    let ft = T::lit(FT_PER_M);
    let y = (point.0 - origin.0) * T::lit(M_PER_DEG_LAT) * ft;
    let x = (point.1 - origin.1) * T::lit(M_PER_DEG_LON) * origin.0.to_radians().cos() * ft;
    ProjectedPoint::new(x, y)
}

/// Inverse of [`project`]; returns `(lat, lon)`.
pub fn unproject<T: Scalar>(p: ProjectedPoint<T>, origin: (T, T)) -> (T, T) {
    let ft = T::lit(FT_PER_M);
    let lat = origin.0 + p.y_ft / (T::lit(M_PER_DEG_LAT) * ft);
    let lon = origin.1 + p.x_ft / (T::lit(M_PER_DEG_LON) * origin.0.to_radians().cos() * ft);
    (lat, lon)
}

fn point_to_segment<T: Scalar>(
    p: &ProjectedPoint<T>,
    a: &ProjectedPoint<T>,
    b: &ProjectedPoint<T>,
) -> T {
    let dx = b.x_ft - a.x_ft;
    let dy = b.y_ft - a.y_ft;
    let len2 = dx * dx + dy * dy;
    if len2 == T::zero() {
        return p.distance(a);
    }
    let t = ((p.x_ft - a.x_ft) * dx + (p.y_ft - a.y_ft) * dy) / len2;
    let t = t.max(T::zero()).min(T::one());
    let foot = ProjectedPoint::new(a.x_ft + t * dx, a.y_ft + t * dy);
    p.distance(&foot)
}

/// Minimum distance from `p` to any edge of `polyline`.
pub fn point_to_polyline_ft<T: Scalar>(
    p: &ProjectedPoint<T>,
    polyline: &[ProjectedPoint<T>],
) -> Result<T> {
    if polyline.len() < 2 {
        return Err(Error::validation("polyline needs at least 2 vertices"));
    }
    Ok(polyline
        .windows(2)
        .map(|w| point_to_segment(p, &w[0], &w[1]))
        .fold(T::infinity(), T::min))
}

/// Ramps and links, or anything not posted at the target limit.
pub fn is_excluded(seg: &RoadSegment) -> bool {
    is_excluded_for(seg, TARGET_MAXSPEED_MPH)
}

pub fn is_excluded_for(seg: &RoadSegment, target_mph: f64) -> bool {
    let class = seg.highway_class.trim().to_ascii_lowercase();
    let ramp = class.ends_with("_link") || class == "ramp" || class.contains("ramp");
    ramp || seg.maxspeed_mph != target_mph
}

#[derive(Debug, Clone)]
struct IndexedSegment {
    id: String,
    radius_ft: f64,
    vertices: Vec<ProjectedPoint<f64>>,
    // bounding box, unpadded
    min: (f64, f64),
    max: (f64, f64),
}

/// Projected copy of a road network, ready for point queries.
#[derive(Debug, Clone)]
pub struct MatchIndex {
    origin: (f64, f64),
    segments: Vec<IndexedSegment>,
}

impl MatchIndex {
    /// Projects `segments` around the center of their bounding box.
    pub fn new(segments: &[RoadSegment]) -> Result<Self> {
        let origin = network_origin(segments)?;
        Self::with_origin(segments, origin)
    }

    pub fn with_origin(segments: &[RoadSegment], origin: (f64, f64)) -> Result<Self> {
        let mut out = Vec::with_capacity(segments.len());
        for seg in segments {
            seg.validate()?;
            let vertices: Vec<_> = seg.polyline.iter().map(|&v| project(v, origin)).collect();
            let (mut min, mut max) = (
                (f64::INFINITY, f64::INFINITY),
                (f64::NEG_INFINITY, f64::NEG_INFINITY),
            );
            for v in &vertices {
                min = (min.0.min(v.x_ft), min.1.min(v.y_ft));
                max = (max.0.max(v.x_ft), max.1.max(v.y_ft));
            }
            out.push(IndexedSegment {
                id: seg.osm_id.clone(),
                radius_ft: buffer_radius_ft(seg.lanes)?,
                vertices,
                min,
                max,
            });
        }
        Ok(MatchIndex {
            origin,
            segments: out,
        })
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn project(&self, lat: f64, lon: f64) -> ProjectedPoint<f64> {
        project((lat, lon), self.origin)
    }

    /// Nearest segment whose buffer contains `p`.
    pub fn match_point(&self, p: &CvPoint) -> Option<&str> {
        self.match_projected(&self.project(p.latitude, p.longitude), 1.0)
    }

    /// Like [`MatchIndex::match_point`] on a projected point, with every
    /// buffer radius multiplied by `radius_scale`.
    pub fn match_projected(&self, p: &ProjectedPoint<f64>, radius_scale: f64) -> Option<&str> {
        let mut best: Option<(f64, &str)> = None;
        for seg in &self.segments {
            let r = seg.radius_ft * radius_scale;
            if p.x_ft < seg.min.0 - r
                || p.x_ft > seg.max.0 + r
                || p.y_ft < seg.min.1 - r
                || p.y_ft > seg.max.1 + r
            {
                continue;
            }
            let d = point_to_polyline_ft(p, &seg.vertices).expect("validated polyline");
            if d > r {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && seg.id.as_str() < bid),
            };
            if better {
                best = Some((d, seg.id.as_str()));
            }
        }
        best.map(|(_, id)| id)
    }
}

/// One-off match that builds a throwaway index.
pub fn match_point<'a>(p: &CvPoint, segments: &'a [RoadSegment]) -> Result<Option<&'a str>> {
    let index = MatchIndex::new(segments)?;
    Ok(index
        .match_point(p)
        .and_then(|id| segments.iter().find(|s| s.osm_id == id))
        .map(|s| s.osm_id.as_str()))
}

fn network_origin(segments: &[RoadSegment]) -> Result<(f64, f64)> {
    let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
    for v in segments.iter().flat_map(|s| s.polyline.iter()) {
        lat = (lat.0.min(v.0), lat.1.max(v.0));
        lon = (lon.0.min(v.1), lon.1.max(v.1));
    }
    if !lat.0.is_finite() {
        return Err(Error::validation("road network has no vertices"));
    }
    Ok(((lat.0 + lat.1) / 2.0, (lon.0 + lon.1) / 2.0))
}

/// Result of reading a network file.
#[derive(Debug, Clone, Default)]
pub struct NetworkLoad {
    pub segments: Vec<RoadSegment>,
    /// Features skipped for missing or invalid geometry or lane count.
    pub skipped: usize,
}

pub fn read_network(path: &Path) -> Result<NetworkLoad> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

/// Parses a GeoJSON feature collection of centerlines.
///
/// OSM exports often carry list-valued or string-valued tags (`"2"`,
/// `["2", "3"]`, `"55 mph"`); those are normalized here.
pub fn parse_network(text: &str) -> Result<NetworkLoad> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::format("network", e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| {
            Error::format(
                "network",
                "expected a FeatureCollection with a features array",
            )
        })?;
    let mut load = NetworkLoad::default();
    for feature in features {
        let props = feature.get("properties").cloned().unwrap_or(Value::Null);
        let Some(id) = first_string(props.get("osmid")) else {
            load.skipped += 1;
            continue;
        };
        let lanes = tag_numbers(props.get("lanes"))
            .into_iter()
            .fold(f64::NAN, f64::max);
        if !(lanes >= 1.0) || lanes.fract() != 0.0 {
            load.skipped += 1;
            continue;
        }
        let highway = first_string(props.get("highway")).unwrap_or_default();
        let maxspeed = tag_numbers(props.get("maxspeed"))
            .first()
            .copied()
            .unwrap_or(f64::NAN);
        let name = first_string(props.get("name")).unwrap_or_default();
        let parts = match line_parts(feature.get("geometry")) {
            Some(p) => p,
            None => {
                load.skipped += 1;
                continue;
            }
        };
        let multi = parts.len() > 1;
        for (k, polyline) in parts.into_iter().enumerate() {
            let seg = RoadSegment {
                osm_id: if multi {
                    format!("{id}#{k}")
                } else {
                    id.clone()
                },
                lanes: lanes as u32,
                highway_class: highway.clone(),
                maxspeed_mph: maxspeed,
                polyline,
                name: name.clone(),
            };
            if seg.validate().is_err() {
                load.skipped += 1;
                continue;
            }
            load.segments.push(seg);
        }
    }
    Ok(load)
}

fn first_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(a) => a.iter().find_map(|x| first_string(Some(x))),
        _ => None,
    }
}

fn tag_numbers(v: Option<&Value>) -> Vec<f64> {
    fn leading_number(s: &str) -> Option<f64> {
        let s = s.trim();
        let end = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(s.len());
        s[..end].parse().ok()
    }
    match v {
        Some(Value::Number(n)) => n.as_f64().into_iter().collect(),
        Some(Value::String(s)) => leading_number(s).into_iter().collect(),
        Some(Value::Array(a)) => a.iter().flat_map(|x| tag_numbers(Some(x))).collect(),
        _ => Vec::new(),
    }
}

fn line_parts(geometry: Option<&Value>) -> Option<Vec<Vec<(f64, f64)>>> {
    let g = geometry?;
    let coords = g.get("coordinates")?;
    let line = |c: &Value| -> Option<Vec<(f64, f64)>> {
        c.as_array()?
            .iter()
            .map(|pair| {
                let p = pair.as_array()?;
                Some((p.get(1)?.as_f64()?, p.first()?.as_f64()?))
            })
            .collect()
    };
    match g.get("type")?.as_str()? {
        "LineString" => Some(vec![line(coords)?]),
        "MultiLineString" => coords.as_array()?.iter().map(line).collect(),
        _ => None,
    }
}

/// Serializes segments as a GeoJSON feature collection (lon/lat order).
pub fn network_to_geojson(segments: &[RoadSegment]) -> String {
    let features: Vec<Value> = segments
        .iter()
        .map(|s| {
            json!({
                "type": "Feature",
                "properties": {
                    "osmid": s.osm_id,
                    "lanes": s.lanes,
                    "highway": s.highway_class,
                    "maxspeed": s.maxspeed_mph,
                    "name": s.name,
                },
                "geometry": {
                    "type": "LineString",
                    "coordinates": s.polyline.iter().map(|&(lat, lon)| vec![lon, lat]).collect::<Vec<_>>(),
                }
            })
        })
        .collect();
    let fc = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&fc).expect("json values always serialize")
}
