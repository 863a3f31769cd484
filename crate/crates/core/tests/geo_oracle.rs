//! Buffer matching against a dense-polygon point-in-polygon oracle.
//!
//! Each buffer is the union of one rectangle per polyline piece and one disk
//! per vertex. Disks are bracketed by an inscribed and a circumscribed
//! 4096-gon, so a point inside some inner shape must match and a point
//! outside every outer shape must not. Points in the sliver between the two
//! are skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safespeed::geo::MatchIndex;
use safespeed::model::RoadSegment;

const SIDES: usize = 4096;

type Poly = Vec<(f64, f64)>;

fn contains(poly: &Poly, (x, y): (f64, f64)) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn disk(c: (f64, f64), r: f64) -> Poly {
    (0..SIDES)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / SIDES as f64;
            (c.0 + r * a.cos(), c.1 + r * a.sin())
        })
        .collect()
}

fn rect(a: (f64, f64), b: (f64, f64), r: f64) -> Option<Poly> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return None;
    }
    let (nx, ny) = (-dy / len * r, dx / len * r);
    Some(vec![
        (a.0 + nx, a.1 + ny),
        (b.0 + nx, b.1 + ny),
        (b.0 - nx, b.1 - ny),
        (a.0 - nx, a.1 - ny),
    ])
}

struct Shapes {
    id: String,
    inner: Vec<Poly>,
    outer: Vec<Poly>,
}

fn project(p: (f64, f64), origin: (f64, f64)) -> (f64, f64) {
    let ft = 3.28084;
    let x = (p.1 - origin.1) * 111_320.0 * origin.0.to_radians().cos() * ft;
    let y = (p.0 - origin.0) * 110_540.0 * ft;
    (x, y)
}

fn shapes(seg: &RoadSegment, origin: (f64, f64)) -> Shapes {
    let r = seg.lanes as f64 * 6.0;
    let pts: Vec<(f64, f64)> = seg.polyline.iter().map(|&v| project(v, origin)).collect();
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for w in pts.windows(2) {
        inner.extend(rect(w[0], w[1], r * (1.0 - 1e-9)));
        outer.extend(rect(w[0], w[1], r * (1.0 + 1e-9) + 1e-9));
    }
    let circum = r / (std::f64::consts::PI / SIDES as f64).cos();
    for &v in &pts {
        inner.push(disk(v, r * (1.0 - 1e-9)));
        outer.push(disk(v, circum * (1.0 + 1e-9) + 1e-9));
    }
    Shapes {
        id: seg.osm_id.clone(),
        inner,
        outer,
    }
}

fn random_network(rng: &mut ChaCha8Rng) -> Vec<RoadSegment> {
    let (lat0, lon0) = (41.0 + rng.gen::<f64>(), -94.0 + rng.gen::<f64>());
    (0..rng.gen_range(2..5))
        .map(|k| {
            let mut lat = lat0 + rng.gen_range(-0.002..0.002);
            let mut lon = lon0 + rng.gen_range(-0.002..0.002);
            let n = rng.gen_range(2..6);
            let polyline = (0..n)
                .map(|_| {
                    let v = (lat, lon);
                    lat += rng.gen_range(-0.0008..0.0008);
                    lon += rng.gen_range(-0.0008..0.0008);
                    v
                })
                .collect();
            RoadSegment {
                osm_id: format!("s{k}"),
                lanes: rng.gen_range(1..6),
                highway_class: "motorway".into(),
                maxspeed_mph: 55.0,
                polyline,
                name: String::new(),
            }
        })
        .collect()
}

#[test]
fn matcher_agrees_with_polygon_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut decided, mut skipped, mut inside) = (0, 0, 0);
    while decided < 1500 {
        let net = random_network(&mut rng);
        let index = MatchIndex::new(&net).unwrap();
        let origin = index.origin();
        let all: Vec<Shapes> = net.iter().map(|s| shapes(s, origin)).collect();
        for _ in 0..100 {
            // aim near a random vertex so the buffer boundary is well sampled
            let seg = &net[rng.gen_range(0..net.len())];
            let v = seg.polyline[rng.gen_range(0..seg.polyline.len())];
            let lat = v.0 + rng.gen_range(-0.0004..0.0004) * rng.gen::<f64>();
            let lon = v.1 + rng.gen_range(-0.0004..0.0004) * rng.gen::<f64>();
            let q = project((lat, lon), origin);

            let in_inner: Vec<&str> = all
                .iter()
                .filter(|s| s.inner.iter().any(|p| contains(p, q)))
                .map(|s| s.id.as_str())
                .collect();
            let in_outer: Vec<&str> = all
                .iter()
                .filter(|s| s.outer.iter().any(|p| contains(p, q)))
                .map(|s| s.id.as_str())
                .collect();
            let got = index.match_projected(&index.project(lat, lon), 1.0);
            if !in_inner.is_empty() {
                let id = got.unwrap_or_else(|| {
                    panic!("({lat}, {lon}) is inside {in_inner:?} but unmatched")
                });
                assert!(
                    in_outer.contains(&id),
                    "matched {id}, which does not contain the point"
                );
                if in_outer.len() == 1 {
                    assert_eq!(id, in_inner[0]);
                }
                inside += 1;
                decided += 1;
            } else if in_outer.is_empty() {
                assert_eq!(got, None, "({lat}, {lon}) is outside every buffer");
                decided += 1;
            } else {
                skipped += 1;
            }
        }
    }
    assert!(
        inside > 200 && decided - inside > 200,
        "inside {inside} of {decided}"
    );
    assert!(skipped * 100 < decided, "{skipped} ambiguous points");
}
