//! Generated scenario files read back through the ingestion pipeline.

use std::collections::BTreeMap;

use safespeed::geo::read_network;
use safespeed::model::RainCodeTable;
use safespeed::pipeline::{
    parse_cv, parse_rwis, prepare, read_windows, write_samples, write_windows, FeatureEncoder,
    FeatureSchema, PrepareOptions,
};
use safespeed::synth::{generate, read_truth, simulate, CountRange, ScenarioConfig, DECOY_PREFIX};

fn config() -> ScenarioConfig {
    ScenarioConfig {
        n_days: 2,
        decoy_fraction: 0.1,
        vehicles_per_window: CountRange { min: 0, max: 6 },
        utc_offset_minutes: 120,
        rwis_gaps: vec![5, 6, 200],
        ..Default::default()
    }
}

#[test]
fn decoys_rejected_and_counts_balance() {
    let dir = tempfile::tempdir().unwrap();
    let c = config();
    let m = generate(&c, dir.path()).unwrap();
    let table = RainCodeTable::default();
    let cv = parse_cv(&m.cv).unwrap();
    let rwis = parse_rwis(&m.rwis, &table).unwrap();
    let net = read_network(&m.network).unwrap();
    assert_eq!(cv.report.dropped, 0);
    assert_eq!(rwis.report.dropped, 0);
    assert_eq!(rwis.report.unknown_rain_states, 0);
    assert_eq!(rwis.items.len(), 2 * 144 - 3);
    assert_eq!(net.segments.len(), 6);

    let encoder = FeatureEncoder::new(FeatureSchema::default(), table).unwrap();
    let prepared = prepare(
        &cv,
        &rwis,
        &net.segments,
        &encoder,
        PrepareOptions::default(),
    )
    .unwrap();
    let s = prepared.summary;
    assert_eq!(s.segments_excluded, 2);
    assert_eq!(s.points_unmatched, m.n_decoys);
    assert_eq!(s.points_matched + m.n_decoys, m.n_points);
    assert_eq!(s.vehicle_samples, m.n_vehicles);
    assert_eq!(
        s.samples_emitted,
        s.vehicle_samples - s.samples_dropped_no_weather
    );
    assert!(s.windows_dropped_no_weather >= 1);
    for r in &prepared.records {
        assert_eq!(r.vehicle_count, r.samples.len());
        assert!(r.observed_q25 <= r.observed_q50 && r.observed_q50 <= r.observed_q75);
        assert!(r
            .samples
            .iter()
            .all(|x| !x.journey_id.starts_with(DECOY_PREFIX) && !x.journey_id.starts_with('d')));
    }
}

#[test]
fn vehicle_speeds_survive_the_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = config();
    let m = generate(&c, dir.path()).unwrap();
    let scenario = simulate(&c).unwrap();
    let table = RainCodeTable::default();
    let cv = parse_cv(&m.cv).unwrap();
    let rwis = parse_rwis(&m.rwis, &table).unwrap();
    let net = read_network(&m.network).unwrap();
    let encoder = FeatureEncoder::new(FeatureSchema::default(), table).unwrap();
    let prepared = prepare(
        &cv,
        &rwis,
        &net.segments,
        &encoder,
        PrepareOptions::default(),
    )
    .unwrap();

    // Window means recomputed straight from the simulated fixes.
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for p in scenario
        .cv
        .iter()
        .filter(|p| !scenario.decoys.contains(&p.data_point_id))
    {
        let e = sums.entry(&p.journey_id).or_default();
        e.0 += p.speed_kmh * 0.621371;
        e.1 += 1;
    }
    let mut checked = 0;
    for r in &prepared.records {
        for s in &r.samples {
            let (sum, n) = sums[s.journey_id.as_str()];
            assert_eq!(s.n_points, n);
            assert!((s.mean_speed_mph - sum / n as f64).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 500);

    let truth = read_truth(std::fs::File::open(&m.truth).unwrap()).unwrap();
    assert_eq!(truth.len(), 288);
    let regimes: BTreeMap<i64, _> = truth.iter().map(|t| (t.window_index, t)).collect();
    assert!(prepared
        .records
        .iter()
        .all(|r| regimes.contains_key(&r.window_index)));

    let mut w = Vec::new();
    let mut s = Vec::new();
    write_windows(&mut w, encoder.column_names(), &prepared.records).unwrap();
    write_samples(&mut s, &prepared.records).unwrap();
    let back = read_windows(w.as_slice(), s.as_slice()).unwrap();
    assert_eq!(back.records, prepared.records);
    assert_eq!(back.feature_names, encoder.column_names());
}
