//! Interval and point metrics, the two history-free and history-only
//! baselines, and report writers.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::WeatherGroup;
use crate::pipeline::WindowRecord;
use crate::scalar::Scalar;
use crate::stats::quartiles;

fn check_interval<T: Scalar>(l: T, u: T) -> Result<()> {
    if l <= u {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "interval [{l}, {u}] has lower bound above upper"
        )))
    }
}

fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count fits the scalar type")
}

/// Fraction of observations inside their closed interval.
pub fn picp<T: Scalar>(observations: &[(T, (T, T))]) -> Result<T> {
    if observations.is_empty() {
        return Err(Error::validation("coverage of an empty observation set"));
    }
    let mut hits = 0;
    for &(y, (l, u)) in observations {
        check_interval(l, u)?;
        if l <= y && y <= u {
            hits += 1;
        }
    }
    Ok(count::<T>(hits) / count(observations.len()))
}

/// Mean interval width.
pub fn mpiw<T: Scalar>(intervals: &[(T, T)]) -> Result<T> {
    if intervals.is_empty() {
        return Err(Error::validation("width of an empty interval set"));
    }
    let mut total = T::zero();
    for &(l, u) in intervals {
        check_interval(l, u)?;
        total = total + (u - l);
    }
    Ok(total / count(intervals.len()))
}

/// Mean absolute error over `(observed, predicted)` pairs.
pub fn mae<T: Scalar>(pairs: &[(T, T)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::validation("error of an empty prediction set"));
    }
    let total: T = pairs.iter().map(|&(y, p)| (y - p).abs()).sum();
    Ok(total / count(pairs.len()))
}

/// Percentage of pairs whose absolute error is at most `delta`.
pub fn threshold_accuracy<T: Scalar>(pairs: &[(T, T)], delta: T) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::validation("accuracy of an empty prediction set"));
    }
    if !(delta >= T::zero()) {
        return Err(Error::validation(format!(
            "tolerance must be >= 0, got {delta}"
        )));
    }
    let within = pairs
        .iter()
        .filter(|&&(y, p)| (y - p).abs() <= delta)
        .count();
    Ok(T::lit(100.0) * count::<T>(within) / count(pairs.len()))
}

/// Fixed band around the posted limit, with the limit as point predictor.
pub fn posted_band<T: Scalar>(v_law: T, pct: T) -> Result<((T, T), T)> {
    if !(v_law >= T::zero()) || !(pct >= T::zero() && pct <= T::one()) {
        return Err(Error::validation(format!(
            "bad posted band ({v_law}, {pct})"
        )));
    }
    let half = v_law * pct;
    Ok(((v_law - half, v_law + half), v_law))
}

/// Quartiles of the vehicle speeds pooled over windows `[target - n, target - 1]`.
///
/// `history` must be sorted by window index. Returns `None` when no vehicle
/// was seen in that span.
pub fn rolling_iqr(
    history: &[WindowRecord],
    target_index: i64,
    n: usize,
) -> Result<Option<(f64, f64, f64)>> {
    if n < 1 {
        return Err(Error::validation("rolling window count must be >= 1"));
    }
    let from = target_index - n as i64;
    let start = history.partition_point(|r| r.window_index < from);
    let pooled: Vec<f64> = history[start..]
        .iter()
        .take_while(|r| r.window_index < target_index)
        .flat_map(|r| r.speeds())
        .collect();
    if pooled.is_empty() {
        return Ok(None);
    }
    quartiles(&pooled).map(Some)
}

/// Interval and median prediction for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPrediction {
    pub q50: f64,
    pub low: f64,
    pub high: f64,
}

/// An observed window ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredWindow {
    pub window_index: i64,
    pub group: WeatherGroup,
    pub vehicle_speeds: Vec<f64>,
    pub observed_q50: f64,
}

impl ScoredWindow {
    pub fn from_record(r: &WindowRecord, group: WeatherGroup) -> Self {
        ScoredWindow {
            window_index: r.window_index,
            group,
            vehicle_speeds: r.speeds().collect(),
            observed_q50: r.observed_q50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Vehicle-level coverage of the interval, as a fraction.
    pub picp_50: f64,
    /// Window-level mean interval width.
    pub mpiw_mph: f64,
    /// Window-level error of the median against the observed median.
    pub mae_q50_mph: f64,
    /// `(delta, fraction of windows within delta)`, in the order requested.
    pub accuracy_at: Vec<(f64, f64)>,
    pub n_vehicle_samples: usize,
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: Metrics,
    pub by_weather: BTreeMap<WeatherGroup, Metrics>,
    /// Windows the predictor could not score (rolling baseline without history).
    pub n_excluded: usize,
}

fn metrics(
    windows: &[&ScoredWindow],
    preds: &BTreeMap<i64, WindowPrediction>,
    deltas: &[f64],
) -> Result<Metrics> {
    let mut vehicles = Vec::new();
    let mut intervals = Vec::with_capacity(windows.len());
    let mut medians = Vec::with_capacity(windows.len());
    for w in windows {
        let p = preds[&w.window_index];
        vehicles.extend(w.vehicle_speeds.iter().map(|&y| (y, (p.low, p.high))));
        intervals.push((p.low, p.high));
        medians.push((w.observed_q50, p.q50));
    }
    let accuracy_at = deltas
        .iter()
        .map(|&d| Ok((d, threshold_accuracy(&medians, d)? / 100.0)))
        .collect::<Result<_>>()?;
    Ok(Metrics {
        picp_50: picp(&vehicles)?,
        mpiw_mph: mpiw(&intervals)?,
        mae_q50_mph: mae(&medians)?,
        accuracy_at,
        n_vehicle_samples: vehicles.len(),
        n_windows: windows.len(),
    })
}

/// Scores predictions against observed windows, overall and per weather group.
///
/// Every window needs a prediction and every prediction a window.
pub fn evaluate(
    windows: &[ScoredWindow],
    predictions: &BTreeMap<i64, WindowPrediction>,
    deltas: &[f64],
) -> Result<EvalReport> {
    let missing: Vec<i64> = windows
        .iter()
        .map(|w| w.window_index)
        .filter(|i| !predictions.contains_key(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "no prediction for windows {missing:?}"
        )));
    }
    if predictions.len() != windows.len() {
        let known: std::collections::BTreeSet<i64> =
            windows.iter().map(|w| w.window_index).collect();
        let extra: Vec<i64> = predictions
            .keys()
            .filter(|k| !known.contains(k))
            .copied()
            .collect();
        return Err(Error::validation(format!(
            "predictions for unknown windows {extra:?}"
        )));
    }
    if let Some(w) = windows.iter().find(|w| w.vehicle_speeds.is_empty()) {
        return Err(Error::validation(format!(
            "window {} has no vehicle samples",
            w.window_index
        )));
    }
    let all: Vec<&ScoredWindow> = windows.iter().collect();
    let overall = metrics(&all, predictions, deltas)?;
    let mut grouped: BTreeMap<WeatherGroup, Vec<&ScoredWindow>> = BTreeMap::new();
    for w in windows {
        grouped.entry(w.group).or_default().push(w);
    }
    let by_weather = grouped
        .into_iter()
        .map(|(g, ws)| Ok((g, metrics(&ws, predictions, deltas)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        overall,
        by_weather,
        n_excluded: 0,
    })
}

/// Posted-band predictions for every window.
pub fn posted_predictions(
    windows: &[ScoredWindow],
    v_law: f64,
    pct: f64,
) -> Result<BTreeMap<i64, WindowPrediction>> {
    let ((low, high), q50) = posted_band(v_law, pct)?;
    Ok(windows
        .iter()
        .map(|w| (w.window_index, WindowPrediction { q50, low, high }))
        .collect())
}

/// Rolling-IQR predictions for each target window, plus the targets that
/// had no history and were left out.
pub fn rolling_predictions(
    history: &[WindowRecord],
    targets: &[ScoredWindow],
    n: usize,
) -> Result<(BTreeMap<i64, WindowPrediction>, Vec<i64>)> {
    let mut preds = BTreeMap::new();
    let mut excluded = Vec::new();
    for t in targets {
        match rolling_iqr(history, t.window_index, n)? {
            Some((q25, q50, q75)) => {
                preds.insert(
                    t.window_index,
                    WindowPrediction {
                        q50,
                        low: q25,
                        high: q75,
                    },
                );
            }
            None => excluded.push(t.window_index),
        }
    }
    Ok((preds, excluded))
}

fn delta_label(d: f64) -> String {
    format!("accuracy_{d}")
}

fn metric_rows(m: &Metrics) -> Vec<(&'static str, String, String)> {
    let mut rows = vec![
        ("vehicle", "picp_50".to_string(), m.picp_50.to_string()),
        (
            "vehicle",
            "n_vehicle_samples".to_string(),
            m.n_vehicle_samples.to_string(),
        ),
        ("window", "mpiw_mph".to_string(), m.mpiw_mph.to_string()),
        (
            "window",
            "mae_q50_mph".to_string(),
            m.mae_q50_mph.to_string(),
        ),
    ];
    for &(d, a) in &m.accuracy_at {
        rows.push(("window", delta_label(d), a.to_string()));
    }
    rows.push(("window", "n_windows".to_string(), m.n_windows.to_string()));
    rows
}

/// One row per (model, scope, weather group, metric).
pub fn write_report_csv<W: Write>(out: W, reports: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "scope", "weather", "metric", "value"])?;
    for (model, report) in reports {
        let groups = std::iter::once(("all", &report.overall))
            .chain(report.by_weather.iter().map(|(g, m)| (g.as_str(), m)));
        for (weather, m) in groups {
            for (scope, metric, value) in metric_rows(m) {
                w.write_record([*model, scope, weather, metric.as_str(), value.as_str()])?;
            }
        }
        w.write_record([
            *model,
            "window",
            "all",
            "n_excluded",
            &report.n_excluded.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Model-by-model comparison over all windows.
pub fn write_comparison_csv<W: Write>(out: W, reports: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let deltas: Vec<f64> = reports
        .first()
        .map(|(_, r)| r.overall.accuracy_at.iter().map(|a| a.0).collect())
        .unwrap_or_default();
    let mut header = vec![
        "model".to_string(),
        "picp_50".into(),
        "mpiw_mph".into(),
        "mae_q50_mph".into(),
    ];
    header.extend(deltas.iter().map(|&d| delta_label(d)));
    header.extend([
        "n_windows".into(),
        "n_vehicle_samples".into(),
        "n_excluded".into(),
    ]);
    w.write_record(&header)?;
    for (model, r) in reports {
        let m = &r.overall;
        let mut row = vec![
            model.to_string(),
            format!("{:.4}", m.picp_50),
            format!("{:.2}", m.mpiw_mph),
            format!("{:.2}", m.mae_q50_mph),
        ];
        row.extend(m.accuracy_at.iter().map(|a| format!("{:.4}", a.1)));
        row.extend([
            m.n_windows.to_string(),
            m.n_vehicle_samples.to_string(),
            r.n_excluded.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<comparison>", e))?;
    Ok(())
}

/// Fixed-width text table for reading in a terminal.
pub fn write_report_table<W: Write>(
    mut out: W,
    reports: &[(&str, &EvalReport)],
) -> std::io::Result<()> {
    let deltas: Vec<f64> = reports
        .first()
        .map(|(_, r)| r.overall.accuracy_at.iter().map(|a| a.0).collect())
        .unwrap_or_default();
    let mut head = format!(
        "{:<16} {:<8} {:>8} {:>8} {:>8}",
        "model", "weather", "PICP%", "MPIW", "MAE"
    );
    for d in &deltas {
        head.push_str(&format!(" {:>8}", format!("<={d}%")));
    }
    head.push_str(&format!(" {:>8} {:>9}", "windows", "vehicles"));
    writeln!(out, "{head}")?;
    writeln!(out, "{}", "-".repeat(head.len()))?;
    for (model, r) in reports {
        let groups = std::iter::once(("all", &r.overall))
            .chain(r.by_weather.iter().map(|(g, m)| (g.as_str(), m)));
        for (weather, m) in groups {
            let mut line = format!(
                "{:<16} {:<8} {:>8.2} {:>8.2} {:>8.2}",
                model,
                weather,
                100.0 * m.picp_50,
                m.mpiw_mph,
                m.mae_q50_mph
            );
            for a in &m.accuracy_at {
                line.push_str(&format!(" {:>8.2}", 100.0 * a.1));
            }
            line.push_str(&format!(" {:>8} {:>9}", m.n_windows, m.n_vehicle_samples));
            writeln!(out, "{line}")?;
        }
        if r.n_excluded > 0 {
            writeln!(
                out,
                "{:<16} {} windows without history excluded",
                model, r.n_excluded
            )?;
        }
    }
    Ok(())
}
