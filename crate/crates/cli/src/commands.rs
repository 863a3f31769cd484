//! The five pipeline steps. Each one reads its inputs, computes everything,
//! then moves its outputs into place; a failure leaves earlier outputs
//! untouched.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tempfile::NamedTempFile;

use safespeed::evaluation::{
    evaluate, posted_predictions, rolling_predictions, write_comparison_csv, write_report_csv,
    write_report_table, EvalReport, ScoredWindow, WindowPrediction,
};
use safespeed::geo::read_network;
use safespeed::model::{RainCodeTable, RwisObservation};
use safespeed::pipeline::{
    parse_cv, parse_rwis, prepare, read_windows, window_index, write_samples, write_windows,
    FeatureEncoder, WindowRecord, WindowTable,
};
use safespeed::qrf::{read_forest, write_forest, Dataset, Forest};
use safespeed::safety::{fuse, solve_v_phys};
use safespeed::synth;

use crate::config::{require, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Prepare,
    Train,
    Recommend,
    Evaluate,
}

/// Runs `cmd` on a pool sized by `config.threads` and returns a short
/// summary for the terminal.
pub fn run(cmd: Command, config: &RunConfig) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::new("runtime", Some("threads".into()), e.to_string()))?;
    pool.install(|| match cmd {
        Command::Synth => cmd_synth(config),
        Command::Prepare => cmd_prepare(config),
        Command::Train => cmd_train(config),
        Command::Recommend => cmd_recommend(config),
        Command::Evaluate => cmd_evaluate(config),
    })
}

/// Output files written to temporaries beside their targets and renamed
/// into place together by [`Staged::commit`].
#[derive(Default)]
struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    fn write(
        &mut self,
        target: PathBuf,
        body: impl FnOnce(&mut BufWriter<&File>) -> CliResult<()>,
    ) -> CliResult<()> {
        let dir = target
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush().map_err(|e| CliError::io(&target, e))?;
        }
        self.files.push((tmp, target));
        Ok(())
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut done = Vec::new();
        for (tmp, target) in self.files {
            tmp.persist(&target)
                .map_err(|e| CliError::io(&target, e.error))?;
            done.push(target);
        }
        Ok(done)
    }
}

fn listing(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| format!("wrote {}", p.display()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn cmd_synth(config: &RunConfig) -> CliResult<String> {
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let scratch = tempfile::tempdir_in(&out).map_err(|e| CliError::io(&out, e))?;
    let m = synth::generate(&config.synth, scratch.path())?;
    let cv = config.cv_path();
    let truth = cv.with_file_name("truth.csv");
    let mut staged = Staged::default();
    for (from, to) in [
        (&m.cv, cv),
        (&m.rwis, config.rwis_path()),
        (&m.network, config.network_path()),
        (&m.truth, truth),
    ] {
        let bytes = std::fs::read(from).map_err(|e| CliError::io(from, e))?;
        staged.write(to.clone(), |w| {
            w.write_all(&bytes).map_err(|e| CliError::io(&to, e))
        })?;
    }
    let written = staged.commit()?;
    Ok(format!(
        "{}\n{} windows, {} points ({} decoys), {} vehicles",
        listing(&written),
        m.n_windows,
        m.n_points,
        m.n_decoys,
        m.n_vehicles
    ))
}

fn encoder(config: &RunConfig) -> CliResult<FeatureEncoder> {
    FeatureEncoder::new(config.feature_schema()?, config.rain_table()?)
        .map_err(|e| CliError::from(e).at("paths.feature_schema"))
}

pub fn cmd_prepare(config: &RunConfig) -> CliResult<String> {
    let (cv_path, rwis_path, net_path) =
        (config.cv_path(), config.rwis_path(), config.network_path());
    require(&cv_path, "paths.cv")?;
    require(&rwis_path, "paths.rwis")?;
    require(&net_path, "paths.network")?;
    let encoder = encoder(config)?;
    let table = config.rain_table()?;
    let cv = parse_cv(&cv_path).map_err(|e| CliError::from(e).at("paths.cv"))?;
    let rwis = parse_rwis(&rwis_path, &table).map_err(|e| CliError::from(e).at("paths.rwis"))?;
    let net = read_network(&net_path).map_err(|e| CliError::from(e).at("paths.network"))?;
    let prepared = prepare(
        &cv,
        &rwis,
        &net.segments,
        &encoder,
        config.prepare_options(),
    )?;

    let mut staged = Staged::default();
    staged.write(config.windows_path(), |w| {
        Ok(write_windows(w, encoder.column_names(), &prepared.records)?)
    })?;
    staged.write(config.samples_path(), |w| {
        Ok(write_samples(w, &prepared.records)?)
    })?;
    let summary_path = config.out_file("prepare_summary.csv");
    staged.write(summary_path.clone(), |w| {
        let mut rows = prepared.summary.rows();
        rows.push(("network_features_skipped", net.skipped));
        writeln!(w, "metric,value").map_err(|e| CliError::io(&summary_path, e))?;
        for (k, v) in rows {
            writeln!(w, "{k},{v}").map_err(|e| CliError::io(&summary_path, e))?;
        }
        Ok(())
    })?;
    let written = staged.commit()?;
    let s = prepared.summary;
    Ok(format!(
        "{}\n{} windows, {} vehicle samples; {} of {} points matched",
        listing(&written),
        s.windows_emitted,
        s.samples_emitted,
        s.points_matched,
        s.cv_rows - s.cv_dropped_invalid
    ))
}

fn load_windows(config: &RunConfig) -> CliResult<WindowTable> {
    let (wp, sp) = (config.windows_path(), config.samples_path());
    require(&wp, "paths.windows")?;
    require(&sp, "paths.samples")?;
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| CliError::io(p, e))
    };
    let mut table =
        read_windows(open(&wp)?, open(&sp)?).map_err(|e| CliError::from(e).at("paths.windows"))?;
    table.records.sort_by_key(|r| r.window_index);
    Ok(table)
}

/// Training and test windows, both in time order.
pub fn split<'a>(
    config: &RunConfig,
    records: &'a [WindowRecord],
) -> CliResult<(Vec<&'a WindowRecord>, Vec<&'a WindowRecord>)> {
    let (train, test): (Vec<&WindowRecord>, Vec<&WindowRecord>) = if config.split.train.is_empty() {
        let cut = (records.len() as f64 * config.split.train_fraction).floor() as usize;
        let (a, b) = records.split_at(cut.min(records.len()));
        let (a, b): (Vec<_>, Vec<_>) = (a.iter().collect(), b.iter().collect());
        if let (Some(last), Some(first)) = (a.last(), b.first()) {
            assert!(
                last.window_index < first.window_index,
                "cut-point split must separate train from test"
            );
        }
        (a, b)
    } else {
        records.iter().partition(|r| {
            let t = r.window_start();
            config
                .split
                .train
                .iter()
                .any(|span| span.start <= t && t < span.end)
        })
    };
    if train.is_empty() {
        return Err(CliError::config(
            "split",
            "no window falls in the training split",
        ));
    }
    if test.is_empty() {
        return Err(CliError::config("split", "no window is left for testing"));
    }
    Ok((train, test))
}

pub fn cmd_train(config: &RunConfig) -> CliResult<String> {
    let table = load_windows(config)?;
    let (train, _) = split(config, &table.records)?;
    let rows: Vec<(&[f64], f64)> = train
        .iter()
        .flat_map(|r| {
            r.samples
                .iter()
                .map(move |s| (r.features.0.as_slice(), s.mean_speed_mph))
        })
        .collect();
    let data = Dataset::from_rows(rows.iter().copied())?;
    let forest = Forest::fit(&data, config.forest, config.seed)?;
    let path = config.model_path();
    let mut staged = Staged::default();
    staged.write(path.clone(), |w| {
        write_forest(&forest, w).map_err(|e| CliError::io(&path, e))
    })?;
    let written = staged.commit()?;
    Ok(format!(
        "{}\n{} trees on {} vehicle rows from {} windows",
        listing(&written),
        forest.trees().len(),
        data.len(),
        train.len()
    ))
}

fn load_model(config: &RunConfig, n_features: usize) -> CliResult<Forest<f64>> {
    let path = config.model_path();
    require(&path, "paths.model")?;
    let f = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let forest = read_forest(BufReader::new(f)).map_err(|e| CliError::from(e).at("paths.model"))?;
    if forest.n_features() != n_features {
        return Err(CliError::new(
            "validation",
            Some("paths.model".into()),
            format!(
                "model expects {} features, window file has {n_features}",
                forest.n_features()
            ),
        ));
    }
    Ok(forest)
}

fn load_weather(
    config: &RunConfig,
    table: &RainCodeTable,
) -> CliResult<HashMap<i64, RwisObservation>> {
    let path = config.rwis_path();
    require(&path, "paths.rwis")?;
    let parsed = parse_rwis(&path, table).map_err(|e| CliError::from(e).at("paths.rwis"))?;
    Ok(parsed
        .items
        .into_iter()
        .map(|o| (window_index(o.observed_at), o))
        .collect())
}

fn weather_for(weather: &HashMap<i64, RwisObservation>, w: i64) -> CliResult<&RwisObservation> {
    weather.get(&w).ok_or_else(|| {
        CliError::new(
            "validation",
            Some("paths.rwis".into()),
            format!("no station record for window {w}"),
        )
    })
}

pub fn cmd_recommend(config: &RunConfig) -> CliResult<String> {
    let table = load_windows(config)?;
    let (_, test) = split(config, &table.records)?;
    let forest = load_model(config, table.feature_names.len())?;
    let weather = load_weather(config, &config.rain_table()?)?;
    let physics = config.physics.params();
    let rows: Vec<[String; 11]> = test
        .par_iter()
        .map(|r| -> CliResult<[String; 11]> {
            let (q25, q50, q75) = forest.predict_window(&r.features.0)?;
            let obs = weather_for(&weather, r.window_index)?;
            let env = solve_v_phys(obs.grip, obs.visibility_m, &physics)?;
            let s = fuse(q25, q75, env.v_phys_mph, config.v_law_mph)?;
            Ok([
                r.window_start().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                q25.to_string(),
                q50.to_string(),
                q75.to_string(),
                s.v_phys.to_string(),
                s.v_law.to_string(),
                s.v_low.to_string(),
                s.v_high.to_string(),
                r.observed_q25.to_string(),
                r.observed_q50.to_string(),
                r.observed_q75.to_string(),
            ])
        })
        .collect::<CliResult<_>>()?;

    let path = config.out_file("recommendations.csv");
    let mut staged = Staged::default();
    staged.write(path.clone(), |w| {
        let mut out = csv::Writer::from_writer(w);
        let err =
            |e: csv::Error| CliError::new("io", Some(path.display().to_string()), e.to_string());
        out.write_record([
            "window_start",
            "q25",
            "q50",
            "q75",
            "v_phys",
            "v_law",
            "v_low",
            "v_high",
            "observed_q25",
            "observed_q50",
            "observed_q75",
        ])
        .map_err(err)?;
        for row in &rows {
            out.write_record(row).map_err(err)?;
        }
        out.flush().map_err(|e| CliError::io(&path, e))
    })?;
    let written = staged.commit()?;
    Ok(format!(
        "{}\n{} test windows",
        listing(&written),
        rows.len()
    ))
}

fn posted_name(pct: f64) -> String {
    format!("posted_{}pct", (pct * 100.0).round())
}

pub fn cmd_evaluate(config: &RunConfig) -> CliResult<String> {
    let table = load_windows(config)?;
    let (_, test) = split(config, &table.records)?;
    let rain = config.rain_table()?;
    let weather = load_weather(config, &rain)?;
    let scored: Vec<ScoredWindow> = test
        .iter()
        .map(|r| {
            Ok(ScoredWindow::from_record(
                r,
                rain.group(weather_for(&weather, r.window_index)?.rain_state),
            ))
        })
        .collect::<CliResult<_>>()?;
    let deltas = &config.deltas_mph;

    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    if config.model_path().is_file() {
        let forest = load_model(config, table.feature_names.len())?;
        let preds: BTreeMap<i64, WindowPrediction> = test
            .par_iter()
            .map(|r| {
                let (q25, q50, q75) = forest.predict_window(&r.features.0)?;
                Ok((
                    r.window_index,
                    WindowPrediction {
                        q50,
                        low: q25,
                        high: q75,
                    },
                ))
            })
            .collect::<CliResult<_>>()?;
        reports.push(("qrf".into(), evaluate(&scored, &preds, deltas)?));
    }
    if config.baselines.posted {
        let pct = config.baselines.posted_pct;
        let preds = posted_predictions(&scored, config.v_law_mph, pct)?;
        reports.push((posted_name(pct), evaluate(&scored, &preds, deltas)?));
    }
    for &n in &config.baselines.rolling_windows {
        let (preds, excluded) = rolling_predictions(&table.records, &scored, n)?;
        let kept: Vec<ScoredWindow> = scored
            .iter()
            .filter(|w| preds.contains_key(&w.window_index))
            .cloned()
            .collect();
        if kept.is_empty() {
            return Err(CliError::new(
                "validation",
                Some("baselines.rolling_windows".into()),
                format!("no test window has history for N = {n}"),
            ));
        }
        let mut report = evaluate(&kept, &preds, deltas)?;
        report.n_excluded = excluded.len();
        reports.push((format!("rolling_iqr_{n}"), report));
    }
    if reports.is_empty() {
        return Err(CliError::config(
            "baselines",
            "nothing to evaluate: no model file and every baseline disabled",
        ));
    }

    let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let mut text = Vec::new();
    write_report_table(&mut text, &refs).expect("writing to memory");
    let mut staged = Staged::default();
    staged.write(config.out_file("report.csv"), |w| {
        Ok(write_report_csv(w, &refs)?)
    })?;
    staged.write(config.out_file("comparison.csv"), |w| {
        Ok(write_comparison_csv(w, &refs)?)
    })?;
    let txt_path = config.out_file("report.txt");
    staged.write(txt_path.clone(), |w| {
        w.write_all(&text).map_err(|e| CliError::io(&txt_path, e))
    })?;
    let written = staged.commit()?;
    Ok(format!(
        "{}\n{}",
        listing(&written),
        String::from_utf8_lossy(&text).trim_end()
    ))
}
