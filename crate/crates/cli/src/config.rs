//! Run configuration read from a TOML file.
//!
//! Relative paths resolve against the directory holding the config file.
//! Unset data paths default to files under `output_dir`, so a config with
//! only a `[synth]` section drives the whole pipeline.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use safespeed::model::{RainCodeEntry, RainCodeTable};
use safespeed::pipeline::{FeatureSchema, PrepareOptions};
use safespeed::qrf::ForestParams;
use safespeed::safety::{
    PhysicsParams, DEFAULT_T_REACTION_S, DEFAULT_V_LAW_MPH, G_FT_S2, SSD_CAP_FT,
};
use safespeed::synth::ScenarioConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cv: Option<PathBuf>,
    pub rwis: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub feature_schema: Option<PathBuf>,
    pub windows: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub t_reaction_s: f64,
    pub k_gap_s: f64,
    pub ssd_cap_ft: f64,
    pub g_ft_s2: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            t_reaction_s: DEFAULT_T_REACTION_S,
            k_gap_s: 0.0,
            ssd_cap_ft: SSD_CAP_FT,
            g_ft_s2: G_FT_S2,
        }
    }
}

impl PhysicsConfig {
    /// Parameters with friction left at 1; the station grip replaces it per window.
    pub fn params(&self) -> PhysicsParams<f64> {
        PhysicsParams {
            mu: 1.0,
            g_ft_s2: self.g_ft_s2,
            t_reaction_s: self.t_reaction_s,
            k_gap_s: self.k_gap_s,
            ssd_cap_ft: self.ssd_cap_ft,
        }
    }
}

/// Half-open span `[start, end)` of window start times.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Training spans; every other window is test. When empty, the first
    /// `train_fraction` of windows in time order is training.
    pub train: Vec<TimeRange>,
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: Vec::new(),
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub posted: bool,
    pub posted_pct: f64,
    /// Rolling-IQR history lengths in windows; empty disables the baseline.
    pub rolling_windows: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            posted: true,
            posted_pct: 0.10,
            rolling_windows: vec![6, 12, 24],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub min_points: usize,
    pub target_maxspeed_mph: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        let d = PrepareOptions::default();
        PrepareConfig {
            min_points: d.min_points,
            target_maxspeed_mph: d.target_maxspeed_mph,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed of the forest; `--seed` also overrides `synth.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for fitting and prediction; 0 lets rayon decide.
    pub threads: usize,
    pub v_law_mph: f64,
    pub deltas_mph: Vec<f64>,
    pub paths: Paths,
    pub forest: ForestParams,
    pub physics: PhysicsConfig,
    pub split: SplitConfig,
    pub baselines: BaselineConfig,
    pub prepare: PrepareConfig,
    pub rain_states: Option<Vec<RainCodeEntry>>,
    pub synth: ScenarioConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            threads: 0,
            v_law_mph: DEFAULT_V_LAW_MPH,
            deltas_mph: vec![5.0, 6.0],
            paths: Paths::default(),
            forest: ForestParams::default(),
            physics: PhysicsConfig::default(),
            split: SplitConfig::default(),
            baselines: BaselineConfig::default(),
            prepare: PrepareConfig::default(),
            rain_states: None,
            synth: ScenarioConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let de = toml::Deserializer::new(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            CliError::new(
                "config",
                Some(key),
                e.into_inner().message().trim().to_string(),
            )
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(path, e).at("--config"))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_toml(&text, &base)?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.synth.seed = seed;
        }
        if let Some(out) = &o.out {
            // taken relative to the working directory, not the config file
            self.output_dir = std::path::absolute(out).unwrap_or_else(|_| out.clone());
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(d) = self.deltas_mph.iter().find(|d| !(**d > 0.0)) {
            return Err(CliError::config(
                "deltas_mph",
                format!("tolerance {d} must be > 0"),
            ));
        }
        if !(self.v_law_mph > 0.0) {
            return Err(CliError::config("v_law_mph", "must be > 0"));
        }
        self.forest
            .validate()
            .map_err(|e| CliError::config("forest", e.to_string()))?;
        self.physics
            .params()
            .validate()
            .map_err(|e| CliError::config("physics", e.to_string()))?;
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::config(
                "split.train_fraction",
                format!("{f} outside (0, 1)"),
            ));
        }
        for (i, r) in self.split.train.iter().enumerate() {
            if r.start >= r.end {
                return Err(CliError::config(
                    &format!("split.train[{i}]"),
                    "start must precede end",
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.baselines.posted_pct) {
            return Err(CliError::config(
                "baselines.posted_pct",
                "must lie in [0, 1]",
            ));
        }
        if self.baselines.rolling_windows.contains(&0) {
            return Err(CliError::config(
                "baselines.rolling_windows",
                "window counts must be >= 1",
            ));
        }
        if self.prepare.min_points < 1 {
            return Err(CliError::config("prepare.min_points", "must be >= 1"));
        }
        self.synth
            .validate()
            .map_err(|e| CliError::config("synth", e.to_string()))?;
        self.rain_table()?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Where `synth` writes its files.
    pub fn data_dir(&self) -> PathBuf {
        self.output_dir().join("data")
    }

    fn path_or(&self, set: &Option<PathBuf>, default: PathBuf) -> PathBuf {
        set.as_ref().map(|p| self.resolve(p)).unwrap_or(default)
    }

    pub fn cv_path(&self) -> PathBuf {
        self.path_or(&self.paths.cv, self.data_dir().join("cv.csv"))
    }

    pub fn rwis_path(&self) -> PathBuf {
        self.path_or(&self.paths.rwis, self.data_dir().join("rwis.csv"))
    }

    pub fn network_path(&self) -> PathBuf {
        self.path_or(&self.paths.network, self.data_dir().join("network.geojson"))
    }

    pub fn windows_path(&self) -> PathBuf {
        self.path_or(&self.paths.windows, self.output_dir().join("windows.csv"))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.path_or(&self.paths.samples, self.output_dir().join("samples.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.path_or(&self.paths.model, self.output_dir().join("model.qrf"))
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }

    pub fn rain_table(&self) -> CliResult<RainCodeTable> {
        match &self.rain_states {
            None => Ok(RainCodeTable::default()),
            Some(entries) => RainCodeTable::new(entries.clone())
                .map_err(|e| CliError::config("rain_states", e.to_string())),
        }
    }

    pub fn feature_schema(&self) -> CliResult<FeatureSchema> {
        match &self.paths.feature_schema {
            None => Ok(FeatureSchema::default()),
            Some(p) => {
                let path = self.resolve(p);
                require(&path, "paths.feature_schema")?;
                FeatureSchema::load(&path).map_err(|e| CliError::from(e).at("paths.feature_schema"))
            }
        }
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            min_points: self.prepare.min_points,
            target_maxspeed_mph: self.prepare.target_maxspeed_mph,
        }
    }
}

/// Fails with the config key when an input file is missing.
pub fn require(path: &Path, key: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(
            key,
            format!("file not found: {}", path.display()),
        ))
    }
}
