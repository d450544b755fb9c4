//! The single TOML configuration file read by the command-line tool.
//!
//! ```toml
//! seed = 0
//!
//! [data]
//! epoch = "2015-01-01T00:00:00Z"
//! bbox = { lat_min = -34.2, lon_min = 18.3, lat_max = -33.7, lon_max = 18.9 }
//! nx = 6
//! ny = 6
//! t_bin = 4.0
//!
//! [backtest]
//! test_start = "2015-03-17"
//! test_end = "2015-09-15"
//! ```
//!
//! Every section is optional. Individual keys can be overridden from the
//! command line with `--set section.key=value`, where `value` is a TOML value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BacktestConfig, GridSpec, DEFAULT_ELBO_THRESHOLD, DEFAULT_MAX_TRAINING_SPAN};
use crate::data::{load_land_mask, parse_timestamp, BoundingBox, ColumnMapping, CsvSchema, LandMask, Projection, HOURS_PER_WEEK};
use crate::error::{Error, Result};
use crate::medic::MedicConfig;
use crate::metrics::EvalConfig;
use crate::optimize::OptimizerConfig;
use crate::svgp::ModelConfig;
use crate::synth::{Bump, IntensitySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Time zero for all hour offsets.
    pub epoch: String,
    /// `"cape_town"` or `"custom"` (uses `bbox`).
    pub preset: String,
    pub bbox: Option<BoundingBox>,
    pub columns: ColumnMapping,
    pub emergencies_only: bool,
    pub land_mask: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub t_bin: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            epoch: "2015-01-01T00:00:00Z".into(),
            preset: "cape_town".into(),
            bbox: None,
            columns: ColumnMapping::default(),
            emergencies_only: true,
            land_mask: None,
            nx: 6,
            ny: 6,
            t_bin: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub test_start: String,
    /// Exclusive.
    pub test_end: String,
    pub fold_length: f64,
    pub max_training_span: f64,
    pub elbo_threshold: f64,
    pub max_retrains: usize,
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection {
            test_start: "2015-03-17".into(),
            test_end: "2015-09-15".into(),
            fold_length: HOURS_PER_WEEK,
            max_training_span: DEFAULT_MAX_TRAINING_SPAN,
            elbo_threshold: DEFAULT_ELBO_THRESHOLD,
            max_retrains: 5,
        }
    }
}

/// Synthetic intensity; the spatial domain is the configured bounding box and
/// bump centres are km from its centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub log_base: f64,
    pub diurnal_amplitude: f64,
    pub phase: f64,
    pub bumps: Vec<Bump>,
    pub start: String,
    pub end: String,
    pub seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            log_base: -4.0,
            diurnal_amplitude: 0.8,
            phase: 0.0,
            bumps: Vec::new(),
            start: "2014-09-16".into(),
            end: "2015-09-15".into(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub backtest: BacktestSection,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub medic: MedicConfig,
    pub eval: EvalConfig,
    pub synth: SynthSection,
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::InvalidConfig(format!("empty key in {key:?}")))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{p} in {key:?} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    // Bare words that are not valid TOML are taken as strings.
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl FileConfig {
    /// Parses `text` and applies `key=value` overrides.
    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::InvalidConfig(format!("{e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: FileConfig = table.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.medic.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or the defaults when `None`) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn schema(&self) -> Result<CsvSchema> {
        let mut s = CsvSchema::with_epoch(&self.data.epoch)?;
        s.columns = self.data.columns.clone();
        Ok(s)
    }

    pub fn bbox(&self) -> Result<BoundingBox> {
        let b = match (self.data.preset.as_str(), self.data.bbox) {
            (_, Some(b)) => b,
            ("cape_town", None) => BoundingBox::cape_town(),
            (other, None) => return Err(Error::InvalidConfig(format!("unknown preset {other:?} and no bbox"))),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn projection(&self) -> Result<Projection> {
        Projection::centered_on(&self.bbox()?)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec {
            extent: self.projection()?.extent_of(&self.bbox()?),
            nx: self.data.nx,
            ny: self.data.ny,
            t_bin: self.data.t_bin,
        })
    }

    /// Hours since the epoch for a timestamp string.
    pub fn hours(&self, raw: &str) -> Result<f64> {
        let schema = self.schema()?;
        let at = parse_timestamp(raw).map_err(Error::InvalidConfig)?;
        Ok(schema.hours_since_epoch(at))
    }

    pub fn land_mask(&self) -> Result<Option<LandMask>> {
        match &self.data.land_mask {
            None => Ok(None),
            Some(p) => {
                let spec = self.grid_spec()?;
                let grid = spec.grid(0.0, spec.t_bin)?;
                load_land_mask(Some(p), &grid).map(Some)
            }
        }
    }

    pub fn backtest(&self) -> Result<BacktestConfig> {
        let b = &self.backtest;
        let mut eval = self.eval.clone();
        eval.land_mask = self.land_mask()?;
        let cfg = BacktestConfig {
            test_start: self.hours(&b.test_start)?,
            test_end: self.hours(&b.test_end)?,
            fold_length: b.fold_length,
            max_training_span: b.max_training_span,
            elbo_threshold: b.elbo_threshold,
            max_retrains: b.max_retrains,
            grid: self.grid_spec()?,
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            medic: MedicConfig {
                t_bin: self.data.t_bin,
                ..self.medic.clone()
            },
            eval,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn intensity(&self) -> Result<IntensitySpec> {
        let s = &self.synth;
        let spec = IntensitySpec {
            log_base: s.log_base,
            diurnal_amplitude: s.diurnal_amplitude,
            phase: s.phase,
            bumps: s.bumps.clone(),
            extent: self.grid_spec()?.extent,
            t_start: self.hours(&s.start)?,
            t_end: self.hours(&s.end)?,
            seed: s.seed.unwrap_or(self.seed),
        };
        spec.validate()?;
        Ok(spec)
    }
}
