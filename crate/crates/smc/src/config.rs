//! Run configuration: one TOML file, dotted-key overrides on top, and a
//! resolved snapshot written next to the outputs.
//!
//! ```toml
//! threads = 1
//!
//! [pipeline]
//! k = 5
//! eval_n = [2, 5, 10]
//!
//! [pipeline.refine]
//! rank = 10
//! mu = 0.4
//!
//! [tune]
//! mu = [0.0, 0.2, 0.4, 0.6, 0.8]
//!
//! [synth]
//! missing_rate = 0.3
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smc_core::pipeline::{PipelineConfig, TuneGrid};
use smc_core::testkit::TaggedBundleSpec;
use toml::{Table, Value};

use crate::error::{io_err, Error, Result};

/// Synthetic dataset written by `smc synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub bundle: TaggedBundleSpec,
    pub missing_rate: f64,
    pub inaccurate_rate: f64,
    pub noise_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            bundle: TaggedBundleSpec::default(),
            missing_rate: 0.3,
            inaccurate_rate: 0.3,
            noise_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for per-cluster sharing and tuning.
    pub threads: usize,
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub tune: TuneGrid,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 1,
            manifest: None,
            output: None,
            pipeline: PipelineConfig::default(),
            tune: TuneGrid::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_override_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Sets `a.b.c = value` inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` must look like key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    cursor.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads an optional config file and applies overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                toml::from_str::<Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Data-independent checks, reported with the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("invalid value for `threads`: must be at least 1".into()));
        }
        let nested = |e: smc_core::Error| match e {
            smc_core::Error::InvalidConfig { field, reason } => {
                Error::Config(format!("invalid value for `{field}`: {reason}"))
            }
            other => Error::Core(other),
        };
        self.pipeline.validate().map_err(nested)?;
        self.tune.validate().map_err(nested)?;
        let s = &self.synth;
        for (field, rate) in [("synth.missing_rate", s.missing_rate), ("synth.inaccurate_rate", s.inaccurate_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("invalid value for `{field}`: must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes `resolved_config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("resolved_config.toml");
        fs::write(&path, self.to_toml()?).map_err(io_err(&path))?;
        Ok(path)
    }
}
