//! Run configuration: JSON on disk, defaults for everything missing.

use std::fs;
use std::path::{Path, PathBuf};

use ncgw_core::params::PhysicalParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const FIXTURES_ENV: &str = "NCGW_FIXTURES";

/// `padding_sigmas` is the half-width of the domain in standard deviations
/// of |Ψ|²; 10.5 is the least that keeps the edge amplitude below 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub padding_sigmas: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 256, padding_sigmas: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimesConfig {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
}

impl Default for TimesConfig {
    fn default() -> Self {
        let p = PhysicalParams::regime_r0();
        TimesConfig { t0: 0.0, t1: p.period(), samples: 257 }
    }
}

impl TimesConfig {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.samples;
        (0..n).map(|i| self.t0 + (self.t1 - self.t0) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub grid: GridConfig,
    pub times: TimesConfig,
    pub fixtures_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: PhysicalParams::regime_r0(),
            grid: GridConfig::default(),
            times: TimesConfig::default(),
            fixtures_dir: PathBuf::from("fixtures"),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid: Option<usize>,
    pub tau: Option<f64>,
    pub samples: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(o) = &ov.out {
            cfg.output_dir = o.clone();
        }
        if let Some(n) = ov.grid {
            cfg.grid.n = n;
        }
        if let Some(t) = ov.tau {
            cfg.params.tau = t;
        }
        if let Some(s) = ov.samples {
            cfg.times.samples = s;
        }
        if let Ok(dir) = std::env::var(FIXTURES_ENV) {
            cfg.fixtures_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
        let n = self.grid.n;
        if n < 64 || !n.is_power_of_two() {
            return Err(CliError::Config(format!("grid.n: need a power of two >= 64, got {n}")));
        }
        if !(self.grid.padding_sigmas >= 10.5) {
            return Err(CliError::Config(format!("grid.padding_sigmas: need >= 10.5, got {}", self.grid.padding_sigmas)));
        }
        if self.times.samples < 2 {
            return Err(CliError::Config(format!("times.samples: need >= 2, got {}", self.times.samples)));
        }
        if !(self.times.t1 > self.times.t0) {
            return Err(CliError::Config("times: t1 must exceed t0".into()));
        }
        Ok(())
    }

    /// Hash of everything that affects numerical output (not the directories).
    pub fn hash(&self) -> String {
        let key = serde_json::json!({ "params": self.params, "grid": self.grid, "times": self.times });
        let digest = Sha256::digest(key.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn ensure_output_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.output_dir)
            .map_err(|e| CliError::Config(format!("output_dir {}: {e}", self.output_dir.display())))?;
        let probe = tempfile::NamedTempFile::new_in(&self.output_dir)
            .map_err(|e| CliError::Config(format!("output_dir {} is not writable: {e}", self.output_dir.display())))?;
        drop(probe);
        Ok(())
    }
}
