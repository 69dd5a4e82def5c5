//! Run configuration: one JSON document referencing the trial curve files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibrate::{Bounds, NmSettings};
use crate::classify::DEFAULT_EPSILON;
use crate::curve::DeathHandling;
use crate::econ::{EconomicInputs, Pricing};
use crate::microsim::{DEFAULT_HORIZON, DEFAULT_N_PATIENTS, DEFAULT_P_DIRECT_ED};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialFiles {
    pub pfs: PathBuf,
    pub os: PathBuf,
    pub death_handling: DeathHandling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsFile {
    pub os: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trials {
    pub line1_dct: TrialFiles,
    pub line1_aa: TrialFiles,
    pub line2_dct: TrialFiles,
    pub line2_aa: TrialFiles,
    pub extensive_disease: OsFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub horizon_cycles: usize,
    pub n_patients: usize,
    pub p_direct_ed: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            horizon_cycles: DEFAULT_HORIZON,
            n_patients: DEFAULT_N_PATIENTS,
            p_direct_ed: DEFAULT_P_DIRECT_ED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Defaults to theta in [1, 20] and omega in [1, horizon].
    pub bounds: Option<Bounds>,
    pub optimizer: NmSettings,
    /// Defaults to the lower corner plus an interior grid.
    pub starts: Option<Vec<(f64, f64)>>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_pricing() -> Pricing {
    Pricing::Generic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub trials: Trials,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub economics: EconomicInputs,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    /// AA price used for the calibration-scenario table.
    #[serde(default = "default_pricing")]
    pub scenario_pricing: Pricing,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A parsed configuration together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// SHA-256 of the raw config bytes, hex encoded.
    pub sha256: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let config: RunConfig = serde_json::from_slice(&bytes).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    config.validate()?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig {
        config,
        base_dir,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(ConfigError::Invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        let t = &self.trials;
        let files = [
            &t.line1_dct.pfs,
            &t.line1_dct.os,
            &t.line1_aa.pfs,
            &t.line1_aa.os,
            &t.line2_dct.pfs,
            &t.line2_dct.os,
            &t.line2_aa.pfs,
            &t.line2_aa.os,
            &t.extensive_disease.os,
        ];
        for (i, a) in files.iter().enumerate() {
            if files[i + 1..].contains(a) {
                return Err(ConfigError::Invalid(format!(
                    "curve file {} is referenced more than once",
                    a.display()
                )));
            }
        }
        if self.model.horizon_cycles == 0 || self.model.n_patients == 0 {
            return Err(ConfigError::Invalid("horizon and cohort size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.model.p_direct_ed) {
            return Err(ConfigError::Invalid("p_direct_ed must be a probability".into()));
        }
        self.economics.validate().map_err(ConfigError::Invalid)?;
        if let Some(b) = &self.calibration.bounds {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn bounds(&self) -> Bounds {
        self.calibration
            .bounds
            .unwrap_or_else(|| Bounds::default_for(self.model.horizon_cycles))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "seed": 5,
        "trials": {
            "line1_dct": {"pfs": "a.json", "os": "b.json", "death_handling": "death_is_censored"},
            "line1_aa": {"pfs": "c.json", "os": "d.json", "death_handling": "death_is_event"},
            "line2_dct": {"pfs": "e.json", "os": "f.json", "death_handling": "death_is_event"},
            "line2_aa": {"pfs": "g.json", "os": "h.json", "death_handling": "death_is_event"},
            "extensive_disease": {"os": "i.json"}
        }
    }"#;

    #[test]
    fn defaults_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, DOC).unwrap();
        let c = load_config(&p).unwrap();
        assert_eq!(c.config.epsilon, 0.1);
        assert_eq!(c.config.model.horizon_cycles, 87);
        assert_eq!(c.config.economics.adt, 1153.0);
        assert_eq!(c.resolve(Path::new("a.json")), dir.path().join("a.json"));
        assert_eq!(c.sha256.len(), 64);
    }

    #[test]
    fn rejects_reused_files_and_unknown_keys() {
        let reused = DOC.replace("\"d.json\"", "\"b.json\"");
        let c: RunConfig = serde_json::from_str(&reused).unwrap();
        assert!(c.validate().is_err());
        let unknown = DOC.replace("\"seed\": 5,", "\"seed\": 5, \"bogus\": 1,");
        assert!(serde_json::from_str::<RunConfig>(&unknown).is_err());
    }
}
