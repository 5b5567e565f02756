//! Experiment configuration documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::island::{PeConfig, TreatmentConfig};
use crate::mesh::MeshConfig;
use crate::surface::SurfaceConfig;

/// One experiment. Unknown keys are rejected and `seed` is mandatory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub pe: PeConfig,
    #[serde(default)]
    pub treatment: TreatmentConfig,
    #[serde(default)]
    pub surface: SurfaceConfig,
    pub seed: u64,
    /// Genomes exported per PE; defaults to the whole population.
    #[serde(default)]
    pub sample_per_pe: Option<usize>,
    /// Default subsample size for reconstruction.
    #[serde(default)]
    pub subsample_total: Option<usize>,
    #[serde(default)]
    pub exact_tracking: bool,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            mesh: MeshConfig::default(),
            pe: PeConfig::default(),
            treatment: TreatmentConfig::default(),
            surface: SurfaceConfig::default(),
            seed,
            sample_per_pe: None,
            subsample_total: None,
            exact_tracking: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        self.pe.validate()?;
        self.treatment.validate()?;
        self.surface.validate()?;
        if let Some(n) = self.sample_per_pe {
            if n == 0 || n > self.pe.pop_size {
                return Err(Error::Config(format!(
                    "sample_per_pe must lie in [1, pe.pop_size={}], got {n}",
                    self.pe.pop_size
                )));
            }
        }
        if self.subsample_total == Some(0) {
            return Err(Error::Config("subsample_total must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_per_pe(&self) -> usize {
        self.sample_per_pe.unwrap_or(self.pe.pop_size)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let c = ExperimentConfig::from_json(r#"{"seed": 18446744073709551615}"#).unwrap();
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.pe.pop_size, 32);
        assert_eq!(c.surface.num_sites, 64);
        assert_eq!(c.sample_per_pe(), 32);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_json("{}").unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "mesh": {"widht": 3}}"#).unwrap_err().to_string();
        assert!(err.contains("widht"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "colour": 3}"#).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn invalid_values_name_their_key() {
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "surface": {"policy": "steady", "num_sites": 48, "differentia_width": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("steady"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "pe": {"pop_size": 4}}"#).unwrap_err().to_string();
        assert!(err.contains("tournament_k"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"seed": 1, "sample_per_pe": 99}"#).unwrap_err().to_string();
        assert!(err.contains("sample_per_pe"), "{err}");
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = ExperimentConfig::with_seed(9);
        c.exact_tracking = true;
        c.subsample_total = Some(10);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }
}
