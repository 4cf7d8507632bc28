//! Run configuration: defaults, overridden by a TOML file, overridden by flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sdtlab::sdtsim::{Estimator, SourceModel, LAB_SCALE_COUNTS};
use sdtlab::spacelink::{LinkBudget, OrbitConfig, PIConfig};

use crate::error::CliError;

/// Encoder imperfections, in degrees for readability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub jitter_deg: f64,
    pub calib_offsets_deg: [f64; 3],
    pub drift_deg_per_hour: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { jitter_deg: 0.0, calib_offsets_deg: [0.0; 3], drift_deg_per_hour: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Expected coincidences per conditional 36-setting tomography.
    pub counts_per_tomography: f64,
    pub estimator: Estimator,
    pub noiseless: bool,
    pub elapsed_hours: f64,
    pub detector_efficiency: [f64; 4],
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            counts_per_tomography: LAB_SCALE_COUNTS,
            estimator: Estimator::Mle,
            noiseless: false,
            elapsed_hours: 0.0,
            detector_efficiency: [1.0; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoSection {
    pub mle_starts: usize,
    pub bme_particles: usize,
    pub bme_mh_steps: usize,
    pub monte_carlo_samples: usize,
}

impl Default for TomoSection {
    fn default() -> Self {
        Self { mle_starts: 5, bme_particles: 2000, bme_mh_steps: 5, monte_carlo_samples: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopplerSection {
    /// Time-bin separation, s.
    pub tau_bin: f64,
    /// Wavelength of the stabilized interferometer, m.
    pub wavelength: f64,
    pub max_elevation: f64,
    /// Pass sampling step, s.
    pub pass_dt: f64,
}

impl Default for DopplerSection {
    fn default() -> Self {
        Self { tau_bin: 1.5e-9, wavelength: 1550e-9, max_elevation: 90.0, pass_dt: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub source: SourceModel,
    pub encoder: EncoderConfig,
    pub sim: SimSection,
    pub tomo: TomoSection,
    pub orbit: OrbitConfig,
    pub link: LinkBudget,
    pub pi: PIConfig,
    pub doppler: DopplerSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.source.validate().map_err(CliError::usage)?;
        self.orbit.validate().map_err(CliError::usage)?;
        self.link.validate().map_err(CliError::usage)?;
        self.pi.validate().map_err(CliError::usage)?;
        if !(self.sim.counts_per_tomography > 0.0) {
            return Err(CliError::usage("sim.counts_per_tomography must be positive"));
        }
        if self.encoder.jitter_deg < 0.0 {
            return Err(CliError::usage("encoder.jitter_deg must be non-negative"));
        }
        Ok(())
    }
}
