//! Space-channel analyses for a low-Earth-orbit link: pass geometry, Friis
//! transmission and counts per pass, the Doppler shift of the time-bin
//! interval, and PI stabilization of the analysis interferometer.

mod doppler;
mod link;
mod orbit;
mod stabilization;

use thiserror::Error;

pub use doppler::{doppler_delta_t, doppler_phase_series, lorentz_gamma, lorentz_gamma_minus_one, DisturbanceSeries};
pub use link::{coincidences_per_pass, friis_transmission, pass_summary_curve, LinkBudget, PassSummary};
pub use orbit::{propagate_pass, range_at_elevation, OrbitConfig, PassProfile, PassSample};
pub use stabilization::{
    error_signal, simulate_pi_stabilization, stabilized_sdt_fidelity, tune_pi_gains, PIConfig, StabilizationTrace,
    StabilizedFidelity, DEFAULT_KI, DEFAULT_KP,
};

use crate::sdtsim::SimError;

/// Speed of light, m/s.
pub const C: f64 = 299_792_458.0;
/// Mean Earth radius, m.
pub const EARTH_RADIUS: f64 = 6.371e6;
/// Earth's gravitational parameter, m³/s².
pub const EARTH_MU: f64 = 3.986_004_418e14;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("speed {0} m/s is not below c")]
    Superluminal(f64),
    #[error("stabilization diverged: residual {residual_fringes:.1} fringes at step {step}")]
    Unstable { step: usize, residual_fringes: f64, trace: Box<StabilizationTrace> },
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SpaceError::InvalidInput(msg.into()))
}
