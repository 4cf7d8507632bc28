//! Doppler shift of the time-bin interval and the phase ramp it imposes on
//! Bob's analysis interferometer.

use serde::{Deserialize, Serialize};

use super::orbit::PassProfile;
use super::{invalid, Result, SpaceError, C};

fn beta(v: f64) -> Result<f64> {
    if !v.is_finite() || v.abs() >= C {
        return Err(SpaceError::Superluminal(v));
    }
    Ok(v / C)
}

/// `Δt = (√((1+β)/(1−β)) − 1) τ` with `β = v_r/c`; positive when receding.
///
/// Evaluated as `τ · 2β/(1−β) / (√((1+β)/(1−β)) + 1)` to avoid cancellation.
pub fn doppler_delta_t(v_r: f64, tau_bin: f64) -> Result<f64> {
    let b = beta(v_r)?;
    let ratio = (1.0 + b) / (1.0 - b);
    Ok(tau_bin * (2.0 * b / (1.0 - b)) / (ratio.sqrt() + 1.0))
}

pub fn lorentz_gamma(v: f64) -> Result<f64> {
    let b = beta(v)?;
    Ok(1.0 / (1.0 - b * b).sqrt())
}

/// `γ − 1` without cancellation.
pub fn lorentz_gamma_minus_one(v: f64) -> Result<f64> {
    let b = beta(v)?;
    let s = (1.0 - b * b).sqrt();
    Ok(b * b / (s * (1.0 + s)))
}

/// A phase disturbance sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSeries {
    /// s
    pub dt: f64,
    /// rad, one entry per step
    pub phase: Vec<f64>,
}

impl DisturbanceSeries {
    pub fn zero(dt: f64, steps: usize) -> Self {
        Self { dt, phase: vec![0.0; steps] }
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.phase.len() as f64
    }
}

/// Interferometer phase `2π c (Δt(t) − Δt(t₀)) / λ` over the pass, resampled
/// at `rate` Hz by linear interpolation of the radial velocity.
pub fn doppler_phase_series(pass: &PassProfile, tau_bin: f64, wavelength: f64, rate: f64) -> Result<DisturbanceSeries> {
    if !(rate > 0.0 && tau_bin > 0.0 && wavelength > 0.0) {
        return invalid("rate, bin separation and wavelength must be positive");
    }
    let s = &pass.samples;
    if s.len() < 2 {
        return invalid("pass has fewer than two samples");
    }
    let dt = 1.0 / rate;
    let t0 = s[0].t;
    let steps = (pass.duration() / dt + 1e-9).floor() as usize + 1;
    let k = std::f64::consts::TAU * C / wavelength;
    let dt0 = doppler_delta_t(s[0].radial_velocity, tau_bin)?;
    let mut seg = 0;
    let phase = (0..steps)
        .map(|n| {
            let t = t0 + n as f64 * dt;
            while seg + 2 < s.len() && s[seg + 1].t < t {
                seg += 1;
            }
            let (a, b) = (&s[seg], &s[seg + 1]);
            let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            let v = a.radial_velocity + f * (b.radial_velocity - a.radial_velocity);
            Ok(k * (doppler_delta_t(v, tau_bin)? - dt0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DisturbanceSeries { dt, phase })
}
