//! PI stabilization of Bob's analysis interferometer.
//!
//! Two photodiodes watch the interferometer outputs,
//! `I₁ = 1 + V₁ cos φ` and `I₂ = 1 − V₂ cos φ`, each with multiplicative
//! Gaussian noise. The error signal `E = (I₁ − γI₂)/(I₁ + γI₂)` equals the
//! setpoint at the lock phase `φ*`. The controller runs once per sample of
//! the disturbance and drives an ideal phase actuator `u`; the interferometer
//! phase is `φ* + φ_d − u`, and the residual is `φ_d − u`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::doppler::DisturbanceSeries;
use super::{invalid, Result, SpaceError};
use crate::optics::catalog_36;
use crate::qcore::{phase_error_stats, wrap_pi, EquimodularPhases};
use crate::rng::{child_seed, tag, task_rng};
use crate::sdtsim::{run_sdt_trial_with_disturbance, LCEncoder, SimConfig, SourceModel, TimeBinDisturbance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PIConfig {
    pub enabled: bool,
    /// Proportional gain, rad per unit error.
    pub kp: f64,
    /// Integral gain, rad per unit error per second.
    pub ki: f64,
    /// Controller rate, Hz.
    pub rate: f64,
    pub setpoint: f64,
    pub gamma: f64,
    pub visibilities: [f64; 2],
    /// Relative standard deviation of each photodiode reading.
    pub sensor_noise_std: f64,
}

/// Gains from [`tune_pi_gains`] on the overhead-pass Doppler ramp with the
/// default sensor, over `kp ∈ {0, 0.05, …, 0.5}` and `ki ∈ {5, 10, …, 150}`.
/// The optimum has no proportional term: at 100 Hz the ramp is slow and
/// any proportional gain only feeds sensor noise through.
pub const DEFAULT_KP: f64 = 0.0;
pub const DEFAULT_KI: f64 = 25.0;

impl Default for PIConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kp: DEFAULT_KP,
            ki: DEFAULT_KI,
            rate: 100.0,
            setpoint: 0.0,
            gamma: 0.6,
            visibilities: [0.95, 0.85],
            sensor_noise_std: 0.05,
        }
    }
}

impl PIConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.gamma > 0.0) {
            return invalid("controller rate and gamma must be positive");
        }
        if self.visibilities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid(format!("visibilities {:?} outside [0, 1]", self.visibilities));
        }
        if !(self.sensor_noise_std >= 0.0) || !self.kp.is_finite() || !self.ki.is_finite() {
            return invalid("noise must be non-negative and gains finite");
        }
        self.lock_phase().map(|_| ())
    }

    /// Phase in `(0, π)` where the noiseless error signal equals the setpoint.
    pub fn lock_phase(&self) -> Result<f64> {
        let [v1, v2] = self.visibilities;
        let (g, e) = (self.gamma, self.setpoint);
        let c = (1.0 - g - e * (1.0 + g)) / (e * (v1 - g * v2) - v1 - g * v2);
        if !(c.abs() < 1.0) {
            return invalid(format!(
                "setpoint {e} unreachable with gamma {g} and visibilities {:?}",
                self.visibilities
            ));
        }
        Ok(c.acos())
    }

    fn intensities(&self, phi: f64) -> (f64, f64) {
        (1.0 + self.visibilities[0] * phi.cos(), 1.0 - self.visibilities[1] * phi.cos())
    }
}

/// `E = (I₁ − γI₂)/(I₁ + γI₂)`.
pub fn error_signal(i1: f64, i2: f64, gamma: f64) -> Result<f64> {
    let den = i1 + gamma * i2;
    if !(den.abs() > 0.0) || !den.is_finite() {
        return invalid("error-signal denominator is zero");
    }
    Ok((i1 - gamma * i2) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationTrace {
    /// s
    pub t: Vec<f64>,
    pub disturbance: Vec<f64>,
    /// `φ_d − u`, unwrapped, rad.
    pub residual: Vec<f64>,
    pub error: Vec<f64>,
    pub actuator: Vec<f64>,
    pub residual_mean_deg: f64,
    pub residual_std_deg: f64,
    /// Peak-to-peak residual in units of 2π.
    pub fringes_swept: f64,
}

const DIVERGENCE_FRINGES: f64 = 10.0;

/// Runs the loop over the disturbance. A disabled controller leaves the
/// actuator at zero. An enabled loop whose residual exceeds ten fringes
/// fails with [`SpaceError::Unstable`].
pub fn simulate_pi_stabilization(
    disturbance: &DisturbanceSeries,
    pi: &PIConfig,
    seed: u64,
) -> Result<StabilizationTrace> {
    pi.validate()?;
    if disturbance.phase.is_empty() {
        return invalid("empty disturbance");
    }
    let lock = pi.lock_phase()?;
    let noise = Normal::new(0.0, pi.sensor_noise_std.max(0.0)).expect("finite std");
    let mut rng = task_rng(seed, &[tag::STABILIZATION]);
    let dt = disturbance.dt;
    let n = disturbance.phase.len();
    let mut tr = StabilizationTrace {
        t: Vec::with_capacity(n),
        disturbance: disturbance.phase.clone(),
        residual: Vec::with_capacity(n),
        error: Vec::with_capacity(n),
        actuator: Vec::with_capacity(n),
        residual_mean_deg: 0.0,
        residual_std_deg: 0.0,
        fringes_swept: 0.0,
    };
    let (mut u, mut integral) = (0.0, 0.0);
    for (k, &d) in disturbance.phase.iter().enumerate() {
        let psi = d - u;
        let (i1, i2) = pi.intensities(lock + psi);
        let mut draw = |x: f64| {
            if pi.sensor_noise_std > 0.0 {
                x * (1.0 + noise.sample(&mut rng))
            } else {
                x
            }
        };
        let e = error_signal(draw(i1), draw(i2), pi.gamma)? - pi.setpoint;
        if pi.enabled {
            integral += e * dt;
            u = -(pi.kp * e + pi.ki * integral);
        }
        tr.t.push(k as f64 * dt);
        tr.residual.push(psi);
        tr.error.push(e);
        tr.actuator.push(u);
        if pi.enabled && psi.abs() > DIVERGENCE_FRINGES * std::f64::consts::TAU {
            let fringes = psi.abs() / std::f64::consts::TAU;
            finish(&mut tr)?;
            return Err(SpaceError::Unstable { step: k, residual_fringes: fringes, trace: Box::new(tr) });
        }
    }
    finish(&mut tr)?;
    Ok(tr)
}

fn finish(tr: &mut StabilizationTrace) -> Result<()> {
    let wrapped: Vec<f64> = tr.residual.iter().map(|&p| wrap_pi(p)).collect();
    let stats = phase_error_stats(&wrapped).map_err(|e| SpaceError::InvalidInput(e.to_string()))?;
    tr.residual_mean_deg = stats.mean_deg;
    tr.residual_std_deg = stats.std_deg;
    let (lo, hi) = tr.residual.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    tr.fringes_swept = (hi - lo) / std::f64::consts::TAU;
    Ok(())
}

/// Grid search for the gains with the smallest residual circular std.
/// Unstable combinations are skipped. Returns `(kp, ki, std_deg)`.
pub fn tune_pi_gains(
    disturbance: &DisturbanceSeries,
    base: &PIConfig,
    kp_grid: &[f64],
    ki_grid: &[f64],
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let pairs: Vec<(f64, f64)> = kp_grid.iter().flat_map(|&p| ki_grid.iter().map(move |&i| (p, i))).collect();
    pairs
        .par_iter()
        .filter_map(|&(kp, ki)| {
            let cfg = PIConfig { kp, ki, enabled: true, ..*base };
            simulate_pi_stabilization(disturbance, &cfg, seed).ok().map(|t| (kp, ki, t.residual_std_deg))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or_else(|| SpaceError::InvalidInput("no stable gains on the grid".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizedFidelity {
    pub trials: usize,
    pub fidelity_on: f64,
    pub fidelity_on_std: f64,
    pub fidelity_off: f64,
    pub fidelity_off_std: f64,
    pub residual_std_on_deg: f64,
    pub residual_std_off_deg: f64,
}

/// Splits the disturbance into `trials` consecutive windows, each holding one
/// 36-setting tomography whose dwell times follow the settings'
/// `duration_scale`. Each trial sees the time-bin phase from the window,
/// first with the PI residual and then with the raw disturbance. The two
/// runs share target phases and seeds.
pub fn stabilized_sdt_fidelity(
    disturbance: &DisturbanceSeries,
    pi: &PIConfig,
    encoder: &LCEncoder,
    source: &SourceModel,
    config: &SimConfig,
    trials: usize,
    seed: u64,
) -> Result<StabilizedFidelity> {
    if trials == 0 || disturbance.phase.len() < trials * catalog_36().len() {
        return invalid("disturbance too short for the requested number of tomographies");
    }
    let on = simulate_pi_stabilization(disturbance, &PIConfig { enabled: true, ..*pi }, seed)?;
    let off = simulate_pi_stabilization(disturbance, &PIConfig { enabled: false, ..*pi }, seed)?;
    let run = |phase: &[f64]| -> Result<Vec<f64>> {
        let window = phase.len() / trials;
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = child_seed(seed, &[tag::STABILIZATION, t as u64]);
                let mut rng = task_rng(s, &[tag::STABILIZATION]);
                let tau = std::f64::consts::TAU;
                let target = EquimodularPhases::new(
                    rng.random::<f64>() * tau,
                    rng.random::<f64>() * tau,
                    rng.random::<f64>() * tau,
                );
                let enc = LCEncoder {
                    drift_rate: encoder.drift_rate,
                    jitter_std: encoder.jitter_std,
                    ..LCEncoder::for_target(&target, encoder.calib_offsets)
                };
                let dist = split_window(&phase[t * window..(t + 1) * window]);
                Ok(run_sdt_trial_with_disturbance(&enc, source, config, &dist, s)?.mean_fidelity)
            })
            .collect()
    };
    let (f_on, f_off) = (run(&on.residual)?, run(&off.residual)?);
    let ms = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = if x.len() > 1 { x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64 } else { 0.0 };
        (m, v.sqrt())
    };
    let ((a, b), (c, d)) = (ms(&f_on), ms(&f_off));
    Ok(StabilizedFidelity {
        trials,
        fidelity_on: a,
        fidelity_on_std: b,
        fidelity_off: c,
        fidelity_off_std: d,
        residual_std_on_deg: on.residual_std_deg,
        residual_std_off_deg: off.residual_std_deg,
    })
}

/// Divides a window among the 36 settings in proportion to their dwell.
fn split_window(phase: &[f64]) -> TimeBinDisturbance {
    let scales: Vec<f64> = catalog_36().iter().map(|s| s.duration_scale).collect();
    let total: f64 = scales.iter().sum();
    let mut edge = 0.0;
    let mut per_setting = Vec::with_capacity(scales.len());
    for sc in scales {
        let start = (edge / total * phase.len() as f64).round() as usize;
        edge += sc;
        let end = ((edge / total * phase.len() as f64).round() as usize).max(start + 1).min(phase.len());
        per_setting.push(phase[start.min(end - 1)..end].to_vec());
    }
    TimeBinDisturbance { per_setting }
}
