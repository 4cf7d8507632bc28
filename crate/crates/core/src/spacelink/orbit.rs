//! Pass geometry for a circular orbit over a spherical, non-rotating Earth.
//!
//! With the ground station at angular distance `ψ₀` from the orbital plane,
//! the central angle to the satellite obeys `cos θ = cos ψ₀ cos ωt`, with
//! `t = 0` at closest approach. `ψ₀` is fixed by the requested maximum
//! elevation.

use serde::{Deserialize, Serialize};

use super::{invalid, Result, EARTH_MU, EARTH_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitConfig {
    /// m
    pub altitude: f64,
    /// degrees; does not affect a single pass in this geometry
    pub inclination: f64,
    /// degrees; does not affect a single pass in this geometry
    pub ground_lat: f64,
    /// degrees
    pub min_elevation: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { altitude: 4.0e5, inclination: 51.0, ground_lat: 39.0, min_elevation: 20.0 }
    }
}

impl OrbitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.altitude > 0.0 && self.altitude.is_finite()) {
            return invalid(format!("altitude {} must be positive", self.altitude));
        }
        if !(0.0..90.0).contains(&self.min_elevation) {
            return invalid(format!("min_elevation {}° outside [0°, 90°)", self.min_elevation));
        }
        Ok(())
    }

    fn orbit_radius(&self) -> f64 {
        EARTH_RADIUS + self.altitude
    }

    /// Orbital speed `√(μ/a)`, m/s.
    pub fn orbital_speed(&self) -> f64 {
        (EARTH_MU / self.orbit_radius()).sqrt()
    }

    fn angular_rate(&self) -> f64 {
        (EARTH_MU / self.orbit_radius().powi(3)).sqrt()
    }

    /// Earth-central angle between station and satellite at elevation `ε`.
    fn central_angle(&self, elevation_deg: f64) -> f64 {
        let e = elevation_deg.to_radians();
        (EARTH_RADIUS * e.cos() / self.orbit_radius()).acos() - e
    }
}

/// Slant range at elevation `ε`: `√(R² sin²ε + 2Rh + h²) − R sin ε`.
pub fn range_at_elevation(altitude: f64, elevation_deg: f64) -> f64 {
    let rs = EARTH_RADIUS * elevation_deg.to_radians().sin();
    (rs * rs + 2.0 * EARTH_RADIUS * altitude + altitude * altitude).sqrt() - rs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassSample {
    /// s, zero at closest approach
    pub t: f64,
    /// m
    pub range: f64,
    /// degrees
    pub elevation: f64,
    /// m/s, positive when receding
    pub radial_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassProfile {
    pub max_elevation: f64,
    pub min_elevation: f64,
    /// Sample spacing, s.
    pub dt: f64,
    pub samples: Vec<PassSample>,
}

impl PassProfile {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Samples the pass with maximum elevation `max_elevation` every `dt`
/// seconds on a grid symmetric about closest approach. The radial velocity
/// is the exact derivative of the closed-form range.
pub fn propagate_pass(orbit: &OrbitConfig, max_elevation: f64, dt: f64) -> Result<PassProfile> {
    orbit.validate()?;
    if !(max_elevation > orbit.min_elevation && max_elevation <= 90.0) {
        return invalid(format!("max elevation {max_elevation}° must lie in ({}°, 90°]", orbit.min_elevation));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("time step {dt} must be positive"));
    }
    let (re, a) = (EARTH_RADIUS, orbit.orbit_radius());
    let w = orbit.angular_rate();
    let psi0 = orbit.central_angle(max_elevation);
    let theta_edge = orbit.central_angle(orbit.min_elevation);
    let half = (theta_edge.cos() / psi0.cos()).clamp(-1.0, 1.0).acos() / w;
    let steps = (half / dt + 1e-9).floor() as i64;
    let samples = (-steps..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let cos_theta = psi0.cos() * (w * t).cos();
            let range = (re * re + a * a - 2.0 * re * a * cos_theta).max(0.0).sqrt();
            let elevation = ((a * cos_theta - re) / range).clamp(-1.0, 1.0).asin().to_degrees();
            let radial_velocity = re * a * psi0.cos() * w * (w * t).sin() / range;
            PassSample { t, range, elevation, radial_velocity }
        })
        .collect();
    Ok(PassProfile { max_elevation, min_elevation: orbit.min_elevation, dt, samples })
}
