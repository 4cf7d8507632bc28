//! Friis link budget and coincidences per pass.

use serde::{Deserialize, Serialize};

use super::orbit::{propagate_pass, OrbitConfig, PassProfile};
use super::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    /// Transmitting aperture, m.
    pub d_t: f64,
    /// Receiving aperture, m.
    pub d_r: f64,
    /// m
    pub wavelength: f64,
    /// Receiver telescope plus adaptive-optics fiber coupling, dB.
    pub receiver_loss_db: f64,
    /// Ground analysis and detection, dB.
    pub ground_analysis_loss_db: f64,
    /// Analysis and detection on the satellite, dB. Set to zero for the
    /// 10 dB reading of the loss budget.
    pub space_analysis_loss_db: f64,
    /// Hz
    pub pump_rep_rate: f64,
    /// Pairs per pump pulse.
    pub pair_probability: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            d_t: 0.1,
            d_r: 1.0,
            wavelength: 1550e-9,
            receiver_loss_db: 6.0,
            ground_analysis_loss_db: 4.0,
            space_analysis_loss_db: 4.0,
            pump_rep_rate: 4e8,
            pair_probability: 0.01,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if [self.d_t, self.d_r, self.wavelength, self.pump_rep_rate].iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return invalid("apertures, wavelength and repetition rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.pair_probability) {
            return invalid(format!("pair probability {} outside [0, 1]", self.pair_probability));
        }
        if self.losses().iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return invalid("losses must be non-negative");
        }
        Ok(())
    }

    fn losses(&self) -> [f64; 3] {
        [self.receiver_loss_db, self.ground_analysis_loss_db, self.space_analysis_loss_db]
    }

    pub fn fixed_losses_db(&self) -> f64 {
        self.losses().iter().sum()
    }

    pub fn fixed_transmission(&self) -> f64 {
        10f64.powf(-self.fixed_losses_db() / 10.0)
    }

    /// Pairs generated per second.
    pub fn pair_rate(&self) -> f64 {
        self.pump_rep_rate * self.pair_probability
    }

    /// Detected coincidences per second at range `r`.
    pub fn coincidence_rate(&self, r: f64) -> Result<f64> {
        Ok(self.pair_rate() * friis_transmission(r, self)? * self.fixed_transmission())
    }
}

/// `η = (π D_T D_R / (4 λ r))²`, clamped to 1 in the near field.
pub fn friis_transmission(r: f64, budget: &LinkBudget) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("range {r} must be positive"));
    }
    let x = std::f64::consts::PI * budget.d_t * budget.d_r / (4.0 * budget.wavelength * r);
    Ok((x * x).min(1.0))
}

/// Trapezoidal integral of the coincidence rate over the pass. A pass with
/// fewer than two samples collects nothing.
pub fn coincidences_per_pass(pass: &PassProfile, budget: &LinkBudget) -> Result<f64> {
    budget.validate()?;
    let rates = pass.samples.iter().map(|s| budget.coincidence_rate(s.range)).collect::<Result<Vec<_>>>()?;
    Ok(pass.samples.windows(2).zip(rates.windows(2)).map(|(s, r)| 0.5 * (r[0] + r[1]) * (s[1].t - s[0].t)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassSummary {
    /// degrees
    pub max_elevation: f64,
    pub total_coincidences: f64,
    /// m
    pub min_range: f64,
    /// m
    pub max_range: f64,
    /// s
    pub duration: f64,
}

/// One summary row per maximum elevation.
pub fn pass_summary_curve(
    orbit: &OrbitConfig,
    budget: &LinkBudget,
    elevations: &[f64],
    dt: f64,
) -> Result<Vec<PassSummary>> {
    elevations
        .iter()
        .map(|&el| {
            let pass = propagate_pass(orbit, el, dt)?;
            let ranges = pass.samples.iter().map(|s| s.range);
            Ok(PassSummary {
                max_elevation: el,
                total_coincidences: coincidences_per_pass(&pass, budget)?,
                min_range: ranges.clone().fold(f64::INFINITY, f64::min),
                max_range: ranges.fold(0.0, f64::max),
                duration: pass.duration(),
            })
        })
        .collect()
}
