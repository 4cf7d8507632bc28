//! Poisson resampling error bars.
//!
//! Each observed count is redrawn as `Poisson(observed)` and the data are
//! refitted. Refits start from `0.9 ρ̂ + 0.1 I/d`: a pure `ρ̂` sits on the
//! boundary of the parametrization, where the gradient vanishes in the
//! directions that lead back into the interior.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mle::{mle_fit, MleConfig};
use super::model::MeasurementModel;
use super::{CoincidenceRow, EfficiencyCalibration, Result, TomoError, TomographyTarget};
use crate::optics::TomographySetting;
use crate::qcore::{extract_phases, fidelity, phase_error_stats, purity, DensityOperator, StateVector};
use crate::rng::{tag, task_rng};

/// Spread of derived quantities across resampled reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBars {
    pub samples: usize,
    pub failures: usize,
    pub fidelity_mean: Option<f64>,
    pub fidelity_std: Option<f64>,
    pub purity_mean: f64,
    pub purity_std: f64,
    /// Circular standard deviation of each extracted phase, degrees.
    pub phase_std_deg: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
    pub mle: MleConfig,
    /// Largest tolerated fraction of failed refits.
    pub max_failure_fraction: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { samples: 100, seed: 0, mle: MleConfig { starts: 1, ..MleConfig::default() }, max_failure_fraction: 0.2 }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Error bars around an existing estimate `rho_hat` of `model`.
pub fn monte_carlo_fit_errors(
    model: &MeasurementModel,
    rho_hat: &DensityOperator,
    target: Option<&StateVector>,
    config: &MonteCarloConfig,
) -> Result<ErrorBars> {
    if config.samples < 2 {
        return Err(TomoError::InvalidInput("at least two Monte Carlo samples are needed".into()));
    }
    let d = model.dim();
    let start = rho_hat.mix(&DensityOperator::maximally_mixed(d), 0.9)?;
    let fits: Vec<Option<DensityOperator>> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(config.seed, &[tag::MONTE_CARLO, i as u64]);
            let counts: Vec<f64> = model
                .counts()
                .iter()
                .map(|&n| if n > 0.0 { Poisson::new(n).expect("positive mean").sample(&mut rng) } else { 0.0 })
                .collect();
            let resampled = model.with_counts(counts).ok()?;
            mle_fit(&resampled, &config.mle, Some(&start)).ok().map(|r| r.rho)
        })
        .collect();
    let ok: Vec<&DensityOperator> = fits.iter().flatten().collect();
    let failures = config.samples - ok.len();
    if failures as f64 > config.max_failure_fraction * config.samples as f64 || ok.len() < 2 {
        return Err(TomoError::TooManyFailures { failed: failures, total: config.samples });
    }
    let purities: Vec<f64> = ok.iter().map(|r| purity(r)).collect();
    let (purity_mean, purity_std) = mean_std(&purities);
    let (fidelity_mean, fidelity_std) = match target {
        Some(t) => {
            let sigma = t.density();
            let f: Vec<f64> = ok.iter().map(|r| fidelity(r, &sigma)).collect::<std::result::Result<_, _>>()?;
            let (m, s) = mean_std(&f);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    let phase_std_deg = if d == 4 {
        let phases: Vec<[f64; 3]> = ok.iter().filter_map(|r| extract_phases(r).ok()).map(|p| p.as_array()).collect();
        if phases.len() >= 2 {
            let mut out = [0.0; 3];
            for (k, slot) in out.iter_mut().enumerate() {
                let col: Vec<f64> = phases.iter().map(|p| p[k]).collect();
                *slot = phase_error_stats(&col)?.std_deg;
            }
            Some(out)
        } else {
            None
        }
    } else {
        None
    };
    Ok(ErrorBars {
        samples: config.samples,
        failures,
        fidelity_mean,
        fidelity_std,
        purity_mean,
        purity_std,
        phase_std_deg,
    })
}

/// Fits `rows`, then resamples around the fit.
pub fn monte_carlo_errors(
    rows: &[CoincidenceRow],
    settings: &[TomographySetting],
    calib: &EfficiencyCalibration,
    kind: TomographyTarget,
    target: Option<&StateVector>,
    config: &MonteCarloConfig,
) -> Result<ErrorBars> {
    let model = MeasurementModel::build(rows, settings, calib, kind)?;
    let fit = mle_fit(&model, &MleConfig { starts: 1, ..config.mle }, None)?;
    monte_carlo_fit_errors(&model, &fit.rho, target, config)
}
