//! Maximum-likelihood reconstruction.
//!
//! The fit runs over an unnormalized `T = s₀ L†L` so that the pair-rate
//! nuisance parameter is absorbed into the trace; `s₀` is a fixed scale taken
//! from the starting point. The objective is divided by the total count `S`
//! to keep gradient tolerances meaningful across count levels:
//!
//! ```text
//! Poisson:  f = (1/S) Σ [w q − n − n ln(w q / n)]
//! Gaussian: f = (1/S) Σ (w q − n)² / (2 max(n, 1))
//! ```

use serde::{Deserialize, Serialize};

use super::cholesky::{self, gram_from_params, hs_sample, lower_from_params};
use super::lbfgs::{minimize, LbfgsOptions, LbfgsOutcome, Termination};
use super::model::MeasurementModel;
use super::{CoincidenceRow, EfficiencyCalibration, ReconstructionResult, Result, TomoError, TomographyTarget};
use crate::linalg::CMatrix;
use crate::optics::TomographySetting;
use crate::qcore::DensityOperator;
use crate::rng::{tag, task_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Poisson,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleConfig {
    pub likelihood: Likelihood,
    /// Number of starting points: the maximally mixed state (or the supplied
    /// initial state) followed by random Hilbert–Schmidt states.
    pub starts: usize,
    pub seed: u64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self { likelihood: Likelihood::Poisson, starts: 5, seed: 0, gradient_tolerance: 1e-8, max_iterations: 5000 }
    }
}

/// Objective value and gradient with respect to the parameters of `L`.
struct Objective<'a> {
    model: &'a MeasurementModel,
    likelihood: Likelihood,
    scale: f64,
    inv_total: f64,
    q: Vec<f64>,
    coeffs: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(model: &'a MeasurementModel, likelihood: Likelihood, scale: f64) -> Self {
        let n = model.cell_count();
        Self { model, likelihood, scale, inv_total: 1.0 / model.total_counts(), q: vec![0.0; n], coeffs: vec![0.0; n] }
    }

    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.model.dim();
        let l = lower_from_params(d, x);
        let t = (l.adjoint() * &l).scale(self.scale);
        self.model.quadratic_forms(&t, &mut self.q);
        let (w, n) = (self.model.weights(), self.model.counts());
        let mut f = 0.0;
        for k in 0..self.q.len() {
            let q = self.q[k];
            let nbar = w[k] * q;
            match self.likelihood {
                Likelihood::Poisson => {
                    if n[k] > 0.0 {
                        if nbar <= 0.0 {
                            return f64::INFINITY;
                        }
                        f += nbar - n[k] - n[k] * (nbar / n[k]).ln();
                        self.coeffs[k] = w[k] - n[k] / q;
                    } else {
                        f += nbar;
                        self.coeffs[k] = w[k];
                    }
                }
                Likelihood::Gaussian => {
                    let var = n[k].max(1.0);
                    let r = nbar - n[k];
                    f += 0.5 * r * r / var;
                    self.coeffs[k] = r * w[k] / var;
                }
            }
        }
        let g = self.model.weighted_sum(&self.coeffs);
        write_gradient(&g, &l, self.scale * self.inv_total, grad);
        f * self.inv_total
    }
}

/// With `T = s L†L` and `df = Tr(G dT)`, the derivative with respect to
/// `Re L_ij` is `2s Re A_ji` and with respect to `Im L_ij` is `−2s Im A_ji`,
/// where `A = G L†`.
fn write_gradient(g: &CMatrix, l: &CMatrix, s: f64, grad: &mut [f64]) {
    let d = l.nrows();
    let a = g * l.adjoint();
    for i in 0..d {
        grad[i] = 2.0 * s * a[(i, i)].re;
    }
    let mut k = d;
    for j in 0..d {
        for i in j + 1..d {
            grad[k] = 2.0 * s * a[(j, i)].re;
            grad[k + 1] = -2.0 * s * a[(j, i)].im;
            k += 2;
        }
    }
}

fn result_from_fit(
    model: &MeasurementModel,
    scale: f64,
    fit: &LbfgsOutcome,
    warnings: Vec<String>,
) -> Result<ReconstructionResult> {
    let d = model.dim();
    let t = gram_from_params(d, &fit.x).scale(scale);
    let mut q = vec![0.0; model.cell_count()];
    model.quadratic_forms(&t, &mut q);
    let rho = DensityOperator::from_unnormalized(t.clone())?;
    Ok(ReconstructionResult {
        rho,
        log_likelihood: model.poisson_log_likelihood(&q),
        total_pairs: crate::linalg::trace(&t).re,
        iterations: fit.iterations,
        objective_trace: fit.trace.clone(),
        fidelity_to_target: None,
        error_bars: None,
        warnings,
    })
}

/// Starting factor for `rho` and the scale `s₀` that matches its predicted
/// total to the observed one.
fn start_point(model: &MeasurementModel, rho: &DensityOperator) -> (Vec<f64>, f64) {
    let params = cholesky::density_to_cholesky(rho);
    let mut q = vec![0.0; model.cell_count()];
    model.quadratic_forms(rho.matrix(), &mut q);
    let predicted: f64 = q.iter().zip(model.weights()).map(|(q, w)| q * w).sum();
    (params.as_slice().to_vec(), model.total_counts() / predicted.max(1e-300))
}

/// Fits a prepared model. `initial` replaces the maximally mixed first start.
pub fn mle_fit(
    model: &MeasurementModel,
    config: &MleConfig,
    initial: Option<&DensityOperator>,
) -> Result<ReconstructionResult> {
    let d = model.dim();
    if model.cell_count() == 0 || model.total_counts() <= 0.0 {
        return Err(TomoError::DegenerateData("no coincidences recorded".into()));
    }
    if model.weights().iter().all(|&w| w <= 0.0) {
        return Err(TomoError::DegenerateData("all cell weights are zero".into()));
    }
    if let Some(r) = initial {
        if r.dim() != d {
            return Err(TomoError::InvalidInput(format!("initial state has dimension {}, model {d}", r.dim())));
        }
    }
    let opts = LbfgsOptions {
        gtol: config.gradient_tolerance,
        max_iterations: config.max_iterations,
        ..LbfgsOptions::default()
    };
    let mut rng = task_rng(config.seed, &[tag::MLE_STARTS]);
    let mut best: Option<(LbfgsOutcome, f64)> = None;
    for start in 0..config.starts.max(1) {
        let rho0 = match (start, initial) {
            (0, Some(r)) => r.clone(),
            (0, None) => DensityOperator::maximally_mixed(d),
            _ => {
                let mut t = hs_sample(d, &mut rng);
                // keep random starts away from the boundary
                for ti in t.iter_mut().take(d) {
                    *ti = ti.abs().max(0.1);
                }
                cholesky::cholesky_to_density(&cholesky::CholeskyParams::new(d, t)?)?
            }
        };
        let (x0, scale) = start_point(model, &rho0);
        let mut obj = Objective::new(model, config.likelihood, scale);
        let fit = minimize(|x, g| obj.evaluate(x, g), x0, &opts);
        if best.as_ref().is_none_or(|(b, _)| fit.f < b.f) {
            best = Some((fit, scale));
        }
    }
    let (fit, scale) = best.expect("at least one start");
    let converged = match fit.termination {
        Termination::Gradient | Termination::Stagnation => true,
        // stalled in floating point close to a stationary point
        Termination::LineSearch => fit.gradient_norm <= 1e-5,
        Termination::MaxIterations => false,
    };
    let result = result_from_fit(model, scale, &fit, Vec::new())?;
    if !converged {
        return Err(TomoError::NotConverged {
            iterations: fit.iterations,
            gradient: fit.gradient_norm,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Builds the measurement model for `rows` and fits it.
pub fn mle_reconstruct(
    rows: &[CoincidenceRow],
    settings: &[TomographySetting],
    calib: &EfficiencyCalibration,
    target: TomographyTarget,
    config: &MleConfig,
) -> Result<ReconstructionResult> {
    let model = MeasurementModel::build(rows, settings, calib, target)?;
    mle_fit(&model, config, None)
}
