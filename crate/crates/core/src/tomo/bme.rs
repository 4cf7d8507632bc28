//! Bayesian mean estimation by sequential Monte Carlo.
//!
//! Particles are Cholesky parameter vectors drawn from a Hilbert–Schmidt
//! prior. The likelihood is switched on gradually: each stage raises the
//! inverse temperature `β` by the largest increment that keeps the effective
//! sample size at half the cloud, resamples systematically and then moves
//! every particle with random-walk Metropolis steps whose proposal covariance
//! is the cloud's. The pair rate is profiled out of the likelihood. The
//! estimate is the average state over the final cloud.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::cholesky::{gram_from_params, hs_log_prior, hs_sample};
use super::model::MeasurementModel;
use super::{CoincidenceRow, EfficiencyCalibration, ReconstructionResult, Result, TomographyTarget};
use crate::linalg::{self, CMatrix};
use crate::optics::TomographySetting;
use crate::qcore::DensityOperator;
use crate::rng::{tag, task_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmeConfig {
    pub particles: usize,
    /// Metropolis sweeps over the cloud after each resampling.
    pub mh_steps: usize,
    pub seed: u64,
    /// Effective-sample-size fraction kept at each tempering stage.
    pub ess_target: f64,
    /// A final effective sample size below this fraction triggers a warning.
    pub ess_warning: f64,
    pub max_stages: usize,
}

impl Default for BmeConfig {
    fn default() -> Self {
        Self { particles: 2000, mh_steps: 5, seed: 0, ess_target: 0.5, ess_warning: 0.1, max_stages: 500 }
    }
}

struct Cloud {
    theta: Vec<Vec<f64>>,
    log_prior: Vec<f64>,
    log_like: Vec<f64>,
}

/// Negates rows of `L` with a negative diagonal. Both the prior and the
/// likelihood are invariant under these flips, so the sampler works on the
/// folded space `t_i ≥ 0` and avoids the `2^d` mirror modes.
fn fold(d: usize, t: &mut [f64]) {
    for i in 0..d {
        if t[i] >= 0.0 {
            continue;
        }
        t[i] = -t[i];
        let mut k = d;
        for j in 0..d {
            for r in j + 1..d {
                if r == i {
                    t[k] = -t[k];
                    t[k + 1] = -t[k + 1];
                }
                k += 2;
            }
        }
    }
}

fn log_likelihood(model: &MeasurementModel, t: &[f64], q: &mut [f64]) -> f64 {
    let g = gram_from_params(model.dim(), t);
    model.quadratic_forms(&g, q);
    model.profile_log_likelihood(q)
}

fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

fn incremental_weights(log_like: &[f64], delta: f64) -> Vec<f64> {
    let max = log_like.iter().cloned().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    log_like.iter().map(|&l| if l.is_finite() { (delta * (l - max)).exp() } else { 0.0 }).collect()
}

/// Largest `Δβ ≤ remaining` with `ESS ≥ target`.
fn next_increment(log_like: &[f64], remaining: f64, target: f64) -> f64 {
    if ess(&incremental_weights(log_like, remaining)) >= target {
        return remaining;
    }
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ess(&incremental_weights(log_like, mid)) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.max(1e-12 * remaining)
}

fn systematic_resample(weights: &[f64], rng: &mut SimRng) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while i < n - 1 && cum + weights[i] / total < u {
            cum += weights[i] / total;
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Cholesky factor of the cloud covariance, regularized.
fn proposal_factor(theta: &[Vec<f64>]) -> DMatrix<f64> {
    let p = theta[0].len();
    let n = theta.len() as f64;
    let mut mean = DVector::<f64>::zeros(p);
    for t in theta {
        mean += DVector::from_column_slice(t);
    }
    mean /= n;
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for t in theta {
        let d = DVector::from_column_slice(t) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    let floor = 1e-10 * (cov.trace() / p as f64).max(1e-12);
    for i in 0..p {
        cov[(i, i)] += floor;
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::from_diagonal(&DVector::from_iterator(p, (0..p).map(|i| cov[(i, i)].sqrt()))))
}

/// Runs the sampler on a prepared model.
pub fn bme_fit(model: &MeasurementModel, config: &BmeConfig) -> Result<ReconstructionResult> {
    let d = model.dim();
    let m = config.particles.max(2);
    let mut rng = task_rng(config.seed, &[tag::BME]);
    let mut q = vec![0.0; model.cell_count()];
    let mut cloud =
        Cloud { theta: Vec::with_capacity(m), log_prior: Vec::with_capacity(m), log_like: Vec::with_capacity(m) };
    for _ in 0..m {
        let mut t = hs_sample(d, &mut rng);
        fold(d, &mut t);
        cloud.log_prior.push(hs_log_prior(d, &t));
        cloud.log_like.push(log_likelihood(model, &t, &mut q));
        cloud.theta.push(t);
    }

    let p = d * d;
    let mut beta = 0.0;
    let mut stages = 0;
    let mut scale = 2.38 / (p as f64).sqrt();
    let mut warnings = Vec::new();
    let mut last_acceptance = 1.0;
    while beta < 1.0 {
        if stages == config.max_stages {
            warnings.push(format!("tempering stopped at β = {beta:.3e} after {stages} stages"));
            break;
        }
        stages += 1;
        let delta = next_increment(&cloud.log_like, 1.0 - beta, config.ess_target * m as f64);
        beta = if 1.0 - beta - delta <= 1e-12 { 1.0 } else { beta + delta };
        let w = incremental_weights(&cloud.log_like, delta);
        let stage_ess = ess(&w);
        if stage_ess < config.ess_warning * m as f64 {
            warnings.push(format!("effective sample size {stage_ess:.1} of {m} at β = {beta:.3e}"));
        }
        let idx = systematic_resample(&w, &mut rng);
        cloud = Cloud {
            theta: idx.iter().map(|&i| cloud.theta[i].clone()).collect(),
            log_prior: idx.iter().map(|&i| cloud.log_prior[i]).collect(),
            log_like: idx.iter().map(|&i| cloud.log_like[i]).collect(),
        };

        let factor = proposal_factor(&cloud.theta);
        for _ in 0..config.mh_steps {
            let mut accepted = 0usize;
            let mut z = DVector::<f64>::zeros(p);
            for k in 0..m {
                z.iter_mut().for_each(|zi| *zi = rng.sample(StandardNormal));
                let step = &factor * &z;
                let mut proposal: Vec<f64> =
                    cloud.theta[k].iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
                fold(d, &mut proposal);
                let lp = hs_log_prior(d, &proposal);
                let ll = log_likelihood(model, &proposal, &mut q);
                let current = cloud.log_prior[k] + beta * cloud.log_like[k];
                let candidate = lp + beta * ll;
                if candidate.is_finite() && rng.random::<f64>().ln() < candidate - current {
                    cloud.theta[k] = proposal;
                    cloud.log_prior[k] = lp;
                    cloud.log_like[k] = ll;
                    accepted += 1;
                }
            }
            last_acceptance = accepted as f64 / m as f64;
            if last_acceptance < 0.15 {
                scale *= 0.7;
            } else if last_acceptance > 0.4 {
                scale *= 1.3;
            }
        }
    }
    if last_acceptance < 0.02 {
        warnings.push(format!("Metropolis acceptance fell to {last_acceptance:.3}"));
    }

    let mut mean = CMatrix::zeros(d, d);
    for t in &cloud.theta {
        let g = gram_from_params(d, t);
        let tr = linalg::trace(&g).re;
        mean += g.unscale(tr);
    }
    let rho = DensityOperator::new(linalg::hermitian_part(&mean.unscale(m as f64)))?;

    model.quadratic_forms(rho.matrix(), &mut q);
    let predicted: f64 = q.iter().zip(model.weights()).map(|(q, w)| q * w).sum();
    let total_pairs = if predicted > 0.0 { model.total_counts() / predicted } else { 0.0 };
    q.iter_mut().for_each(|x| *x *= total_pairs);
    let log_likelihood = if total_pairs > 0.0 { model.poisson_log_likelihood(&q) } else { 0.0 };
    Ok(ReconstructionResult {
        rho,
        log_likelihood,
        total_pairs,
        iterations: stages,
        objective_trace: Vec::new(),
        fidelity_to_target: None,
        error_bars: None,
        warnings,
    })
}

/// Builds the measurement model for `rows` and samples its posterior.
pub fn bme_reconstruct(
    rows: &[CoincidenceRow],
    settings: &[TomographySetting],
    calib: &EfficiencyCalibration,
    target: TomographyTarget,
    config: &BmeConfig,
) -> Result<ReconstructionResult> {
    let model = MeasurementModel::build(rows, settings, calib, target)?;
    bme_fit(&model, config)
}
