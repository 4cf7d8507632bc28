//! State reconstruction from coincidence counts.
//!
//! The forward model predicts the mean count of Alice detector `i` and Bob
//! detector `j` under a setting as
//!
//! ```text
//! n̄ = N · duration · ratio_j · ⟨k|ρ|k⟩
//! ```
//!
//! where `k` is the detector ket of [`crate::optics`] (Bob side only, or the
//! Kronecker product of both sides for the 16-dimensional joint state), `N`
//! is a pair rate fitted as a nuisance parameter and `ratio_j` the relative
//! efficiency of Bob's detector. Estimators work on Cholesky parameters so
//! every result is a physical state.

mod calibration;
mod cholesky;
mod lbfgs;
mod model;

pub mod bme;
pub mod mle;
pub mod montecarlo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bme::{bme_fit, bme_reconstruct, BmeConfig};
pub use calibration::calibrate_efficiencies;
pub use cholesky::{
    cholesky_to_density, density_to_cholesky, gram_from_params, hs_log_prior, hs_sample, lower_from_params,
    param_count, params_from_lower, CholeskyParams,
};
pub use lbfgs::{minimize, LbfgsOptions, LbfgsOutcome, Termination};
pub use mle::{mle_fit, mle_reconstruct, Likelihood, MleConfig};
pub use model::MeasurementModel;
pub use montecarlo::{monte_carlo_errors, monte_carlo_fit_errors, ErrorBars, MonteCarloConfig};

use crate::linalg;
use crate::optics::{build_projector_set, TomographySetting};
use crate::qcore::{fidelity, AliceOutcome, DensityOperator, QcoreError, StateVector};

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all Cholesky parameters are zero")]
    DegenerateState,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("optimizer did not converge after {iterations} iterations (gradient {gradient:.3e})")]
    NotConverged { iterations: usize, gradient: f64, best: Box<ReconstructionResult> },
    #[error("forward model produced a negative prediction {0:.3e}")]
    Model(f64),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("{failed} of {total} Monte Carlo reconstructions failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error(transparent)]
    State(#[from] QcoreError),
}

pub type Result<T> = std::result::Result<T, TomoError>;

/// Singles and coincidences recorded under one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    /// 1-based index into the settings catalog (36 or 1296 entries).
    pub setting: usize,
    pub duration_s: f64,
    pub singles_a: [u64; 4],
    pub singles_b: [u64; 4],
    /// `coincidences[i][j]` pairs Alice detector `i` with Bob detector `j`.
    pub coincidences: [[u64; 4]; 4],
}

impl CountRecord {
    pub fn validate(&self) -> Result<()> {
        if self.setting == 0 {
            return Err(TomoError::InvalidInput("setting indices start at 1".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(TomoError::InvalidInput(format!(
                "setting {}: duration {} must be positive",
                self.setting, self.duration_s
            )));
        }
        Ok(())
    }

    pub fn total_coincidences(&self) -> u64 {
        self.coincidences.iter().flatten().sum()
    }
}

/// Coincidences of one setting as reals, so expected (noise-free) counts can
/// flow through the same estimators as sampled ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceRow {
    pub setting: usize,
    pub duration_s: f64,
    pub counts: [[f64; 4]; 4],
}

impl From<&CountRecord> for CoincidenceRow {
    fn from(r: &CountRecord) -> Self {
        Self { setting: r.setting, duration_s: r.duration_s, counts: r.coincidences.map(|row| row.map(|n| n as f64)) }
    }
}

pub fn rows_from_records(records: &[CountRecord]) -> Result<Vec<CoincidenceRow>> {
    records
        .iter()
        .map(|r| {
            r.validate()?;
            Ok(CoincidenceRow::from(r))
        })
        .collect()
}

/// Relative efficiencies of Bob's detectors, `B₁ ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCalibration {
    pub ratios: [f64; 4],
}

impl EfficiencyCalibration {
    pub fn new(ratios: [f64; 4]) -> Result<Self> {
        if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(TomoError::Calibration(format!("ratios must be positive, got {ratios:?}")));
        }
        Ok(Self { ratios })
    }

    pub fn unit() -> Self {
        Self { ratios: [1.0; 4] }
    }
}

impl Default for EfficiencyCalibration {
    fn default() -> Self {
        Self::unit()
    }
}

/// Which state a set of counts is reconstructed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TomographyTarget {
    /// Bob's ququart conditioned on one of Alice's detectors.
    Conditional(AliceOutcome),
    /// Bob's ququart with coincidences summed over Alice's detectors.
    BobMarginal,
    /// The 16-dimensional two-photon state over the 1296-setting catalog.
    Joint,
}

/// Output of an estimator.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub rho: DensityOperator,
    /// `Σ (n ln n̄ − n̄)` at the estimate.
    pub log_likelihood: f64,
    /// Fitted pair-rate scale `N` of the forward model.
    pub total_pairs: f64,
    pub iterations: usize,
    /// Objective value after each accepted optimizer step (MLE only).
    pub objective_trace: Vec<f64>,
    pub fidelity_to_target: Option<f64>,
    pub error_bars: Option<ErrorBars>,
    pub warnings: Vec<String>,
}

impl ReconstructionResult {
    /// Records the fidelity with a pure target.
    pub fn with_target(mut self, target: &StateVector) -> Result<Self> {
        self.fidelity_to_target = Some(fidelity(&self.rho, &target.density())?);
        Ok(self)
    }
}

/// Expected counts `N · duration_scale · ratio_j · Tr(M_j ρ)` for Bob's
/// four detectors under each setting.
pub fn predict_coincidences(
    rho: &DensityOperator,
    settings: &[TomographySetting],
    total_pairs: f64,
    calib: &EfficiencyCalibration,
) -> Result<Vec<[f64; 4]>> {
    if rho.dim() != 4 {
        return Err(TomoError::InvalidInput(format!("expected a ququart, got dimension {}", rho.dim())));
    }
    settings
        .iter()
        .map(|s| {
            let set = build_projector_set(s);
            let mut out = [0.0; 4];
            for (j, v) in set.vectors().iter().enumerate() {
                let p = linalg::expectation(rho.matrix(), v);
                if p < -1e-12 {
                    return Err(TomoError::Model(p));
                }
                out[j] = total_pairs * s.duration_scale * calib.ratios[j] * p.max(0.0);
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVector};
    use crate::optics::{catalog_36, standard_36_targets};
    use crate::qcore::{decompose_joint_state, EquimodularPhases};
    use proptest::prelude::*;

    #[test]
    fn orthogonal_projection_predicts_zero() {
        let targets = standard_36_targets();
        let h1 = targets.iter().position(|t| t.label == "Ht1").unwrap();
        let v1 = targets.iter().position(|t| t.label == "Vt1").unwrap();
        let rho = targets[h1].state.density();
        let n = predict_coincidences(&rho, &catalog_36()[v1..=v1], 1000.0, &EfficiencyCalibration::unit()).unwrap();
        assert!(n[0][0].abs() < 1e-12);
    }

    #[test]
    fn mixed_state_is_flat_across_detectors() {
        let rho = DensityOperator::maximally_mixed(4);
        let pred = predict_coincidences(&rho, catalog_36(), 100.0, &EfficiencyCalibration::unit()).unwrap();
        for (s, row) in catalog_36().iter().zip(&pred) {
            if s.duration_scale == 1.0 {
                for n in row {
                    assert!((n - 25.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn conditional_state_shows_full_visibility() {
        // Bob's corrected A₁ branch at zero phase has equal real amplitudes, so a
        // projector onto (|Dt1⟩+|Dt2⟩)/√2 sees it fully and the orthogonal
        // (|Dt1⟩−|Dt2⟩)/√2 not at all.
        let branch = &decompose_joint_state(&EquimodularPhases::zero())[0];
        let corrected = crate::qcore::correction_unitary(branch.outcome).apply(&branch.state).unwrap();
        let rho = corrected.density();
        let h = 0.5;
        let plus = CVector::from_vec(vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(h, 0.0)]);
        let minus = CVector::from_vec(vec![c(h, 0.0), c(h, 0.0), c(-h, 0.0), c(-h, 0.0)]);
        let (p, m) = (linalg::expectation(rho.matrix(), &plus), linalg::expectation(rho.matrix(), &minus));
        assert!(((p - m) / (p + m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_rejects_nonpositive() {
        assert!(EfficiencyCalibration::new([1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(EfficiencyCalibration::new([1.0, 0.5, 0.9, 1.1]).is_ok());
    }

    fn random_state(seed: u64) -> DensityOperator {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = cholesky::hs_sample(4, &mut rng);
        cholesky_to_density(&CholeskyParams::new(4, t).unwrap()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn forward_model_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in 0.0f64..1.0) {
            let (r1, r2) = (random_state(s1), random_state(s2));
            let mix = r1.mix(&r2, a).unwrap();
            let cal = EfficiencyCalibration::new([1.0, 0.8, 0.9, 1.1]).unwrap();
            let p1 = predict_coincidences(&r1, catalog_36(), 50.0, &cal).unwrap();
            let p2 = predict_coincidences(&r2, catalog_36(), 50.0, &cal).unwrap();
            let pm = predict_coincidences(&mix, catalog_36(), 50.0, &cal).unwrap();
            for ((x, y), z) in p1.iter().flatten().zip(p2.iter().flatten()).zip(pm.iter().flatten()) {
                prop_assert!((a * x + (1.0 - a) * y - z).abs() < 1e-10);
            }
        }
    }
}
