//! A single end-to-end trial.

use serde::{Deserialize, Serialize};

use super::counts::{expected_rows, sample_record, TimeBinDisturbance};
use super::{target_phases, Estimator, LCEncoder, Result, SimConfig, SourceModel};
use crate::optics::{catalog_36, TomographySetting};
use crate::qcore::{
    correction_unitary, equimodular_ququart, extract_phases, fidelity, phase_error_stats, purity, wrap_pi,
    AliceOutcome, CircularStats, DensityOperator, EquimodularPhases,
};
use crate::rng::{child_seed, tag, task_rng};
use crate::tomo::{bme_fit, mle_fit, CoincidenceRow, CountRecord, MeasurementModel, TomoError, TomographyTarget};

/// Reconstruction of one of Bob's four conditional states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeResult {
    pub outcome: AliceOutcome,
    /// Corrected state.
    pub rho: DensityOperator,
    pub fidelity: f64,
    pub purity: f64,
    pub measured: EquimodularPhases,
    /// `measured − target`, wrapped to `(−π, π]`, radians.
    pub delta: [f64; 3],
    /// Share of all coincidences heralded by this outcome.
    pub outcome_fraction: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub target: EquimodularPhases,
    /// Phases actually written by the encoder, including jitter and drift.
    pub realized: EquimodularPhases,
    pub estimator: Estimator,
    pub outcomes: Vec<OutcomeResult>,
    pub mean_fidelity: f64,
    /// Circular statistics of `Δφ₁, Δφ₂, Δφ₃` over the four outcomes.
    pub phase_stats: [CircularStats; 3],
}

impl TrialResult {
    /// All twelve phase errors, radians.
    pub fn deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().flat_map(|o| o.delta)
    }
}

/// Simulates, reconstructs and scores one encoded state.
pub fn run_sdt_trial(enc: &LCEncoder, source: &SourceModel, config: &SimConfig, seed: u64) -> Result<TrialResult> {
    run_sdt_trial_with_disturbance(enc, source, config, &TimeBinDisturbance::none(), seed)
}

/// As [`run_sdt_trial`] with an extra time-bin phase seen by each setting.
pub fn run_sdt_trial_with_disturbance(
    enc: &LCEncoder,
    source: &SourceModel,
    config: &SimConfig,
    disturbance: &TimeBinDisturbance,
    seed: u64,
) -> Result<TrialResult> {
    let target = target_phases(enc);
    let (realized, rows) = simulate_rows(enc, source, config, disturbance, seed)?;
    analyze(&rows, catalog_36(), &target, realized, config, config.estimator, seed)
}

/// Draws the encoder phases and the counts of one trial.
pub(crate) fn simulate_rows(
    enc: &LCEncoder,
    source: &SourceModel,
    config: &SimConfig,
    disturbance: &TimeBinDisturbance,
    seed: u64,
) -> Result<(EquimodularPhases, Vec<CoincidenceRow>)> {
    let mut rng = task_rng(seed, &[tag::TRIAL]);
    let realized = enc.realized_phases(config.elapsed_hours, &mut rng);
    let expected = expected_rows(&realized, source, catalog_36(), config, disturbance)?;
    if config.noiseless {
        return Ok((realized, expected));
    }
    let mut rng = task_rng(seed, &[tag::SIMULATE]);
    let records: Vec<CountRecord> = expected.iter().map(|r| sample_record(r, &mut rng)).collect();
    Ok((realized, records.iter().map(CoincidenceRow::from).collect()))
}

/// Reconstructs the four conditional states from one set of counts.
pub(crate) fn analyze(
    rows: &[CoincidenceRow],
    settings: &[TomographySetting],
    target: &EquimodularPhases,
    realized: EquimodularPhases,
    config: &SimConfig,
    estimator: Estimator,
    seed: u64,
) -> Result<TrialResult> {
    let target_ket = equimodular_ququart(target);
    let total: f64 = rows.iter().map(|r| r.counts.iter().flatten().sum::<f64>()).sum();
    let mut outcomes = Vec::with_capacity(4);
    for outcome in AliceOutcome::ALL {
        let k = outcome.index() - 1;
        let model =
            MeasurementModel::build(rows, settings, &config.calibration, TomographyTarget::Conditional(outcome))?;
        let sub = child_seed(seed, &[tag::TRIAL, k as u64]);
        let fit = match estimator {
            Estimator::Mle => mle_fit(&model, &crate::tomo::MleConfig { seed: sub, ..config.mle }, None),
            Estimator::Bme => bme_fit(&model, &crate::tomo::BmeConfig { seed: sub, ..config.bme }),
        };
        let mut fit = match fit {
            Ok(f) => f,
            Err(TomoError::NotConverged { iterations, gradient, best }) => {
                let mut b = *best;
                b.warnings.push(format!("not converged after {iterations} iterations, gradient {gradient:.2e}"));
                b
            }
            Err(e) => return Err(e.into()),
        };
        let rho = correction_unitary(outcome).apply_density(&fit.rho)?;
        let measured = extract_phases(&rho)?;
        let delta = measured.delta(target).map(wrap_pi);
        let heralded: f64 = rows.iter().map(|r| r.counts[k].iter().sum::<f64>()).sum();
        outcomes.push(OutcomeResult {
            outcome,
            fidelity: fidelity(&rho, &target_ket.density())?,
            purity: purity(&rho),
            rho,
            measured,
            delta,
            outcome_fraction: if total > 0.0 { heralded / total } else { 0.0 },
            warnings: std::mem::take(&mut fit.warnings),
        });
    }
    let mean_fidelity = outcomes.iter().map(|o| o.fidelity).sum::<f64>() / 4.0;
    let stats = |i: usize| phase_error_stats(&outcomes.iter().map(|o| o.delta[i]).collect::<Vec<_>>());
    let phase_stats = [stats(0)?, stats(1)?, stats(2)?];
    Ok(TrialResult { target: *target, realized, estimator, outcomes, mean_fidelity, phase_stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdtsim::CountBudget;

    fn enc(d: [f64; 3]) -> LCEncoder {
        LCEncoder::for_target(&EquimodularPhases::from_degrees(d[0], d[1], d[2]), [0.0; 3])
    }

    #[test]
    fn ideal_high_counts_trial() {
        let cfg = SimConfig { budget: CountBudget::PerTomography(1e6), ..SimConfig::default() };
        let r = run_sdt_trial(&enc([30.0, 200.0, 310.0]), &SourceModel::ideal(), &cfg, 5).unwrap();
        assert_eq!(r.outcomes.len(), 4);
        for o in &r.outcomes {
            assert!(o.fidelity >= 0.999, "{:?} {}", o.outcome, o.fidelity);
            assert!((o.outcome_fraction - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn noiseless_trial_is_exact() {
        let cfg = SimConfig { noiseless: true, ..SimConfig::default() };
        let r = run_sdt_trial(&enc([100.0, 45.0, 270.0]), &SourceModel::ideal(), &cfg, 0).unwrap();
        for o in &r.outcomes {
            assert!(o.fidelity > 1.0 - 1e-6, "{}", o.fidelity);
            assert!(o.delta.iter().all(|d| d.abs() < 1e-3));
        }
    }

    #[test]
    fn white_noise_gives_quarter_fidelity() {
        let cfg = SimConfig { budget: CountBudget::PerTomography(1e6), ..SimConfig::default() };
        let src = SourceModel { pure_state_fraction: 0.0, ..SourceModel::ideal() };
        let r = run_sdt_trial(&enc([10.0, 20.0, 30.0]), &src, &cfg, 1).unwrap();
        assert!((r.mean_fidelity - 0.25).abs() < 0.02, "{}", r.mean_fidelity);
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = SimConfig { budget: CountBudget::PerTomography(500.0), ..SimConfig::default() };
        let e = enc([1.0, 2.0, 3.0]).with_jitter(0.1);
        let a = run_sdt_trial(&e, &SourceModel::error_budget(), &cfg, 9).unwrap();
        let b = run_sdt_trial(&e, &SourceModel::error_budget(), &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = run_sdt_trial(&e, &SourceModel::error_budget(), &cfg, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trial_result_json_round_trip() {
        let cfg = SimConfig { noiseless: true, ..SimConfig::default() };
        let r = run_sdt_trial(&enc([0.0, 90.0, 180.0]), &SourceModel::ideal(), &cfg, 0).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: TrialResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
