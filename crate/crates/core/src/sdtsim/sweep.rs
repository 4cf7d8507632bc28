//! Phase-grid sweeps, count-budget curves and the resolvable-state count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::TimeBinDisturbance;
use super::trial::{analyze, run_sdt_trial, simulate_rows};
use super::{CountBudget, Estimator, LCEncoder, Result, SimConfig, SimError, SourceModel};
use crate::optics::catalog_36;
use crate::qcore::{phase_error_stats, CircularStats, EquimodularPhases};
use crate::rng::{child_seed, tag, task_rng};

fn steps_per_turn(step_deg: f64) -> Result<usize> {
    let n = 360.0 / step_deg;
    if !(step_deg > 0.0 && step_deg <= 360.0) || (n - n.round()).abs() > 1e-9 {
        return Err(SimError::InvalidConfig(format!("grid step {step_deg}° must divide 360°")));
    }
    Ok(n.round() as usize)
}

/// All `(φ₁, φ₂, φ₃)` on a grid of `step_deg`, with `φ₃` varying fastest.
pub fn grid_points(step_deg: f64) -> Result<Vec<EquimodularPhases>> {
    let n = steps_per_turn(step_deg)?;
    let at = |k: usize| k as f64 * step_deg;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push(EquimodularPhases::from_degrees(at(i), at(j), at(k)));
            }
        }
    }
    Ok(out)
}

/// Repetitions used for the reference grids: 8 for the 90° grid, 1 otherwise.
pub fn default_repeats(step_deg: f64) -> usize {
    if (step_deg - 90.0).abs() < 1e-9 {
        8
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub repeat: usize,
    pub trial: super::TrialResult,
}

/// One row per grid point, repetition and outcome, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub repeat: usize,
    pub outcome: usize,
    pub phi1_target: f64,
    pub phi2_target: f64,
    pub phi3_target: f64,
    pub phi1_measured: f64,
    pub phi2_measured: f64,
    pub phi3_measured: f64,
    pub dphi1: f64,
    pub dphi2: f64,
    pub dphi3: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub step_deg: f64,
    pub repeats: usize,
    pub points: Vec<SweepPoint>,
    /// Mean over points, repetitions and outcomes.
    pub mean_fidelity: f64,
    pub fidelity_std: f64,
    /// Circular statistics of each `Δφᵢ` over the whole sweep.
    pub phase_stats: [CircularStats; 3],
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        let mut out = Vec::with_capacity(self.points.len() * 4);
        for p in &self.points {
            let t = p.trial.target.to_degrees();
            for o in &p.trial.outcomes {
                let m = o.measured.to_degrees();
                let d = o.delta.map(f64::to_degrees);
                out.push(SweepRow {
                    point: p.index,
                    repeat: p.repeat,
                    outcome: o.outcome.index(),
                    phi1_target: t[0],
                    phi2_target: t[1],
                    phi3_target: t[2],
                    phi1_measured: m[0],
                    phi2_measured: m[1],
                    phi3_measured: m[2],
                    dphi1: d[0],
                    dphi2: d[1],
                    dphi3: d[2],
                    fidelity: o.fidelity,
                });
            }
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Runs a trial at every grid point. `encoder` supplies the calibration
/// offsets, drift and jitter; its device phases are replaced per point.
/// Point `p`, repetition `r` uses seed `child_seed(seed, [SWEEP, p, r])`.
pub fn phase_grid_sweep(
    step_deg: f64,
    repeats: Option<usize>,
    encoder: &LCEncoder,
    source: &SourceModel,
    config: &SimConfig,
    seed: u64,
) -> Result<SweepResult> {
    let grid = grid_points(step_deg)?;
    let repeats = repeats.unwrap_or_else(|| default_repeats(step_deg)).max(1);
    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|p| (0..repeats).map(move |r| (p, r))).collect();
    let points = tasks
        .par_iter()
        .map(|&(p, r)| {
            let enc = retarget(encoder, &grid[p]);
            let trial = run_sdt_trial(&enc, source, config, child_seed(seed, &[tag::SWEEP, p as u64, r as u64]))?;
            Ok(SweepPoint { index: p, repeat: r, trial })
        })
        .collect::<Result<Vec<_>>>()?;
    let fids: Vec<f64> = points.iter().flat_map(|p| p.trial.outcomes.iter().map(|o| o.fidelity)).collect();
    let (mean_fidelity, fidelity_std) = mean_std(&fids);
    let stats = |i: usize| {
        let d: Vec<f64> = points.iter().flat_map(|p| p.trial.outcomes.iter().map(move |o| o.delta[i])).collect();
        phase_error_stats(&d)
    };
    let phase_stats = [stats(0)?, stats(1)?, stats(2)?];
    Ok(SweepResult { step_deg, repeats, points, mean_fidelity, fidelity_std, phase_stats })
}

fn retarget(template: &LCEncoder, target: &EquimodularPhases) -> LCEncoder {
    LCEncoder {
        drift_rate: template.drift_rate,
        jitter_std: template.jitter_std,
        ..LCEncoder::for_target(target, template.calib_offsets)
    }
}

/// Averages at one count level, over trials and the four outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Expected coincidences per conditional 36-setting tomography.
    pub total_counts: f64,
    pub trials: usize,
    pub mle_fidelity: f64,
    pub mle_fidelity_std: f64,
    pub bme_fidelity: f64,
    pub bme_fidelity_std: f64,
    /// Circular standard deviation of `Δφᵢ` averaged over the three phases, degrees.
    pub mle_phase_error_deg: f64,
    pub bme_phase_error_deg: f64,
}

/// Mean MLE and BME fidelity and phase error versus count budget. Each trial
/// encodes uniformly random target phases; both estimators see the same
/// counts. Trial `t` at level `l` uses seed `child_seed(seed, [CURVE, l, t])`.
pub fn fidelity_vs_counts_curve(
    encoder: &LCEncoder,
    source: &SourceModel,
    config: &SimConfig,
    count_levels: &[f64],
    trials_per_level: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if count_levels.iter().any(|c| !(*c > 0.0 && c.is_finite())) || trials_per_level == 0 {
        return Err(SimError::InvalidConfig("count levels and trial count must be positive".into()));
    }
    count_levels
        .iter()
        .enumerate()
        .map(|(l, &level)| {
            let cfg = SimConfig { budget: CountBudget::PerTomography(level), ..*config };
            let pairs = (0..trials_per_level)
                .into_par_iter()
                .map(|t| {
                    let s = child_seed(seed, &[tag::CURVE, l as u64, t as u64]);
                    let mut rng = task_rng(s, &[tag::CURVE]);
                    let tau = std::f64::consts::TAU;
                    let target = EquimodularPhases::new(
                        rng.random::<f64>() * tau,
                        rng.random::<f64>() * tau,
                        rng.random::<f64>() * tau,
                    );
                    let enc = retarget(encoder, &target);
                    let (realized, rows) = simulate_rows(&enc, source, &cfg, &TimeBinDisturbance::none(), s)?;
                    let mle = analyze(&rows, catalog_36(), &target, realized, &cfg, Estimator::Mle, s)?;
                    let bme = analyze(&rows, catalog_36(), &target, realized, &cfg, Estimator::Bme, s)?;
                    Ok((mle, bme))
                })
                .collect::<Result<Vec<_>>>()?;
            let summarize = |pick: fn(
                &(super::TrialResult, super::TrialResult),
            ) -> &super::TrialResult|
             -> Result<(f64, f64, f64)> {
                let fids: Vec<f64> = pairs
                    .iter()
                    .flat_map(|p| pick(p).outcomes.iter().map(|o| o.fidelity))
                    .collect();
                let mut phase = 0.0;
                for i in 0..3 {
                    let d: Vec<f64> = pairs
                        .iter()
                        .flat_map(|p| pick(p).outcomes.iter().map(move |o| o.delta[i]))
                        .collect();
                    phase += phase_error_stats(&d)?.std_deg / 3.0;
                }
                let (m, s) = mean_std(&fids);
                Ok((m, s, phase))
            };
            let (mf, ms, mp) = summarize(|p| &p.0)?;
            let (bf, bs, bp) = summarize(|p| &p.1)?;
            Ok(CurvePoint {
                total_counts: level,
                trials: trials_per_level,
                mle_fidelity: mf,
                mle_fidelity_std: ms,
                bme_fidelity: bf,
                bme_fidelity_std: bs,
                mle_phase_error_deg: mp,
                bme_phase_error_deg: bp,
            })
        })
        .collect()
}

/// Number of distinguishable phase triples at a given resolution,
/// `⌊(360°/res)³⌋`.
pub fn resolvable_states(phase_resolution_deg: f64) -> Result<u64> {
    if !(phase_resolution_deg > 0.0 && phase_resolution_deg <= 360.0) {
        return Err(SimError::InvalidConfig(format!("resolution {phase_resolution_deg}° outside (0°, 360°]")));
    }
    Ok(((360.0 / phase_resolution_deg).powi(3) + 1e-9).floor() as u64)
}
