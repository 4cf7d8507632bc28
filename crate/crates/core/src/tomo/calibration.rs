//! Relative detector efficiencies from repeated tomographies.
//!
//! Every detector of every setting projects onto one of the catalog states,
//! and detector `B₁` of setting `k` projects onto state `k`. Comparing the
//! rate of `B_j` under setting `s` with the rate of `B₁` under the setting
//! measuring the same state isolates the efficiency of `B_j` relative to
//! `B₁`. Rates are counts summed over Alice's detectors, divided by the
//! duration and by the squared norm of the detector ket, which carries the
//! polarizer factor.

use super::{CountRecord, EfficiencyCalibration, Result, TomoError};
use crate::optics::{build_projector_set, detector_targets, TomographySetting};

/// Averages per-run ratios over `runs`.
pub fn calibrate_efficiencies(
    runs: &[Vec<CountRecord>],
    settings: &[TomographySetting],
) -> Result<EfficiencyCalibration> {
    if runs.is_empty() {
        return Err(TomoError::Calibration("no calibration runs".into()));
    }
    let targets = detector_targets(settings);
    let norms: Vec<[f64; 4]> =
        settings.iter().map(|s| build_projector_set(s).vectors().clone().map(|v| v.norm_squared())).collect();
    // setting whose B₁ measures each catalog state
    let mut b1_setting = vec![None; settings.len()];
    for (s, row) in targets.iter().enumerate() {
        if let Some(t) = row[0] {
            b1_setting[t].get_or_insert(s);
        }
    }

    let mut total = [0.0; 4];
    for (run_index, run) in runs.iter().enumerate() {
        let mut rate: Vec<Option<[f64; 4]>> = vec![None; settings.len()];
        for rec in run {
            rec.validate()?;
            let s = rec.setting - 1;
            if s >= settings.len() {
                return Err(TomoError::Calibration(format!("run {run_index}: setting {} not in catalog", rec.setting)));
            }
            let mut r = [0.0; 4];
            for (j, rj) in r.iter_mut().enumerate() {
                let n: u64 = (0..4).map(|i| rec.coincidences[i][j]).sum();
                *rj = n as f64 / (rec.duration_s * norms[s][j]);
            }
            rate[s] = Some(r);
        }
        let mut sums = [0.0; 4];
        let mut used = [0usize; 4];
        for (s, r) in rate.iter().enumerate() {
            let Some(r) = r else { continue };
            for j in 0..4 {
                let Some(t) = targets[s][j] else { continue };
                let Some(reference) = b1_setting[t].and_then(|s1| rate[s1].map(|x| x[0])) else {
                    continue;
                };
                if reference <= 0.0 {
                    return Err(TomoError::Calibration(format!(
                        "run {run_index}: zero B1 counts for the state measured by setting {}",
                        s + 1
                    )));
                }
                sums[j] += r[j] / reference;
                used[j] += 1;
            }
        }
        for j in 0..4 {
            if used[j] == 0 {
                return Err(TomoError::Calibration(format!(
                    "run {run_index}: no usable cells for detector B{}",
                    j + 1
                )));
            }
            total[j] += sums[j] / used[j] as f64;
        }
    }
    let mut ratios = total.map(|x| x / runs.len() as f64);
    ratios[0] = 1.0;
    EfficiencyCalibration::new(ratios)
}
