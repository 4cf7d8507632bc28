//! Two-sample Kolmogorov–Smirnov test.

use serde::{Deserialize, Serialize};

use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSResult {
    /// `sup |F₁ − F₂|` of the empirical CDFs.
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// `c(α) = √(−½ ln(α/2))`.
pub fn ks_critical_value(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Rejects equality of the two distributions iff `D > c(α) √((k+l)/(kl))`.
pub fn ks_two_sample(sample1: &[f64], sample2: &[f64], alpha: f64) -> Result<KSResult> {
    if sample1.is_empty() || sample2.is_empty() {
        return Err(SimError::InvalidConfig("KS samples must be non-empty".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::InvalidConfig(format!("alpha {alpha} outside (0, 1)")));
    }
    if sample1.iter().chain(sample2).any(|x| !x.is_finite()) {
        return Err(SimError::InvalidConfig("KS samples must be finite".into()));
    }
    let mut a = sample1.to_vec();
    let mut b = sample2.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (k, l) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < k && j < l {
        let x = a[i].min(b[j]);
        while i < k && a[i] <= x {
            i += 1;
        }
        while j < l && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / k as f64 - j as f64 / l as f64).abs());
    }
    let (kf, lf) = (k as f64, l as f64);
    let threshold = ks_critical_value(alpha) * ((kf + lf) / (kf * lf)).sqrt();
    Ok(KSResult { statistic: d, threshold, alpha, reject: d > threshold })
}
