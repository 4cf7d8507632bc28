//! Measurement model in product form.
//!
//! Every count cell is a ket `u ⊗ v` with a left factor `u` (Alice's detector,
//! or the scalar 1 for single-ququart tomography) and a right factor `v`
//! (Bob's detector). Cells sharing a left ket form a group, so predictions
//! need one partial contraction `σ_u = (u†⊗I) T (u⊗I)` per group instead of a
//! full 16-dimensional product per cell.

use num_complex::Complex64;

use super::{CoincidenceRow, EfficiencyCalibration, Result, TomoError, TomographyTarget};
use crate::linalg::{CMatrix, ONE};
use crate::optics::{build_projector_set, TomographySetting};

#[derive(Debug, Clone)]
struct Group {
    left: Vec<Complex64>,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    dl: usize,
    dr: usize,
    right: Vec<Vec<Complex64>>,
    groups: Vec<Group>,
    right_index: Vec<usize>,
    weights: Vec<f64>,
    counts: Vec<f64>,
}

fn check_counts(rows: &[CoincidenceRow], n_settings: usize) -> Result<()> {
    for r in rows {
        if r.setting == 0 || r.setting > n_settings {
            return Err(TomoError::InvalidInput(format!("setting index {} outside 1..={n_settings}", r.setting)));
        }
        if !(r.duration_s > 0.0 && r.duration_s.is_finite()) {
            return Err(TomoError::InvalidInput(format!("setting {}: non-positive duration", r.setting)));
        }
        if r.counts.iter().flatten().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(TomoError::InvalidInput(format!("setting {}: negative or non-finite count", r.setting)));
        }
    }
    Ok(())
}

impl MeasurementModel {
    /// Assembles the cells of `rows` for the requested reconstruction.
    ///
    /// For [`TomographyTarget::Joint`] the row setting `s` selects Alice's
    /// setting `(s−1) / n` and Bob's `(s−1) mod n` from the same `n`-entry
    /// catalog.
    pub fn build(
        rows: &[CoincidenceRow],
        settings: &[TomographySetting],
        calib: &EfficiencyCalibration,
        target: TomographyTarget,
    ) -> Result<Self> {
        let n = settings.len();
        let kets: Vec<Vec<Complex64>> = settings
            .iter()
            .flat_map(|s| build_projector_set(s).vectors().clone().map(|v| v.as_slice().to_vec()))
            .collect();
        let mut model = Self {
            dl: 1,
            dr: 4,
            right: kets.clone(),
            groups: Vec::new(),
            right_index: Vec::new(),
            weights: Vec::new(),
            counts: Vec::new(),
        };
        match target {
            TomographyTarget::Conditional(_) | TomographyTarget::BobMarginal => {
                check_counts(rows, n)?;
                for r in rows {
                    let s = r.setting - 1;
                    for j in 0..4 {
                        let count = match target {
                            TomographyTarget::Conditional(o) => r.counts[o.index() - 1][j],
                            _ => (0..4).map(|i| r.counts[i][j]).sum(),
                        };
                        model.push_cell(4 * s + j, r.duration_s * calib.ratios[j], count);
                    }
                }
                model.groups.push(Group { left: vec![ONE], start: 0, end: model.counts.len() });
            }
            TomographyTarget::Joint => {
                check_counts(rows, n * n)?;
                model.dl = 4;
                // cells bucketed by Alice ket (setting a, detector i)
                let mut buckets: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); 4 * n];
                for r in rows {
                    let (a, b) = ((r.setting - 1) / n, (r.setting - 1) % n);
                    for i in 0..4 {
                        for j in 0..4 {
                            buckets[4 * a + i].push((4 * b + j, r.duration_s * calib.ratios[j], r.counts[i][j]));
                        }
                    }
                }
                for (k, cells) in buckets.into_iter().enumerate() {
                    if cells.is_empty() {
                        continue;
                    }
                    let start = model.counts.len();
                    for (rj, w, c) in cells {
                        model.push_cell(rj, w, c);
                    }
                    model.groups.push(Group { left: kets[k].clone(), start, end: model.counts.len() });
                }
            }
        }
        Ok(model)
    }

    fn push_cell(&mut self, right: usize, weight: f64, count: f64) {
        self.right_index.push(right);
        self.weights.push(weight);
        self.counts.push(count);
    }

    pub fn dim(&self) -> usize {
        self.dl * self.dr
    }

    pub fn cell_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Same cells with different observed counts.
    pub fn with_counts(&self, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != self.counts.len() {
            return Err(TomoError::InvalidInput(format!(
                "expected {} counts, got {}",
                self.counts.len(),
                counts.len()
            )));
        }
        Ok(Self { counts, ..self.clone() })
    }

    /// The same experiment with every measurement ket `k` replaced by `U k`,
    /// where `U` acts on the full space. Only single-ququart models
    /// (no Alice factor) are supported.
    pub fn conjugated(&self, u: &CMatrix) -> Result<Self> {
        if self.dl != 1 || u.nrows() != self.dr || u.ncols() != self.dr {
            return Err(TomoError::InvalidInput(
                "conjugation needs a single-ququart model and a matching unitary".into(),
            ));
        }
        let right = self
            .right
            .iter()
            .map(|k| {
                let v = u * crate::linalg::CVector::from_column_slice(k);
                v.as_slice().to_vec()
            })
            .collect();
        Ok(Self { right, ..self.clone() })
    }

    /// `q_k = k† T k` for every cell.
    pub fn quadratic_forms(&self, t: &CMatrix, out: &mut [f64]) {
        let dr = self.dr;
        let mut sigma = vec![Complex64::new(0.0, 0.0); dr * dr];
        for g in &self.groups {
            if self.dl == 1 {
                let s = g.left[0].norm_sqr();
                for i in 0..dr {
                    for j in 0..dr {
                        sigma[i * dr + j] = t[(i, j)] * s;
                    }
                }
            } else {
                sigma.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for a in 0..self.dl {
                    for b in 0..self.dl {
                        let f = g.left[a].conj() * g.left[b];
                        if f.norm_sqr() == 0.0 {
                            continue;
                        }
                        for i in 0..dr {
                            for j in 0..dr {
                                sigma[i * dr + j] += f * t[(a * dr + i, b * dr + j)];
                            }
                        }
                    }
                }
            }
            for k in g.start..g.end {
                let v = &self.right[self.right_index[k]];
                let mut q = 0.0;
                for i in 0..dr {
                    let mut row = Complex64::new(0.0, 0.0);
                    for j in 0..dr {
                        row += sigma[i * dr + j] * v[j];
                    }
                    q += (v[i].conj() * row).re;
                }
                out[k] = q;
            }
        }
    }

    /// `G = Σ_k c_k k k†`.
    pub fn weighted_sum(&self, coeffs: &[f64]) -> CMatrix {
        let (dl, dr) = (self.dl, self.dr);
        let mut g = CMatrix::zeros(dl * dr, dl * dr);
        let mut m = vec![Complex64::new(0.0, 0.0); dr * dr];
        for grp in &self.groups {
            m.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for k in grp.start..grp.end {
                let ck = coeffs[k];
                if ck == 0.0 {
                    continue;
                }
                let v = &self.right[self.right_index[k]];
                for i in 0..dr {
                    let vi = v[i] * ck;
                    for j in 0..dr {
                        m[i * dr + j] += vi * v[j].conj();
                    }
                }
            }
            for a in 0..dl {
                for b in 0..dl {
                    let f = grp.left[a] * grp.left[b].conj();
                    if f.norm_sqr() == 0.0 {
                        continue;
                    }
                    for i in 0..dr {
                        for j in 0..dr {
                            g[(a * dr + i, b * dr + j)] += f * m[i * dr + j];
                        }
                    }
                }
            }
        }
        g
    }

    /// `Σ_k n_k ln n̄_k − n̄_k` with `n̄_k = w_k q_k`.
    pub fn poisson_log_likelihood(&self, q: &[f64]) -> f64 {
        let mut ll = 0.0;
        for k in 0..q.len() {
            let nbar = self.weights[k] * q[k];
            let n = self.counts[k];
            if n > 0.0 {
                ll += n * nbar.ln();
            }
            ll -= nbar;
        }
        ll
    }

    /// Log-likelihood with the pair rate profiled out:
    /// `Σ n ln(w q) + S ln(S / Σ w q) − S`. Invariant under scaling of `T`.
    pub fn profile_log_likelihood(&self, q: &[f64]) -> f64 {
        let s = self.total_counts();
        if s == 0.0 {
            return 0.0;
        }
        let mut ll = 0.0;
        let mut total = 0.0;
        for k in 0..q.len() {
            let wq = self.weights[k] * q[k];
            total += wq;
            let n = self.counts[k];
            if n > 0.0 {
                if wq <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += n * wq.ln();
            }
        }
        ll + s * (s / total).ln() - s
    }
}
