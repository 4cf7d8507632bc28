//! Lower-triangular parametrization of positive semidefinite operators.
//!
//! A parameter vector `t` of length `d²` fills a lower-triangular `L`: the
//! first `d` entries are the real diagonal, the rest are `(re, im)` pairs of
//! the strictly lower part in column-major order (`L₁₀, L₂₀, …, L₂₁, …`).
//! The physical state is `ρ = L†L / Tr(L†L)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Result, TomoError};
use crate::linalg::{c, CMatrix, ZERO};
use crate::qcore::DensityOperator;

/// Real parameters of a lower-triangular Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParams {
    dim: usize,
    t: Vec<f64>,
}

impl CholeskyParams {
    pub fn new(dim: usize, t: Vec<f64>) -> Result<Self> {
        if dim == 0 || t.len() != dim * dim {
            return Err(TomoError::InvalidInput(format!(
                "{} parameters do not describe a {dim}-dimensional state",
                t.len()
            )));
        }
        Ok(Self { dim, t })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn lower(&self) -> CMatrix {
        lower_from_params(self.dim, &self.t)
    }
}

/// Number of real parameters for dimension `d`.
pub fn param_count(d: usize) -> usize {
    d * d
}

/// Fills `L` from a parameter slice.
pub fn lower_from_params(d: usize, t: &[f64]) -> CMatrix {
    let mut l = CMatrix::zeros(d, d);
    for i in 0..d {
        l[(i, i)] = c(t[i], 0.0);
    }
    let mut k = d;
    for j in 0..d {
        for i in j + 1..d {
            l[(i, j)] = c(t[k], t[k + 1]);
            k += 2;
        }
    }
    l
}

/// Inverse of [`lower_from_params`]; the strictly upper part and the
/// imaginary diagonal are ignored.
pub fn params_from_lower(l: &CMatrix) -> Vec<f64> {
    let d = l.nrows();
    let mut t = vec![0.0; d * d];
    for i in 0..d {
        t[i] = l[(i, i)].re;
    }
    let mut k = d;
    for j in 0..d {
        for i in j + 1..d {
            t[k] = l[(i, j)].re;
            t[k + 1] = l[(i, j)].im;
            k += 2;
        }
    }
    t
}

/// `L†L` without normalization.
pub fn gram_from_params(d: usize, t: &[f64]) -> CMatrix {
    let l = lower_from_params(d, t);
    l.adjoint() * l
}

/// `ρ = L†L / Tr(L†L)`.
pub fn cholesky_to_density(params: &CholeskyParams) -> Result<DensityOperator> {
    let d = params.dim;
    let tr: f64 = params.t.iter().map(|x| x * x).sum();
    if tr == 0.0 || !tr.is_finite() {
        return Err(TomoError::DegenerateState);
    }
    let m = gram_from_params(d, &params.t).unscale(tr);
    DensityOperator::new(m).map_err(TomoError::State)
}

/// Draws factor parameters whose `L†L` is a complex Wishart matrix, so that
/// the induced state is Hilbert–Schmidt distributed.
///
/// Bartlett decomposition: `t_i² ~ Gamma(i, 1)` for the 1-based diagonal
/// index `i`, with a random sign, and the real and imaginary parts of each
/// off-diagonal entry are `N(0, ½)`.
pub fn hs_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut t = vec![0.0; d * d];
    for (i, ti) in t.iter_mut().take(d).enumerate() {
        let g: f64 = Gamma::new((i + 1) as f64, 1.0).expect("positive shape").sample(rng);
        *ti = if rng.random::<bool>() { g.sqrt() } else { -g.sqrt() };
    }
    for x in t.iter_mut().skip(d) {
        let z: f64 = StandardNormal.sample(rng);
        *x = z * std::f64::consts::FRAC_1_SQRT_2;
    }
    t
}

/// Log density of [`hs_sample`] up to a constant.
pub fn hs_log_prior(d: usize, t: &[f64]) -> f64 {
    let mut lp = 0.0;
    for (i, &ti) in t.iter().take(d).enumerate() {
        lp += (2 * i + 1) as f64 * ti.abs().ln();
    }
    lp - t.iter().map(|x| x * x).sum::<f64>()
}

/// Standard Cholesky `A = C C†` with `C` lower triangular and a non-negative
/// real diagonal. Pivots below `tol` are treated as zero, which makes the
/// routine usable on singular positive semidefinite input.
fn cholesky_lower(a: &CMatrix, tol: f64) -> CMatrix {
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if pivot <= tol {
            continue;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = c(ljj, 0.0);
        for i in j + 1..n {
            let mut s: Complex64 = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

/// Parameters whose factor reproduces `ρ` (up to the trace), `ρ = L†L`.
///
/// `L†L` with `L` lower triangular is an upper-times-lower factorization, so
/// it is obtained from the ordinary Cholesky factor of the index-reversed
/// matrix.
pub fn density_to_cholesky(rho: &DensityOperator) -> CholeskyParams {
    let d = rho.dim();
    let m = rho.matrix();
    let reversed = CMatrix::from_fn(d, d, |i, j| m[(d - 1 - i, d - 1 - j)]);
    let cl = cholesky_lower(&reversed, 1e-14);
    // U = J C J is upper triangular with ρ = U U†, and L = U†.
    let u = CMatrix::from_fn(d, d, |i, j| cl[(d - 1 - i, d - 1 - j)]);
    let l = u.adjoint();
    debug_assert!(l.upper_triangle().iter().enumerate().all(|(k, z)| k % (d + 1) == 0 || *z == ZERO));
    CholeskyParams { dim: d, t: params_from_lower(&l) }
}
