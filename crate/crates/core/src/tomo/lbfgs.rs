//! Limited-memory BFGS with Armijo backtracking.
//!
//! Every accepted step strictly decreases the objective, so the recorded
//! trace is monotone.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop when the largest gradient component falls below this.
    pub gtol: f64,
    /// Relative decrease counted as stagnation.
    pub ftol: f64,
    /// Consecutive stagnating steps before stopping.
    pub patience: usize,
    pub max_iterations: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, gtol: 1e-8, ftol: 1e-15, patience: 10, max_iterations: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Stagnation,
    /// No decrease possible along the steepest-descent direction.
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns the objective and writes the gradient.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stagnant = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    for iter in 0..opts.max_iterations {
        let gnorm = inf_norm(&g);
        if gnorm <= opts.gtol {
            return LbfgsOutcome {
                x,
                f: fx,
                gradient_norm: gnorm,
                iterations: iter,
                termination: Termination::Gradient,
                trace,
            };
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1e-300),
        };
        d.iter_mut().for_each(|di| *di *= gamma);
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v / gnorm).collect();
            slope = dot(&g, &d);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            x_new.iter_mut().zip(&x).zip(&d).for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted.filter(|&v| v < fx) else {
            if history.is_empty() {
                return LbfgsOutcome {
                    x,
                    f: fx,
                    gradient_norm: gnorm,
                    iterations: iter,
                    termination: Termination::LineSearch,
                    trace,
                };
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        let decrease = fx - f_new;
        fx = f_new;
        trace.push(fx);

        if decrease <= opts.ftol * fx.abs().max(1.0) {
            stagnant += 1;
            if stagnant >= opts.patience {
                return LbfgsOutcome {
                    x,
                    f: fx,
                    gradient_norm: inf_norm(&g),
                    iterations: iter + 1,
                    termination: Termination::Stagnation,
                    trace,
                };
            }
        } else {
            stagnant = 0;
        }
    }
    let gradient_norm = inf_norm(&g);
    LbfgsOutcome {
        x,
        f: fx,
        gradient_norm,
        iterations: opts.max_iterations,
        termination: Termination::MaxIterations,
        trace,
    }
}
