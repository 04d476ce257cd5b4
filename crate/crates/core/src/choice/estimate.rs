//! Maximum likelihood by damped Newton steps.

use serde::{Deserialize, Serialize};

use super::likelihood::{DesignMatrix, Evaluation};
use super::linalg::{cholesky, cholesky_solve, spd_inverse};
use super::ChoiceError;
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Converged once the gradient infinity-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A coefficient beyond this magnitude while the gradient is still
    /// non-vanishing is reported as separation.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-6, max_iterations: 200, separation_bound: 50.0 }
    }
}

/// Free parameters at the maximum and their sampling covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit<T> {
    pub theta: Vec<T>,
    pub covariance: Vec<T>,
    pub loglik: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
/// Fits above this log-likelihood predict every row with probability above
/// 0.999 and are reported as separated.
const SEPARATED_LOGLIK: f64 = -1.0005e-3;

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Backtracks from a unit step along `dir` until the Armijo condition holds.
/// Steps that make a scale non-positive are rejected.
fn line_search<T: Real>(d: &DesignMatrix<T>, theta: &[T], ev: &Evaluation<T>, dir: &[T]) -> Option<(Vec<T>, T)> {
    let slope: T = ev.gradient.iter().zip(dir).map(|(&g, &p)| g * p).sum();
    if !(slope > T::zero()) {
        return None;
    }
    let mut alpha = T::one();
    while alpha > T::lit(MIN_STEP) {
        let cand: Vec<T> = theta.iter().zip(dir).map(|(&t, &p)| t + alpha * p).collect();
        if cand[d.k..].iter().all(|&s| s > T::zero()) {
            let l = d.loglik(&cand[..d.k], &d.scales(&cand));
            if l.is_finite() && l >= ev.loglik + T::lit(ARMIJO) * alpha * slope {
                return Some((cand, l));
            }
        }
        alpha = alpha * T::lit(0.5);
    }
    None
}

/// Maximizes the likelihood from `β = 0` and unit scales.
pub fn fit<T: Real>(d: &DesignMatrix<T>, names: &[String], opts: &FitOptions) -> Result<Fit<T>, ChoiceError> {
    let dim = d.dim();
    let mut theta = vec![T::zero(); d.k];
    theta.extend(std::iter::repeat(T::one()).take(d.groups - 1));
    let tol = T::lit(opts.tolerance);
    let bound = T::lit(opts.separation_bound);
    let mut iterations = 0;
    let mut converged = false;
    let mut ev = d.evaluate(&theta, true);
    loop {
        let gnorm = inf_norm(&ev.gradient);
        if gnorm < tol {
            converged = true;
            break;
        }
        if let Some(a) = (0..d.k).find(|&a| theta[a].abs() > bound) {
            return Err(ChoiceError::Separation {
                covariate: names.get(a).cloned().unwrap_or_else(|| format!("#{a}")),
                value: theta[a].to_f64().unwrap_or(f64::NAN),
                gradient_norm: gnorm.to_f64().unwrap_or(f64::NAN),
            });
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let info: Vec<T> = ev.hessian.iter().map(|&h| -h).collect();
        let newton = cholesky(&info, dim).map(|l| cholesky_solve(&l, dim, &ev.gradient));
        let step = newton
            .and_then(|dir| line_search(d, &theta, &ev, &dir))
            .or_else(|| {
                let scale = T::one() / gnorm.max(T::one());
                let dir: Vec<T> = ev.gradient.iter().map(|&g| g * scale).collect();
                line_search(d, &theta, &ev, &dir)
            });
        match step {
            Some((next, _)) => {
                theta = next;
                ev = d.evaluate(&theta, true);
            }
            None => break,
        }
    }
    if ev.loglik > T::lit(SEPARATED_LOGLIK) {
        let a = (0..d.k).max_by(|&a, &b| theta[a].abs().partial_cmp(&theta[b].abs()).expect("finite")).unwrap_or(0);
        return Err(ChoiceError::Separation {
            covariate: names.get(a).cloned().unwrap_or_else(|| format!("#{a}")),
            value: theta[a].to_f64().unwrap_or(f64::NAN),
            gradient_norm: inf_norm(&ev.gradient).to_f64().unwrap_or(f64::NAN),
        });
    }
    let info: Vec<T> = ev.hessian.iter().map(|&h| -h).collect();
    let covariance = spd_inverse(&info, dim).ok_or(ChoiceError::SingularInformation)?;
    Ok(Fit { gradient_norm: inf_norm(&ev.gradient), theta, covariance, loglik: ev.loglik, iterations, converged })
}
