//! Binary logit likelihood with per-group scale multipliers.
//!
//! Row `i` in group `g` chooses the AV alternative with probability
//! `σ(μ_g · x_i·β)`. The free parameters are `β` followed by the scales of
//! every group except the reference, whose scale is fixed at 1.

use crate::num::Real;

/// Rows in matrix form, ready for repeated likelihood evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T: Copy> {
    /// Covariates per row; absent trailing covariates are zero.
    pub k: usize,
    pub x: Vec<T>,
    pub y: Vec<bool>,
    pub group: Vec<usize>,
    pub groups: usize,
    pub reference: usize,
}

/// Likelihood value, gradient and Hessian over the free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub loglik: T,
    pub gradient: Vec<T>,
    /// Row-major, `dim × dim`.
    pub hessian: Vec<T>,
}

fn softplus<T: Real>(u: T) -> T {
    u.max(T::zero()) + (-u.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> DesignMatrix<T> {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.k + self.groups - 1
    }

    fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    /// Position of group `g`'s scale in the free parameter vector.
    pub fn scale_slot(&self, g: usize) -> Option<usize> {
        match g.cmp(&self.reference) {
            std::cmp::Ordering::Less => Some(self.k + g),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(self.k + g - 1),
        }
    }

    /// Full scale vector from the free parameters.
    pub fn scales(&self, theta: &[T]) -> Vec<T> {
        (0..self.groups).map(|g| self.scale_slot(g).map_or(T::one(), |s| theta[s])).collect()
    }

    /// Free parameter vector from `β` and a full scale vector.
    pub fn pack(&self, beta: &[T], scales: &[T]) -> Vec<T> {
        let mut theta = beta.to_vec();
        theta.extend((0..self.groups).filter(|&g| g != self.reference).map(|g| scales[g]));
        theta
    }

    /// Log-likelihood, summed over rows in order.
    pub fn loglik(&self, beta: &[T], scales: &[T]) -> T {
        let mut total = T::zero();
        for i in 0..self.rows() {
            let v: T = self.row(i).iter().zip(beta).map(|(&a, &b)| a * b).sum();
            let u = scales[self.group[i]] * v;
            total = total + if self.y[i] { u } else { T::zero() } - softplus(u);
        }
        total
    }

    /// Value, analytic gradient and Hessian at the free parameters `theta`.
    pub fn evaluate(&self, theta: &[T], with_hessian: bool) -> Evaluation<T> {
        let (k, dim) = (self.k, self.dim());
        let scales = self.scales(theta);
        let beta = &theta[..k];
        let mut loglik = T::zero();
        let mut gradient = vec![T::zero(); dim];
        let mut hessian = vec![T::zero(); if with_hessian { dim * dim } else { 0 }];
        for i in 0..self.rows() {
            let x = self.row(i);
            let g = self.group[i];
            let mu = scales[g];
            let v: T = x.iter().zip(beta).map(|(&a, &b)| a * b).sum();
            let u = mu * v;
            let y = if self.y[i] { T::one() } else { T::zero() };
            let p = sigmoid(u);
            let r = y - p;
            loglik = loglik + y * u - softplus(u);
            let slot = self.scale_slot(g);
            for a in 0..k {
                gradient[a] = gradient[a] + r * mu * x[a];
            }
            if let Some(s) = slot {
                gradient[s] = gradient[s] + r * v;
            }
            if !with_hessian {
                continue;
            }
            let w = p * (T::one() - p);
            for a in 0..k {
                for b in 0..=a {
                    let h = -w * mu * mu * x[a] * x[b];
                    hessian[a * dim + b] = hessian[a * dim + b] + h;
                }
            }
            if let Some(s) = slot {
                for a in 0..k {
                    hessian[s * dim + a] = hessian[s * dim + a] + (r - w * u) * x[a];
                }
                hessian[s * dim + s] = hessian[s * dim + s] - w * v * v;
            }
        }
        if with_hessian {
            for a in 0..dim {
                for b in 0..a {
                    hessian[b * dim + a] = hessian[a * dim + b];
                }
            }
        }
        Evaluation { loglik, gradient, hessian }
    }
}
