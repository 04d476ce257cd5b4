//! Dense symmetric positive definite algebra for small parameter counts.
//! Matrices are row-major `n × n` slices.

use crate::num::Real;

/// Lower Cholesky factor of `a`, or `None` when `a` is not positive definite.
pub fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] = y[i] - l[i * n + k] * y[k];
        }
        y[i] = y[i] / l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] = y[i] - l[k * n + i] * y[k];
        }
        y[i] = y[i] / l[i * n + i];
    }
    y
}

/// Inverse of a positive definite matrix.
pub fn spd_inverse<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let l = cholesky(a, n)?;
    let mut inv = vec![T::zero(); n * n];
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = cholesky_solve(&l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Some(inv)
}
