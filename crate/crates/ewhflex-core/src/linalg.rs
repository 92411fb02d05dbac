//! Small dense linear algebra helpers.
//!
//! Every system solved in this crate is tiny (a 3x3 covariance in the
//! identifier, a handful of free variables in the box QP), so the matrices
//! live in plain row-major slices and the routines below stay loop-based.

use crate::scalar::{c, Scalar};

/// Error raised when a factorization fails.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    /// The matrix handed to [`cholesky`] was not numerically positive
    /// definite; the payload is the pivot index that went non-positive.
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
}

/// Dot product of two equally sized slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&ai, &bi) in a.iter().zip(b.iter()) {
        acc += ai * bi;
    }
    acc
}

/// `y = A x` for a dense row-major `n x n` matrix.
pub fn mat_vec<T: Scalar>(a: &[T], x: &[T], y: &mut [T], n: usize) {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(y.len(), n);
    for i in 0..n {
        y[i] = dot(&a[i * n..(i + 1) * n], x);
    }
}

/// In-place lower Cholesky factorization of a symmetric positive definite
/// row-major matrix. On success the lower triangle of `a` holds `L` with
/// `A = L L^T`; the strict upper triangle is left untouched.
pub fn cholesky<T: Scalar>(a: &mut [T], n: usize) -> Result<(), LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= T::zero() || !diag.is_finite() {
            return Err(LinalgError::NotPositiveDefinite(j));
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

/// Solves `A x = b` in place given the Cholesky factor produced by
/// [`cholesky`] (forward then backward substitution).
pub fn cholesky_solve<T: Scalar>(l: &[T], b: &mut [T], n: usize) {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the symmetric positive definite system `A x = b`, retrying with a
/// small diagonal ridge when the bare factorization fails. Returns the
/// solution or the final factorization error.
pub fn solve_spd<T: Scalar>(a: &[T], b: &[T], n: usize) -> Result<Vec<T>, LinalgError> {
    let mut factor = a.to_vec();
    let mut x = b.to_vec();
    match cholesky(&mut factor, n) {
        Ok(()) => {
            cholesky_solve(&factor, &mut x, n);
            return Ok(x);
        }
        Err(_) => {}
    }
    // Ridge proportional to the largest diagonal entry keeps the retry
    // scale-free; one shot is enough for the mildly singular cases the QP
    // produces when the input gain estimate collapses to zero.
    let mut max_diag = T::zero();
    for i in 0..n {
        max_diag = max_diag.max(a[i * n + i].abs());
    }
    let ridge = (max_diag + T::one()) * c::<T>(1e-12);
    factor.copy_from_slice(a);
    for i in 0..n {
        factor[i * n + i] += ridge;
    }
    cholesky(&mut factor, n)?;
    x.copy_from_slice(b);
    cholesky_solve(&factor, &mut x, n);
    Ok(x)
}
