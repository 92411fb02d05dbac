//! Dense box-constrained quadratic programming.
//!
//! Minimizes f(x) = ½·xᵀHx + gᵀx subject to lo ≤ x ≤ hi with a primal
//! active-set method: Newton steps on the free variables, ratio tests to the
//! first blocking bound, and single-variable releases driven by the bound
//! multipliers. Convergence is certified by the projected-KKT residual
//! ‖x − clamp(x − ∇f(x), lo, hi)‖∞; hitting the iteration cap is not an
//! error — the best iterate is returned along with its residual.

use crate::linalg;
use crate::scalar::{c, Scalar};

/// Errors from problem validation (never from failing to converge).
#[derive(Debug, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty box: lo[{0}] > hi[{0}]")]
    EmptyBox(usize),
    #[error("non-finite problem data")]
    NonFinite,
}

/// Solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Projected-KKT residual at `x` (∞-norm).
    pub kkt_residual: T,
    /// Whether the residual met the tolerance within the iteration cap.
    pub converged: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Free,
    AtLo,
    AtHi,
}

/// Objective value ½·xᵀHx + gᵀx.
pub fn objective<T: Scalar>(h: &[T], g: &[T], x: &[T]) -> T {
    let n = x.len();
    let mut hx = vec![T::zero(); n];
    linalg::mat_vec(h, x, &mut hx, n);
    linalg::dot(x, &hx) / c::<T>(2.0) + linalg::dot(g, x)
}

fn gradient<T: Scalar>(h: &[T], g: &[T], x: &[T], grad: &mut [T]) {
    let n = x.len();
    linalg::mat_vec(h, x, grad, n);
    for i in 0..n {
        grad[i] += g[i];
    }
}

fn projected_residual<T: Scalar>(x: &[T], grad: &[T], lo: &[T], hi: &[T]) -> T {
    let mut worst = T::zero();
    for i in 0..x.len() {
        let stepped = (x[i] - grad[i]).max(lo[i]).min(hi[i]);
        worst = worst.max((x[i] - stepped).abs());
    }
    worst
}

/// Solves the box QP. `x0` seeds the iteration (clamped into the box); pass
/// `None` to start from the clamped origin.
pub fn solve_box_qp<T: Scalar>(
    h: &[T],
    g: &[T],
    lo: &[T],
    hi: &[T],
    x0: Option<&[T]>,
    tolerance: T,
    max_iterations: usize,
) -> Result<QpSolution<T>, QpError> {
    let n = g.len();
    if h.len() != n * n || lo.len() != n || hi.len() != n {
        return Err(QpError::Dimension(format!(
            "H {}, g {}, lo {}, hi {}",
            h.len(),
            n,
            lo.len(),
            hi.len()
        )));
    }
    if h.iter().chain(g).chain(lo).chain(hi).any(|v| !v.is_finite()) {
        return Err(QpError::NonFinite);
    }
    for i in 0..n {
        if lo[i] > hi[i] {
            return Err(QpError::EmptyBox(i));
        }
    }
    if n == 0 {
        return Ok(QpSolution {
            x: Vec::new(),
            iterations: 0,
            kkt_residual: T::zero(),
            converged: true,
        });
    }

    let mut x: Vec<T> = match x0 {
        Some(seed) => seed
            .iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&v, (&l, &u))| v.max(l).min(u))
            .collect(),
        None => lo
            .iter()
            .zip(hi.iter())
            .map(|(&l, &u)| T::zero().max(l).min(u))
            .collect(),
    };
    let mut status: Vec<Status> = (0..n)
        .map(|i| {
            if x[i] <= lo[i] {
                Status::AtLo
            } else if x[i] >= hi[i] {
                Status::AtHi
            } else {
                Status::Free
            }
        })
        .collect();

    let mut grad = vec![T::zero(); n];
    let step_floor = tolerance * c::<T>(1e-3);
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        gradient(h, g, &x, &mut grad);
        let residual = projected_residual(&x, &grad, lo, hi);
        if residual <= tolerance {
            return Ok(QpSolution {
                x,
                iterations,
                kkt_residual: residual,
                converged: true,
            });
        }

        let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();
        let mut moved = false;
        if !free.is_empty() {
            let m = free.len();
            let mut h_ff = vec![T::zero(); m * m];
            let mut g_f = vec![T::zero(); m];
            for (r, &i) in free.iter().enumerate() {
                g_f[r] = -grad[i];
                for (s, &j) in free.iter().enumerate() {
                    h_ff[r * m + s] = h[i * n + j];
                }
            }
            let direction = match linalg::solve_spd(&h_ff, &g_f, m) {
                Ok(d) => d,
                Err(_) => {
                    // Extremely degenerate curvature even after the ridge:
                    // fall back to a projected gradient step, scaled by a
                    // cheap upper bound on the curvature.
                    let mut row_norm = T::zero();
                    for i in 0..n {
                        let mut s = T::zero();
                        for j in 0..n {
                            s += h[i * n + j].abs();
                        }
                        row_norm = row_norm.max(s);
                    }
                    let step = T::one() / (T::one() + row_norm);
                    for i in 0..n {
                        x[i] = (x[i] - step * grad[i]).max(lo[i]).min(hi[i]);
                    }
                    for i in 0..n {
                        status[i] = if x[i] <= lo[i] {
                            Status::AtLo
                        } else if x[i] >= hi[i] {
                            Status::AtHi
                        } else {
                            Status::Free
                        };
                    }
                    continue;
                }
            };
            let step_norm = direction
                .iter()
                .fold(T::zero(), |acc, d| acc.max(d.abs()));
            if step_norm > step_floor {
                // Ratio test: largest α ∈ (0, 1] keeping every free
                // variable inside its bounds; ties resolve to the lowest
                // index for determinism.
                let mut alpha = T::one();
                let mut blocking: Option<(usize, Status)> = None;
                for (r, &i) in free.iter().enumerate() {
                    let d = direction[r];
                    if d > T::zero() && x[i] + alpha * d > hi[i] {
                        alpha = (hi[i] - x[i]) / d;
                        blocking = Some((i, Status::AtHi));
                    } else if d < T::zero() && x[i] + alpha * d < lo[i] {
                        alpha = (lo[i] - x[i]) / d;
                        blocking = Some((i, Status::AtLo));
                    }
                }
                if alpha > T::zero() {
                    for (r, &i) in free.iter().enumerate() {
                        x[i] += alpha * direction[r];
                    }
                    moved = true;
                }
                if let Some((i, bound)) = blocking {
                    // Snap exactly onto the bound so feasibility is exact.
                    x[i] = match bound {
                        Status::AtHi => hi[i],
                        _ => lo[i],
                    };
                    status[i] = bound;
                }
            }
        }

        if !moved {
            // Stationary on the free set: release the bound variable whose
            // multiplier most violates optimality, if any.
            gradient(h, g, &x, &mut grad);
            let mut worst: Option<(usize, T)> = None;
            for i in 0..n {
                let violation = match status[i] {
                    Status::AtLo if grad[i] < T::zero() => -grad[i],
                    Status::AtHi if grad[i] > T::zero() => grad[i],
                    _ => continue,
                };
                if worst.map_or(true, |(_, v)| violation > v) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                Some((i, _)) => status[i] = Status::Free,
                // No violated multiplier and no step: numerically done.
                None => break,
            }
        }
    }

    gradient(h, g, &x, &mut grad);
    let residual = projected_residual(&x, &grad, lo, hi);
    let converged = residual <= tolerance;
    Ok(QpSolution {
        x,
        iterations,
        kkt_residual: residual,
        converged,
    })
}
