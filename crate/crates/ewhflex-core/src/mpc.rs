//! Receding-horizon optimization of the broadcast set-point delta.
//!
//! Each minute the controller minimizes, over L free moves held constant
//! after the control horizon, the finite-horizon cost
//!
//! ```text
//!   Σ_{j=k}^{k+T−1} [ w_P·(P(j) − P*(j))² + w_θ·Δθ(j)² + w_dθ·(Δθ(j) − Δθ(j−1))² ]
//!   + w_P·(P(k+T) − P*(k+T))²
//! ```
//!
//! with the power trajectory propagated by the identified ARX model with
//! frozen coefficients and normalized by the aggregate nominal power, subject
//! to box bounds on every move. The tail moves are eliminated exactly by
//! substitution, which condenses the problem to an L-variable box QP.

use serde::{Deserialize, Serialize};

use crate::identifier::ArxEstimate;
use crate::qp::{self, QpError};
use crate::scalar::{c, Scalar};

/// Errors from controller configuration and invocation.
#[derive(Debug, thiserror::Error)]
pub enum MpcError {
    #[error("invalid MPC config: {0}")]
    InvalidConfig(String),
    #[error("reference window has {got} entries, need horizon + 1 = {need}")]
    BadReference { got: usize, need: usize },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Objective weights. `w_p` multiplies squared normalized power errors;
/// `w_theta` and `w_dtheta` multiply squared °C quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub w_p: T,
    pub w_theta: T,
    pub w_dtheta: T,
}

impl<T: Scalar> Weights<T> {
    /// Comfort-first preset (normal operation): tracking weight 50/P_nom,
    /// heavy set-point and rate penalties.
    pub fn cm1_defaults(p_nom_kw: T) -> Self {
        Self {
            w_p: c::<T>(50.0) / p_nom_kw,
            w_theta: c(0.5),
            w_dtheta: c(1.0),
        }
    }

    /// Tracking-first preset (active service): tracking weight 5/P_nom with
    /// set-point and rate penalties relaxed by 50× and 1000×.
    pub fn cm2_defaults(p_nom_kw: T) -> Self {
        Self {
            w_p: c::<T>(5.0) / p_nom_kw,
            w_theta: c(0.01),
            w_dtheta: c(0.001),
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let vals = [self.w_p, self.w_theta, self.w_dtheta];
        if vals.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(MpcError::InvalidConfig(
                "weights must be finite and non-negative".into(),
            ));
        }
        if vals.iter().all(|v| *v == T::zero()) {
            return Err(MpcError::InvalidConfig(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Component-wise linear interpolation: `self` at σ = 0, `other` at 1.
    /// The convex form keeps both endpoints exact.
    pub fn blend(&self, other: &Self, sigma: T) -> Self {
        let lerp = |a: T, b: T| (T::one() - sigma) * a + sigma * b;
        Self {
            w_p: lerp(self.w_p, other.w_p),
            w_theta: lerp(self.w_theta, other.w_theta),
            w_dtheta: lerp(self.w_dtheta, other.w_dtheta),
        }
    }
}

/// Horizon and bound configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig<T> {
    /// Prediction horizon T in minutes.
    pub horizon_t_min: usize,
    /// Control horizon L in minutes (free moves).
    pub horizon_l_min: usize,
    pub delta_min_c: T,
    pub delta_max_c: T,
    pub solver_tolerance: T,
    pub max_iterations: usize,
    /// Normalization scale for the tracking terms (kW).
    pub p_nom_kw: T,
}

impl<T: Scalar> MpcConfig<T> {
    /// T = 30 min, L = 5 min, bounds ±10 °C, residual tolerance 10⁻⁸.
    pub fn defaults(p_nom_kw: T) -> Self {
        Self {
            horizon_t_min: 30,
            horizon_l_min: 5,
            delta_min_c: c(-10.0),
            delta_max_c: c(10.0),
            solver_tolerance: c(1e-8),
            max_iterations: 10_000,
            p_nom_kw,
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon_l_min < 1 || self.horizon_l_min > self.horizon_t_min {
            return Err(MpcError::InvalidConfig(format!(
                "need 1 ≤ L ≤ T, got L = {}, T = {}",
                self.horizon_l_min, self.horizon_t_min
            )));
        }
        if !(self.delta_min_c < self.delta_max_c) {
            return Err(MpcError::InvalidConfig("empty delta box".into()));
        }
        if !(self.solver_tolerance > T::zero()) || !(self.p_nom_kw > T::zero()) {
            return Err(MpcError::InvalidConfig(
                "tolerance and normalization scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Optimized trajectory and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution<T> {
    /// Δθ over [k, k+T−1]; entries from L−1 on are identical (tail rule).
    pub trajectory: Vec<T>,
    /// First element, the move actually broadcast.
    pub applied: T,
    /// Objective value of the returned trajectory.
    pub cost: T,
    pub kkt_residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Predicted aggregate power P(k+1..k+T) under the trajectory (kW).
    pub predicted_power_kw: Vec<T>,
}

/// Move index active at prediction stage `j` (tail rule).
#[inline]
fn move_index(j: usize, l: usize) -> usize {
    j.min(l - 1)
}

/// Evaluates the full objective for a candidate move vector by direct
/// recursion of the model — no condensation involved, so this doubles as an
/// independent cross-check of the QP assembly.
pub fn evaluate_objective<T: Scalar>(
    p_a_now_kw: T,
    prev_delta_c: T,
    model: &ArxEstimate<T>,
    reference_kw: &[T],
    weights: &Weights<T>,
    config: &MpcConfig<T>,
    moves: &[T],
) -> Result<T, MpcError> {
    let t = config.horizon_t_min;
    let l = config.horizon_l_min;
    if reference_kw.len() != t + 1 {
        return Err(MpcError::BadReference {
            got: reference_kw.len(),
            need: t + 1,
        });
    }
    if moves.len() != l {
        return Err(MpcError::InvalidConfig(format!(
            "expected {l} moves, got {}",
            moves.len()
        )));
    }
    let p_nom = config.p_nom_kw;
    let a = model.a;
    let b_n = model.b_kw_per_c / p_nom;
    let w_n = model.w_kw / p_nom;
    let mut p = p_a_now_kw / p_nom;
    let mut cost = weights.w_p * (p - reference_kw[0] / p_nom).powi(2);
    let mut prev = prev_delta_c;
    for j in 0..t {
        let d = moves[move_index(j, l)];
        cost += weights.w_theta * d * d + weights.w_dtheta * (d - prev).powi(2);
        p = a * p + b_n * d + w_n;
        cost += weights.w_p * (p - reference_kw[j + 1] / p_nom).powi(2);
        prev = d;
    }
    Ok(cost)
}

/// Solves the condensed box QP for one control step.
///
/// `reference_kw` must hold T+1 values covering P*(k..k+T); the entry at
/// index 0 only contributes a constant to the objective.
pub fn solve_mpc<T: Scalar>(
    p_a_now_kw: T,
    prev_delta_c: T,
    model: &ArxEstimate<T>,
    reference_kw: &[T],
    weights: &Weights<T>,
    config: &MpcConfig<T>,
) -> Result<ControlSolution<T>, MpcError> {
    config.validate()?;
    weights.validate()?;
    let t = config.horizon_t_min;
    let l = config.horizon_l_min;
    if reference_kw.len() != t + 1 {
        return Err(MpcError::BadReference {
            got: reference_kw.len(),
            need: t + 1,
        });
    }
    if !(p_a_now_kw.is_finite() && prev_delta_c.is_finite())
        || !(model.a.is_finite() && model.b_kw_per_c.is_finite() && model.w_kw.is_finite())
        || reference_kw.iter().any(|r| !r.is_finite())
    {
        return Err(MpcError::NonFinite("solve_mpc inputs"));
    }

    let p_nom = config.p_nom_kw;
    let a = model.a;
    let b_n = model.b_kw_per_c / p_nom;
    let w_n = model.w_kw / p_nom;
    let p0 = p_a_now_kw / p_nom;
    let two = c::<T>(2.0);

    // Stage constants and move sensitivities:
    //   P(k+i) = a^i·p0 + S_i·w_n + Σ_l b_n·A_{i,l}·d_l,
    // with S_i = Σ_{j<i} a^j and A_{i,l} = Σ_{j<i, m(j)=l} a^{i−1−j}; both
    // follow one-step recurrences, so no powers are formed explicitly.
    let mut h = vec![T::zero(); l * l];
    let mut g = vec![T::zero(); l];
    let mut a_row = vec![T::zero(); l];
    let mut g_row = vec![T::zero(); l];
    let mut a_pow = T::one();
    let mut s_geo = T::zero();
    for i in 1..=t {
        for x in a_row.iter_mut() {
            *x = *x * a;
        }
        a_row[move_index(i - 1, l)] += T::one();
        s_geo = s_geo * a + T::one(); // Σ_{j<i} a^j
        a_pow = a_pow * a; // a^i
        let c_i = a_pow * p0 + s_geo * w_n - reference_kw[i] / p_nom;
        for (x, &ai) in g_row.iter_mut().zip(a_row.iter()) {
            *x = b_n * ai;
        }
        for r in 0..l {
            g[r] += two * weights.w_p * c_i * g_row[r];
            for s in 0..l {
                h[r * l + s] += two * weights.w_p * g_row[r] * g_row[s];
            }
        }
    }
    // Set-point magnitude terms: moves before the tail appear once, the
    // tail move T−L+1 times.
    for r in 0..l {
        let multiplicity = if r == l - 1 {
            c::<T>((t - l + 1) as f64)
        } else {
            T::one()
        };
        h[r * l + r] += two * weights.w_theta * multiplicity;
    }
    // Rate terms: j = 0 anchors to prev_delta; boundaries j = 1..L−1 couple
    // adjacent moves; beyond the control horizon the difference vanishes.
    h[0] += two * weights.w_dtheta;
    g[0] -= two * weights.w_dtheta * prev_delta_c;
    for j in 1..l {
        h[j * l + j] += two * weights.w_dtheta;
        h[(j - 1) * l + (j - 1)] += two * weights.w_dtheta;
        h[j * l + (j - 1)] -= two * weights.w_dtheta;
        h[(j - 1) * l + j] -= two * weights.w_dtheta;
    }

    let lo = vec![config.delta_min_c; l];
    let hi = vec![config.delta_max_c; l];
    let warm = vec![prev_delta_c; l];
    let qp_sol = qp::solve_box_qp(
        &h,
        &g,
        &lo,
        &hi,
        Some(&warm),
        config.solver_tolerance,
        config.max_iterations,
    )?;

    let moves = qp_sol.x;
    let mut trajectory = Vec::with_capacity(t);
    for j in 0..t {
        trajectory.push(moves[move_index(j, l)]);
    }
    let mut predicted = Vec::with_capacity(t);
    let mut p = p0;
    for j in 0..t {
        p = a * p + b_n * trajectory[j] + w_n;
        predicted.push(p * p_nom);
    }
    let cost = evaluate_objective(
        p_a_now_kw,
        prev_delta_c,
        model,
        reference_kw,
        weights,
        config,
        &moves,
    )?;
    Ok(ControlSolution {
        applied: trajectory[0],
        trajectory,
        cost,
        kkt_residual: qp_sol.kkt_residual,
        iterations: qp_sol.iterations,
        converged: qp_sol.converged,
        predicted_power_kw: predicted,
    })
}

/// Sequential loop state for the receding-horizon controller.
#[derive(Debug, Clone)]
pub struct Controller<T> {
    config: MpcConfig<T>,
    prev_delta_c: T,
    solve_failures: u64,
}

impl<T: Scalar> Controller<T> {
    pub fn new(config: MpcConfig<T>) -> Result<Self, MpcError> {
        config.validate()?;
        Ok(Self {
            config,
            prev_delta_c: T::zero(),
            solve_failures: 0,
        })
    }

    pub fn config(&self) -> &MpcConfig<T> {
        &self.config
    }

    /// Last broadcast move Δθ(k−1); zero at the start of a run.
    pub fn prev_delta_c(&self) -> T {
        self.prev_delta_c
    }

    /// Number of steps that fell back to holding the previous move.
    pub fn solve_failures(&self) -> u64 {
        self.solve_failures
    }

    /// One receding-horizon step: solve, broadcast the first move, remember
    /// it for the next step's rate term. A solve rejected over bad runtime
    /// data falls back to holding the previous move; a reference window of
    /// the wrong length is a caller bug and propagates as an error.
    pub fn step(
        &mut self,
        model: &ArxEstimate<T>,
        p_a_now_kw: T,
        reference_kw: &[T],
        weights: &Weights<T>,
    ) -> Result<ControlSolution<T>, MpcError> {
        if reference_kw.len() != self.config.horizon_t_min + 1 {
            return Err(MpcError::BadReference {
                got: reference_kw.len(),
                need: self.config.horizon_t_min + 1,
            });
        }
        match solve_mpc(
            p_a_now_kw,
            self.prev_delta_c,
            model,
            reference_kw,
            weights,
            &self.config,
        ) {
            Ok(solution) => {
                self.prev_delta_c = solution.applied;
                Ok(solution)
            }
            Err(err) => {
                self.solve_failures += 1;
                log::warn!("MPC solve failed ({err}); holding previous move");
                let t = self.config.horizon_t_min;
                Ok(ControlSolution {
                    trajectory: vec![self.prev_delta_c; t],
                    applied: self.prev_delta_c,
                    cost: T::infinity(),
                    kkt_residual: T::infinity(),
                    iterations: 0,
                    converged: false,
                    predicted_power_kw: Vec::new(),
                })
            }
        }
    }
}
