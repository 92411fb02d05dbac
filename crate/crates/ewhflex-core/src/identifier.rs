//! Online identification of the scalar ARX model of aggregate power,
//! P_a(k+1) = a·P_a(k) + b·Δθ(k) + w, with slowly varying coefficients.
//!
//! The estimator is recursive least squares in Kalman-filter form over the
//! parameter vector (a, b, w) with regressor φ = (P_a(k), Δθ(k), 1). A
//! diagonal process-noise term R₁ sets the memory: R₁ = 0 reproduces the
//! infinite-memory (batch least squares) estimator exactly, while a small
//! R₁ > 0 lets the estimate track time variation. Power is normalized by the
//! aggregate's nominal total internally; estimates are de-normalized on read.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::scalar::{c, Scalar};

/// Errors from identifier construction and updates.
#[derive(Debug, thiserror::Error)]
pub enum IdentifierError {
    #[error("invalid identifier config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

/// Point estimate of the ARX coefficients in engineering units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArxEstimate<T> {
    /// Autoregressive coefficient (dimensionless).
    pub a: T,
    /// Input gain (kW per °C of broadcast delta).
    pub b_kw_per_c: T,
    /// Affine term (kW).
    pub w_kw: T,
}

/// One-step power prediction from an estimate: a·P_a + b·Δθ + w.
#[inline]
pub fn predict<T: Scalar>(estimate: &ArxEstimate<T>, p_a_kw: T, delta_theta_c: T) -> T {
    estimate.a * p_a_kw + estimate.b_kw_per_c * delta_theta_c + estimate.w_kw
}

/// Identifier configuration; see module docs for the normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierConfig<T> {
    /// Initial autoregressive coefficient.
    pub a0: T,
    /// Initial input gain, kW/°C.
    pub b0_kw_per_c: T,
    /// Prior variance σ₀² on each parameter (normalized units).
    pub sigma0_sq: T,
    /// Diagonal process noise R₁ per parameter (normalized units).
    pub r1: [T; 3],
    /// Measurement noise variance R₂ (normalized units).
    pub r2: T,
    /// Normalization scale: nominal aggregate power (kW).
    pub p_nom_kw: T,
}

impl<T: Scalar> IdentifierConfig<T> {
    /// Defaults for a given aggregate scale: a₀ = 0.9, b₀ = 0, σ₀² = 10⁴,
    /// R₁ = 10⁻⁶·I, R₂ = 10⁻⁴. The affine term w₀ is primed on the first
    /// update from the first observed power.
    pub fn defaults(p_nom_kw: T) -> Self {
        Self {
            a0: c(0.9),
            b0_kw_per_c: T::zero(),
            sigma0_sq: c(1e4),
            r1: [c(1e-6), c(1e-6), c(1e-6)],
            r2: c(1e-4),
            p_nom_kw,
        }
    }

    fn validate(&self) -> Result<(), IdentifierError> {
        if !(self.a0.is_finite() && self.b0_kw_per_c.is_finite()) {
            return Err(IdentifierError::NonFinite("initial estimate"));
        }
        if !(self.sigma0_sq > T::zero()) {
            return Err(IdentifierError::InvalidConfig(
                "prior variance must be positive".into(),
            ));
        }
        if self.r1.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(IdentifierError::InvalidConfig(
                "process noise entries must be non-negative".into(),
            ));
        }
        if !(self.r2 > T::zero()) {
            return Err(IdentifierError::InvalidConfig(
                "measurement noise must be positive".into(),
            ));
        }
        if !(self.p_nom_kw > T::zero()) {
            return Err(IdentifierError::InvalidConfig(
                "normalization scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Recursive estimator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierState<T> {
    /// Normalized parameter vector (a, b_n, w_n).
    theta: [T; 3],
    /// 3×3 covariance, row-major, normalized units.
    covariance: [T; 9],
    r1: [T; 3],
    r2: T,
    p_nom_kw: T,
    /// Whether w₀ has been primed from the first observed power.
    primed: bool,
    updates: u64,
}

impl<T: Scalar> IdentifierState<T> {
    pub fn new(config: &IdentifierConfig<T>) -> Result<Self, IdentifierError> {
        config.validate()?;
        let z = T::zero();
        let s = config.sigma0_sq;
        Ok(Self {
            theta: [
                config.a0,
                config.b0_kw_per_c / config.p_nom_kw,
                T::zero(),
            ],
            covariance: [s, z, z, z, s, z, z, z, s],
            r1: config.r1,
            r2: config.r2,
            p_nom_kw: config.p_nom_kw,
            primed: false,
            updates: 0,
        })
    }

    /// One RLS step: `y_kw` is the measured P_a(k+1), `regressor` the pair
    /// (P_a(k), Δθ(k)) it is explained by.
    pub fn update(&mut self, y_kw: T, regressor: (T, T)) -> Result<(), IdentifierError> {
        let (p_prev_kw, delta_prev_c) = regressor;
        if !(y_kw.is_finite() && p_prev_kw.is_finite() && delta_prev_c.is_finite()) {
            return Err(IdentifierError::NonFinite("update inputs"));
        }
        let phi = [p_prev_kw / self.p_nom_kw, delta_prev_c, T::one()];
        let y = y_kw / self.p_nom_kw;
        if !self.primed {
            // w₀ = first-observed P_a × (1 − a₀), in normalized units: the
            // affine term that would hold the first observation stationary.
            self.theta[2] = phi[0] * (T::one() - self.theta[0]);
            self.primed = true;
        }
        let cov = &mut self.covariance;
        let mut c_phi = [T::zero(); 3];
        linalg::mat_vec(cov, &phi, &mut c_phi, 3);
        let denom = self.r2 + linalg::dot(&phi, &c_phi);
        let innovation = y - linalg::dot(&phi, &self.theta);
        if !innovation.is_finite() || !(denom > T::zero()) {
            return Err(IdentifierError::NonFinite("innovation"));
        }
        let gain = [c_phi[0] / denom, c_phi[1] / denom, c_phi[2] / denom];
        for i in 0..3 {
            self.theta[i] += gain[i] * innovation;
        }
        // C ← C − K(Cφ)ᵀ + R₁, then symmetrize for float hygiene.
        for i in 0..3 {
            for j in 0..3 {
                cov[i * 3 + j] -= gain[i] * c_phi[j];
            }
        }
        for i in 0..3 {
            cov[i * 3 + i] += self.r1[i];
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let m = (cov[i * 3 + j] + cov[j * 3 + i]) / c::<T>(2.0);
                cov[i * 3 + j] = m;
                cov[j * 3 + i] = m;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Current estimate in engineering units.
    pub fn estimate(&self) -> ArxEstimate<T> {
        ArxEstimate {
            a: self.theta[0],
            b_kw_per_c: self.theta[1] * self.p_nom_kw,
            w_kw: self.theta[2] * self.p_nom_kw,
        }
    }

    /// Normalized parameter vector (a, b_n, w_n).
    pub fn normalized_theta(&self) -> [T; 3] {
        self.theta
    }

    /// Row-major 3×3 covariance in normalized units.
    pub fn covariance(&self) -> &[T; 9] {
        &self.covariance
    }

    pub fn p_nom_kw(&self) -> T {
        self.p_nom_kw
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }
}
