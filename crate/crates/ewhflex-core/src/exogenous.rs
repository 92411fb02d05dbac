//! Exogenous inputs: ambient climate, cold-water temperature and the hot
//! water draw events that drive the fleet's consumption.
//!
//! Draws follow a per-unit inhomogeneous event process: each minute a unit
//! starts a draw with a probability proportional to a 24-hour intensity
//! profile (morning and evening peaks), and event volumes are uniform within
//! a configurable range. The daily per-unit volume sets the event rate.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};
use crate::MINUTES_PER_DAY;

/// Errors raised while validating generator configs.
#[derive(Debug, thiserror::Error)]
pub enum ExogenousError {
    #[error("invalid draw config: {0}")]
    InvalidDraws(String),
    #[error("invalid climate config: {0}")]
    InvalidClimate(String),
}

/// Sinusoidal day/night ambient profile plus a constant cold-water feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateConfig<T> {
    pub ambient_mean_c: T,
    pub ambient_amplitude_c: T,
    /// Minute of day at which ambient is lowest (default 300 = 05:00).
    pub ambient_min_minute: usize,
    pub cold_water_c: T,
}

impl<T: Scalar> Default for ClimateConfig<T> {
    fn default() -> Self {
        Self {
            ambient_mean_c: c(20.0),
            ambient_amplitude_c: c(3.0),
            ambient_min_minute: 300,
            cold_water_c: c(15.0),
        }
    }
}

impl<T: Scalar> ClimateConfig<T> {
    /// Ambient temperature at a minute (wraps across days).
    pub fn ambient_at(&self, minute: usize) -> T {
        let phase = 2.0 * std::f64::consts::PI
            * ((minute as f64 - self.ambient_min_minute as f64) / MINUTES_PER_DAY as f64);
        self.ambient_mean_c - self.ambient_amplitude_c * c::<T>(phase.cos())
    }
}

/// Hot-water draw event process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawConfig<T> {
    /// Expected per-unit daily draw volume (l/day).
    pub daily_volume_l: T,
    /// Uniform event-volume range (l).
    pub event_volume_min_l: T,
    pub event_volume_max_l: T,
    /// Relative intensity per hour of day; need not be normalized.
    pub hourly_weights: Vec<f64>,
}

/// Default 24-hour intensity: low overnight, morning peak 7-9, midday
/// plateau, evening peak 19-22.
pub const DEFAULT_HOURLY_WEIGHTS: [f64; 24] = [
    0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.6, 2.5, 2.5, 1.0, 1.0, 1.0, 1.2, 1.2, 0.8, 0.8, 0.8, 1.2,
    1.2, 2.2, 2.2, 2.2, 0.5, 0.5,
];

impl<T: Scalar> Default for DrawConfig<T> {
    fn default() -> Self {
        Self {
            daily_volume_l: c(120.0),
            event_volume_min_l: c(5.0),
            event_volume_max_l: c(40.0),
            hourly_weights: DEFAULT_HOURLY_WEIGHTS.to_vec(),
        }
    }
}

impl<T: Scalar> DrawConfig<T> {
    /// Per-minute event probabilities for each hour of day.
    pub fn minute_probabilities(&self) -> Result<[f64; 24], ExogenousError> {
        if self.hourly_weights.len() != 24 {
            return Err(ExogenousError::InvalidDraws(format!(
                "expected 24 hourly weights, got {}",
                self.hourly_weights.len()
            )));
        }
        if self.hourly_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ExogenousError::InvalidDraws(
                "hourly weights must be finite and non-negative".into(),
            ));
        }
        let weight_sum: f64 = self.hourly_weights.iter().sum();
        if weight_sum <= 0.0 {
            return Err(ExogenousError::InvalidDraws(
                "hourly weights must not all be zero".into(),
            ));
        }
        let min_l = self.event_volume_min_l.to_f64();
        let max_l = self.event_volume_max_l.to_f64();
        let daily = self.daily_volume_l.to_f64();
        if !(min_l > 0.0 && max_l >= min_l && daily >= 0.0) {
            return Err(ExogenousError::InvalidDraws(
                "volumes must satisfy 0 < min ≤ max and daily ≥ 0".into(),
            ));
        }
        let mean_event = 0.5 * (min_l + max_l);
        let events_per_day = daily / mean_event;
        let mut probs = [0.0f64; 24];
        for (h, w) in self.hourly_weights.iter().enumerate() {
            probs[h] = events_per_day * w / (60.0 * weight_sum);
            if probs[h] > 1.0 {
                return Err(ExogenousError::InvalidDraws(format!(
                    "hour {h}: per-minute event probability {} exceeds 1",
                    probs[h]
                )));
            }
        }
        Ok(probs)
    }
}

/// Per-minute exogenous series covering one simulation span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousInputs<T> {
    n_units: usize,
    horizon_min: usize,
    ambient_c: Vec<T>,
    cold_water_c: Vec<T>,
    /// Dense draw volumes, indexed `minute * n_units + unit` (l).
    draws_l: Vec<T>,
}

impl<T: Scalar> ExogenousInputs<T> {
    /// Constant climate and no draws; handy for tests and idealized runs.
    pub fn constant(n_units: usize, horizon_min: usize, ambient_c: T, cold_water_c: T) -> Self {
        Self {
            n_units,
            horizon_min,
            ambient_c: vec![ambient_c; horizon_min],
            cold_water_c: vec![cold_water_c; horizon_min],
            draws_l: vec![T::zero(); horizon_min * n_units],
        }
    }

    /// Samples a full input realization. Deterministic for a fixed RNG
    /// state: minutes advance in order and units are visited in index order
    /// within each minute.
    pub fn generate<R: Rng>(
        n_units: usize,
        horizon_min: usize,
        climate: &ClimateConfig<T>,
        draws: &DrawConfig<T>,
        rng: &mut R,
    ) -> Result<Self, ExogenousError> {
        if !climate.ambient_mean_c.is_finite()
            || !climate.ambient_amplitude_c.is_finite()
            || !climate.cold_water_c.is_finite()
        {
            return Err(ExogenousError::InvalidClimate("non-finite value".into()));
        }
        let probs = draws.minute_probabilities()?;
        let volume_dist =
            Uniform::new_inclusive(draws.event_volume_min_l, draws.event_volume_max_l);
        let mut ambient = Vec::with_capacity(horizon_min);
        let mut cold = Vec::with_capacity(horizon_min);
        let mut draws_l = vec![T::zero(); horizon_min * n_units];
        for minute in 0..horizon_min {
            ambient.push(climate.ambient_at(minute));
            cold.push(climate.cold_water_c);
            let p = probs[(minute / 60) % 24];
            let row = &mut draws_l[minute * n_units..(minute + 1) * n_units];
            for slot in row.iter_mut() {
                if rng.gen::<f64>() < p {
                    *slot = volume_dist.sample(rng);
                }
            }
        }
        Ok(Self {
            n_units,
            horizon_min,
            ambient_c: ambient,
            cold_water_c: cold,
            draws_l,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn horizon_min(&self) -> usize {
        self.horizon_min
    }

    #[inline]
    pub fn ambient_c(&self, minute: usize) -> T {
        self.ambient_c[minute]
    }

    #[inline]
    pub fn cold_water_c(&self, minute: usize) -> T {
        self.cold_water_c[minute]
    }

    #[inline]
    pub fn draw_liters(&self, minute: usize, unit: usize) -> T {
        self.draws_l[minute * self.n_units + unit]
    }

    /// Total volume drawn by all units over the span (l).
    pub fn total_draw_liters(&self) -> T {
        let mut sum = T::zero();
        for v in &self.draws_l {
            sum += *v;
        }
        sum
    }
}
