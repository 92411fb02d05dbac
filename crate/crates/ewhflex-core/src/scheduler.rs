//! Time scheduling of the reference signal and control-mode weights.
//!
//! A demand-response request asks the aggregate to deviate from its baseline
//! by a signed amount for a window of minutes. Around each window the
//! schedule shapes two piecewise-linear, continuous signals:
//!
//! * the **reference** — baseline outside the window, baseline + ΔP* on the
//!   plateau, joined by 5-minute ramps starting at the window edges;
//! * the **weights** — comfort-first (CM1) far from service, tracking-first
//!   (CM2) during service, blended linearly over 5 minutes ending at the
//!   service start, and after the service either blended straight back
//!   (5 minutes) or, with rebound mitigation, held at CM2 for the service
//!   duration and then ramped back over an hour.

use serde::{Deserialize, Serialize};

use crate::mpc::Weights;
use crate::scalar::{c, Scalar};

/// Shortest and longest admissible service durations, minutes.
pub const MIN_DURATION_MIN: usize = 15;
pub const MAX_DURATION_MIN: usize = 180;

/// Errors raised while validating a schedule.
#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("request duration {got} min outside [{MIN_DURATION_MIN}, {MAX_DURATION_MIN}]")]
    BadDuration { got: usize },
    #[error("request [{start}, {end}) does not fit the {horizon}-minute span")]
    OutOfSpan {
        start: usize,
        end: usize,
        horizon: usize,
    },
    #[error(
        "requests {first} and {second} overlap once ramps and rebound holds are included"
    )]
    Overlap { first: usize, second: usize },
    #[error("mode schedule invalid: {0}")]
    BadMode(String),
    #[error("non-finite request magnitude")]
    NonFinite,
}

/// One demand-response service request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrRequest<T> {
    /// Service start τ, minute of day.
    pub start_tau_min: usize,
    /// Service duration Δt, minutes.
    pub duration_min: usize,
    /// Requested deviation from baseline, kW; downward requests are negative.
    pub delta_p_star_kw: T,
    /// Hold tracking mode after the service to damp the payback rebound.
    pub rebound_mitigation: bool,
}

impl<T: Scalar> DrRequest<T> {
    pub fn end_min(&self) -> usize {
        self.start_tau_min + self.duration_min
    }

    fn validate(&self, horizon_min: usize) -> Result<(), ScheduleError> {
        if self.duration_min < MIN_DURATION_MIN || self.duration_min > MAX_DURATION_MIN {
            return Err(ScheduleError::BadDuration {
                got: self.duration_min,
            });
        }
        if self.end_min() > horizon_min {
            return Err(ScheduleError::OutOfSpan {
                start: self.start_tau_min,
                end: self.end_min(),
                horizon: horizon_min,
            });
        }
        if !self.delta_p_star_kw.is_finite() {
            return Err(ScheduleError::NonFinite);
        }
        Ok(())
    }
}

/// Control-mode weight pair and the ramp timings between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule<T> {
    pub cm1_weights: Weights<T>,
    pub cm2_weights: Weights<T>,
    /// Blend length into and (without mitigation) out of service, minutes.
    pub cm_ramp_min: usize,
    /// Blend length back to CM1 after a mitigated service, minutes.
    pub rebound_ramp_min: usize,
}

impl<T: Scalar> ModeSchedule<T> {
    /// Preset weights with 5-minute mode ramps and a 60-minute rebound ramp.
    pub fn defaults(p_nom_kw: T) -> Self {
        Self {
            cm1_weights: Weights::cm1_defaults(p_nom_kw),
            cm2_weights: Weights::cm2_defaults(p_nom_kw),
            cm_ramp_min: 5,
            rebound_ramp_min: 60,
        }
    }

    fn validate(&self) -> Result<(), ScheduleError> {
        if self.cm_ramp_min == 0 || self.rebound_ramp_min == 0 {
            return Err(ScheduleError::BadMode("ramp durations must be > 0".into()));
        }
        self.cm1_weights
            .validate()
            .and(self.cm2_weights.validate())
            .map_err(|e| ScheduleError::BadMode(e.to_string()))
    }
}

/// Construction options.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleOptions {
    /// Shorten rebound holds that would collide with the next request's
    /// entry ramp instead of rejecting the schedule; the ramp itself is
    /// never shortened, and a truncation is logged.
    pub truncate_holds: bool,
}

#[derive(Debug, Clone, Copy)]
struct ScheduledRequest<T> {
    request: DrRequest<T>,
    /// Minutes CM2 is held past the service end (0 without mitigation).
    hold_min: usize,
    /// Length of the blend back to CM1 after the hold.
    ramp_out_min: usize,
}

impl<T: Scalar> ScheduledRequest<T> {
    /// Earliest minute the request influences the weight schedule.
    fn footprint_start(&self, cm_ramp: usize) -> f64 {
        self.request.start_tau_min as f64 - cm_ramp as f64
    }

    /// Latest minute the request influences the weight schedule.
    fn footprint_end(&self) -> f64 {
        (self.request.end_min() + self.hold_min + self.ramp_out_min) as f64
    }

    /// Tracking-mode activation σ ∈ [0, 1] at continuous minute `k`.
    fn sigma_at(&self, k: T, cm_ramp: usize) -> T {
        let tau = c::<T>(self.request.start_tau_min as f64);
        let ramp_in = c::<T>(cm_ramp as f64);
        let hold_end = c::<T>((self.request.end_min() + self.hold_min) as f64);
        let ramp_out = c::<T>(self.ramp_out_min as f64);
        if k <= tau - ramp_in || k >= hold_end + ramp_out {
            T::zero()
        } else if k < tau {
            (k - (tau - ramp_in)) / ramp_in
        } else if k <= hold_end {
            T::one()
        } else {
            T::one() - (k - hold_end) / ramp_out
        }
    }

    /// Deviation of the reference from baseline at continuous minute `k`.
    fn deviation_at(&self, k: T, ref_ramp: usize) -> T {
        let tau = c::<T>(self.request.start_tau_min as f64);
        let end = c::<T>(self.request.end_min() as f64);
        let ramp = c::<T>(ref_ramp as f64);
        let dp = self.request.delta_p_star_kw;
        if k <= tau || k >= end + ramp {
            T::zero()
        } else if k < tau + ramp {
            dp * (k - tau) / ramp
        } else if k <= end {
            dp
        } else {
            dp * (T::one() - (k - end) / ramp)
        }
    }
}

/// Validated, immutable schedule; all queries are pure.
#[derive(Debug, Clone)]
pub struct Schedule<T> {
    mode: ModeSchedule<T>,
    requests: Vec<ScheduledRequest<T>>,
    horizon_min: usize,
    breakpoints: Vec<usize>,
}

/// Validates requests against the span and each other and precomputes the
/// weight-schedule breakpoints. Requests are ordered by start time first.
pub fn build_schedule<T: Scalar>(
    requests: &[DrRequest<T>],
    mode: ModeSchedule<T>,
    horizon_min: usize,
    options: ScheduleOptions,
) -> Result<Schedule<T>, ScheduleError> {
    mode.validate()?;
    let mut ordered: Vec<DrRequest<T>> = requests.to_vec();
    ordered.sort_by_key(|r| r.start_tau_min);
    for request in &ordered {
        request.validate(horizon_min)?;
    }
    let mut scheduled: Vec<ScheduledRequest<T>> = Vec::with_capacity(ordered.len());
    for (idx, request) in ordered.iter().enumerate() {
        let (mut hold_min, ramp_out_min) = if request.rebound_mitigation {
            (request.duration_min, mode.rebound_ramp_min)
        } else {
            (0, mode.cm_ramp_min)
        };
        if let Some(next) = ordered.get(idx + 1) {
            let next_entry = next.start_tau_min as f64 - mode.cm_ramp_min as f64;
            let tail_end = (request.end_min() + hold_min + ramp_out_min) as f64;
            if tail_end > next_entry {
                let available = next_entry - (request.end_min() + ramp_out_min) as f64;
                if options.truncate_holds && available >= 0.0 {
                    let truncated = (available as usize).min(hold_min);
                    if truncated < hold_min {
                        log::warn!(
                            "rebound hold of request starting at minute {} truncated \
                             from {} to {} min to clear the next request",
                            request.start_tau_min,
                            hold_min,
                            truncated
                        );
                        hold_min = truncated;
                    }
                } else {
                    return Err(ScheduleError::Overlap {
                        first: idx,
                        second: idx + 1,
                    });
                }
            }
        }
        scheduled.push(ScheduledRequest {
            request: *request,
            hold_min,
            ramp_out_min,
        });
    }
    // With holds resolved, footprints must be non-decreasing and disjoint.
    for idx in 1..scheduled.len() {
        if scheduled[idx].footprint_start(mode.cm_ramp_min) < scheduled[idx - 1].footprint_end() {
            return Err(ScheduleError::Overlap {
                first: idx - 1,
                second: idx,
            });
        }
    }
    let mut breakpoints: Vec<usize> = Vec::new();
    for s in &scheduled {
        let entry = s.request.start_tau_min.saturating_sub(mode.cm_ramp_min);
        let hold_end = s.request.end_min() + s.hold_min;
        breakpoints.extend_from_slice(&[
            entry,
            s.request.start_tau_min,
            hold_end,
            hold_end + s.ramp_out_min,
        ]);
    }
    breakpoints.sort_unstable();
    breakpoints.dedup();
    Ok(Schedule {
        mode,
        requests: scheduled,
        horizon_min,
        breakpoints,
    })
}

impl<T: Scalar> Schedule<T> {
    pub fn mode(&self) -> &ModeSchedule<T> {
        &self.mode
    }

    pub fn horizon_min(&self) -> usize {
        self.horizon_min
    }

    /// Minutes at which the weight schedule changes slope, sorted.
    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    /// Requests in start order, with the rebound hold actually applied.
    pub fn requests(&self) -> impl Iterator<Item = (&DrRequest<T>, usize)> {
        self.requests.iter().map(|s| (&s.request, s.hold_min))
    }

    /// Tracking-mode activation at continuous minute `k`: 0 in CM1, 1 in
    /// CM2. Non-overlapping footprints make the max over requests both
    /// continuous and equal to the active request's own profile.
    pub fn sigma_at_time(&self, k: T) -> T {
        self.requests
            .iter()
            .map(|s| s.sigma_at(k, self.mode.cm_ramp_min))
            .fold(T::zero(), T::max)
    }

    pub fn sigma_at(&self, minute: usize) -> T {
        self.sigma_at_time(c(minute as f64))
    }

    /// Active weights at continuous minute `k` (component-wise blend).
    pub fn weights_at_time(&self, k: T) -> Weights<T> {
        self.mode
            .cm1_weights
            .blend(&self.mode.cm2_weights, self.sigma_at_time(k))
    }

    pub fn weights_at(&self, minute: usize) -> Weights<T> {
        self.weights_at_time(c(minute as f64))
    }

    /// Reference deviation from baseline at continuous minute `k` (kW).
    pub fn deviation_at_time(&self, k: T) -> T {
        self.requests
            .iter()
            .map(|s| s.deviation_at(k, self.mode.cm_ramp_min))
            .fold(T::zero(), |acc, d| acc + d)
    }

    pub fn deviation_at(&self, minute: usize) -> T {
        self.deviation_at_time(c(minute as f64))
    }

    /// Reference value at `minute`, given the baseline series. Minutes past
    /// the end of the series hold its last value.
    pub fn reference_at(&self, minute: usize, baseline_kw: &[T]) -> T {
        let base = match baseline_kw.get(minute) {
            Some(&b) => b,
            None => *baseline_kw.last().expect("baseline series must be non-empty"),
        };
        base + self.deviation_at(minute)
    }

    /// Reference window P*(k..k+len−1) for the controller.
    pub fn reference_window(&self, start_minute: usize, len: usize, baseline_kw: &[T]) -> Vec<T> {
        (start_minute..start_minute + len)
            .map(|m| self.reference_at(m, baseline_kw))
            .collect()
    }
}
