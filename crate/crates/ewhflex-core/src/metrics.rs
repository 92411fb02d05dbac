//! Tracking-quality and energy metrics for a closed-loop run.
//!
//! The central quantity is the absolute percentage error of the aggregate
//! power against its reference, sampled per minute. Summary indices are its
//! mean (MAPE), its maximum, and the share of samples above 5%. Minutes with
//! a reference below a small floor are excluded from the statistics (a
//! percentage error against ~0 kW is meaningless) but the exclusions are
//! counted and reported.

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};

/// Errors from metric computation.
#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("series length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty series")]
    Empty,
    #[error("service window [{start}, {end}) outside the {len}-minute series")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid metrics config: {0}")]
    InvalidConfig(String),
}

/// Fraction of the nominal power below which a reference sample is excluded
/// from percentage-error statistics.
pub const DEFAULT_APE_FLOOR_FRACTION: f64 = 0.01;
/// Activation/deactivation transient stripped from each end of a service
/// window in the "excluding transients" statistics, minutes.
pub const DEFAULT_TRANSIENT_MIN: usize = 15;
/// Span after a service end over which the payback rebound is integrated.
pub const DEFAULT_REBOUND_WINDOW_MIN: usize = 60;

/// Absolute percentage error of `p_a_kw` against `p_star_kw`, or `None` when
/// the reference sits below `floor_kw` and the sample must be excluded.
pub fn ape<T: Scalar>(p_a_kw: T, p_star_kw: T, floor_kw: T) -> Option<T> {
    if p_star_kw < floor_kw {
        None
    } else {
        Some((p_a_kw - p_star_kw).abs() / p_star_kw * c::<T>(100.0))
    }
}

/// Summary indices over a series of APE samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApeStats<T> {
    pub mape_pct: T,
    pub ape_max_pct: T,
    /// Share of included samples strictly above 5%, in percent.
    pub f_5_pct: T,
    pub n_included: usize,
    pub n_excluded: usize,
}

/// Reduces APE samples (`None` = excluded) to summary indices; `None` when
/// no sample survives the exclusion floor.
pub fn ape_stats<'a, T: Scalar + 'a>(
    samples: impl IntoIterator<Item = &'a Option<T>>,
) -> Option<ApeStats<T>> {
    let mut sum = T::zero();
    let mut max = T::neg_infinity();
    let mut over_5 = 0usize;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for sample in samples {
        match sample {
            Some(v) => {
                sum += *v;
                max = max.max(*v);
                if *v > c::<T>(5.0) {
                    over_5 += 1;
                }
                included += 1;
            }
            None => excluded += 1,
        }
    }
    if included == 0 {
        return None;
    }
    let n = c::<T>(included as f64);
    Some(ApeStats {
        mape_pct: sum / n,
        ape_max_pct: max,
        f_5_pct: c::<T>(over_5 as f64) / n * c::<T>(100.0),
        n_included: included,
        n_excluded: excluded,
    })
}

/// One service window in plant minutes, `[start_min, end_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceWindow<T> {
    pub start_min: usize,
    pub end_min: usize,
    /// Requested deviation, kW (signed).
    pub delta_p_star_kw: T,
}

/// Delivered and rebound energy around one service window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary<T> {
    pub start_min: usize,
    pub end_min: usize,
    pub requested_kw: T,
    /// ∫(P_a − baseline) over the service window, kWh (signed).
    pub delivered_kwh: T,
    /// ∫(P_a − baseline) over the rebound span after the window, kWh.
    pub rebound_kwh: T,
    /// Minutes actually integrated after the end (clipped at the series).
    pub rebound_span_min: usize,
}

/// Tuning knobs for [`compute_metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig<T> {
    pub p_nom_kw: T,
    pub ape_floor_fraction: T,
    pub transient_min: usize,
    pub rebound_window_min: usize,
}

impl<T: Scalar> MetricsConfig<T> {
    pub fn defaults(p_nom_kw: T) -> Self {
        Self {
            p_nom_kw,
            ape_floor_fraction: c(DEFAULT_APE_FLOOR_FRACTION),
            transient_min: DEFAULT_TRANSIENT_MIN,
            rebound_window_min: DEFAULT_REBOUND_WINDOW_MIN,
        }
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if !(self.p_nom_kw > T::zero()) || !(self.ape_floor_fraction >= T::zero()) {
            return Err(MetricsError::InvalidConfig(
                "nominal power must be positive and the floor fraction ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Full metric bundle for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    /// Whole-series indices.
    pub mape_pct: T,
    pub ape_max_pct: T,
    pub f_5_pct: T,
    pub excluded_samples: usize,
    /// Per-minute APE (`None` where the reference fell below the floor).
    pub ape_pct: Vec<Option<T>>,
    /// Indices over service minutes only.
    pub service_incl_transients: Option<ApeStats<T>>,
    /// … with the first and last `transient_min` minutes of each window
    /// stripped.
    pub service_excl_transients: Option<ApeStats<T>>,
    pub energy: Vec<EnergySummary<T>>,
}

/// Computes the APE series against the reference plus all summary indices
/// and per-window energy integrals.
pub fn compute_metrics<T: Scalar>(
    p_a_kw: &[T],
    reference_kw: &[T],
    baseline_kw: &[T],
    windows: &[ServiceWindow<T>],
    config: &MetricsConfig<T>,
) -> Result<MetricsReport<T>, MetricsError> {
    config.validate()?;
    let len = p_a_kw.len();
    if len == 0 {
        return Err(MetricsError::Empty);
    }
    if reference_kw.len() != len || baseline_kw.len() != len {
        return Err(MetricsError::LengthMismatch(format!(
            "power {len}, reference {}, baseline {}",
            reference_kw.len(),
            baseline_kw.len()
        )));
    }
    for w in windows {
        if w.start_min >= w.end_min || w.end_min > len {
            return Err(MetricsError::WindowOutOfRange {
                start: w.start_min,
                end: w.end_min,
                len,
            });
        }
    }

    let floor = config.p_nom_kw * config.ape_floor_fraction;
    let ape_series: Vec<Option<T>> = p_a_kw
        .iter()
        .zip(reference_kw.iter())
        .map(|(&p, &r)| ape(p, r, floor))
        .collect();
    let overall = ape_stats(&ape_series).ok_or(MetricsError::Empty)?;

    let mut service_all: Vec<Option<T>> = Vec::new();
    let mut service_core: Vec<Option<T>> = Vec::new();
    for w in windows {
        service_all.extend_from_slice(&ape_series[w.start_min..w.end_min]);
        let lo = w.start_min + config.transient_min;
        let hi = w.end_min.saturating_sub(config.transient_min);
        if lo < hi {
            service_core.extend_from_slice(&ape_series[lo..hi]);
        }
    }

    let per_hour = c::<T>(1.0 / 60.0);
    let energy = windows
        .iter()
        .map(|w| {
            let mut delivered = T::zero();
            for k in w.start_min..w.end_min {
                delivered += (p_a_kw[k] - baseline_kw[k]) * per_hour;
            }
            let rebound_end = (w.end_min + config.rebound_window_min).min(len);
            let mut rebound = T::zero();
            for k in w.end_min..rebound_end {
                rebound += (p_a_kw[k] - baseline_kw[k]) * per_hour;
            }
            EnergySummary {
                start_min: w.start_min,
                end_min: w.end_min,
                requested_kw: w.delta_p_star_kw,
                delivered_kwh: delivered,
                rebound_kwh: rebound,
                rebound_span_min: rebound_end - w.end_min,
            }
        })
        .collect();

    Ok(MetricsReport {
        mape_pct: overall.mape_pct,
        ape_max_pct: overall.ape_max_pct,
        f_5_pct: overall.f_5_pct,
        excluded_samples: overall.n_excluded,
        ape_pct: ape_series,
        service_incl_transients: ape_stats(&service_all),
        service_excl_transients: ape_stats(&service_core),
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ape_arithmetic_and_exclusion() {
        assert_eq!(ape(500.0, 500.0, 9.0), Some(0.0));
        assert_eq!(ape(95.0, 100.0, 9.0), Some(5.0));
        assert_eq!(ape(100.0, 0.0, 9.0), None);
        assert_eq!(ape(100.0, 8.9, 9.0), None);
    }

    #[test]
    fn stats_over_a_small_series() {
        let series = [Some(1.0), Some(6.0), Some(2.0), Some(9.0)];
        let s = ape_stats(&series).unwrap();
        assert_relative_eq!(s.mape_pct, 4.5);
        assert_relative_eq!(s.ape_max_pct, 9.0);
        assert_relative_eq!(s.f_5_pct, 50.0);
        assert_eq!(s.n_included, 4);
        assert_eq!(s.n_excluded, 0);
    }

    #[test]
    fn constant_series_and_strict_five_percent_threshold() {
        let series = [Some(2.0); 10];
        let s = ape_stats(&series).unwrap();
        assert_relative_eq!(s.mape_pct, 2.0);
        assert_relative_eq!(s.ape_max_pct, 2.0);
        assert_eq!(s.f_5_pct, 0.0);
        // Exactly 5% does not trip f_5: the threshold is strict, so f_5 = 0
        // if and only if APE_max ≤ 5 on the included samples.
        let edge = [Some(5.0), Some(4.0)];
        let s = ape_stats(&edge).unwrap();
        assert_eq!(s.f_5_pct, 0.0);
        assert!(s.ape_max_pct <= 5.0);
    }

    #[test]
    fn exclusions_are_counted_not_averaged() {
        let series = [Some(4.0), None, Some(6.0), None, None];
        let s = ape_stats(&series).unwrap();
        assert_relative_eq!(s.mape_pct, 5.0);
        assert_eq!(s.n_included, 2);
        assert_eq!(s.n_excluded, 3);
        assert!(ape_stats(&[None::<f64>, None]).is_none());
    }

    fn flat(v: f64, n: usize) -> Vec<f64> {
        vec![v; n]
    }

    #[test]
    fn end_to_end_metrics_with_one_window() {
        let n = 240;
        let baseline = flat(500.0, n);
        let mut reference = baseline.clone();
        let mut p_a = baseline.clone();
        // Service [60, 120): asked −120 kW, delivered −110 kW (tracking
        // error ~2%); rebound +60 kW over the following hour.
        for k in 60..120 {
            reference[k] = 380.0;
            p_a[k] = 390.0;
        }
        for k in 120..180 {
            p_a[k] = 560.0;
        }
        let windows = [ServiceWindow {
            start_min: 60,
            end_min: 120,
            delta_p_star_kw: -120.0,
        }];
        let cfg = MetricsConfig::defaults(900.0);
        let report = compute_metrics(&p_a, &reference, &baseline, &windows, &cfg).unwrap();
        assert!(report.mape_pct <= report.ape_max_pct);
        assert_eq!(report.excluded_samples, 0);
        let e = &report.energy[0];
        assert_relative_eq!(e.delivered_kwh, -110.0, epsilon = 1e-9);
        assert_relative_eq!(e.rebound_kwh, 60.0, epsilon = 1e-9);
        assert_eq!(e.rebound_span_min, 60);
        let incl = report.service_incl_transients.unwrap();
        assert_eq!(incl.n_included, 60);
        let excl = report.service_excl_transients.unwrap();
        assert_eq!(excl.n_included, 30);
        // Inside the plateau the APE is 10/380.
        assert_relative_eq!(excl.mape_pct, 10.0 / 380.0 * 100.0, epsilon = 1e-9);
    }

    #[test]
    fn rebound_span_is_clipped_at_the_series_end() {
        let n = 140;
        let baseline = flat(100.0, n);
        let reference = baseline.clone();
        let p_a = flat(130.0, n);
        let windows = [ServiceWindow {
            start_min: 60,
            end_min: 120,
            delta_p_star_kw: -50.0,
        }];
        let cfg = MetricsConfig::defaults(900.0);
        let report = compute_metrics(&p_a, &reference, &baseline, &windows, &cfg).unwrap();
        let e = &report.energy[0];
        assert_eq!(e.rebound_span_min, 20);
        assert_relative_eq!(e.rebound_kwh, 30.0 * 20.0 / 60.0, epsilon = 1e-9);
    }

    #[test]
    fn narrow_windows_leave_no_core_samples() {
        let n = 100;
        let baseline = flat(100.0, n);
        let windows = [ServiceWindow {
            start_min: 10,
            end_min: 40,
            delta_p_star_kw: -10.0,
        }];
        let cfg = MetricsConfig::defaults(900.0);
        let report =
            compute_metrics(&baseline, &baseline, &baseline, &windows, &cfg).unwrap();
        // 30-minute window minus 15-minute transients at both ends: nothing
        // remains, and that is reported as absent, not as zero.
        assert!(report.service_excl_transients.is_none());
        assert!(report.service_incl_transients.is_some());
    }

    #[test]
    fn shape_errors_are_rejected() {
        let cfg = MetricsConfig::defaults(900.0);
        let a = flat(1.0, 5);
        let b = flat(1.0, 4);
        assert!(matches!(
            compute_metrics(&a, &b, &a, &[], &cfg),
            Err(MetricsError::LengthMismatch(_))
        ));
        assert!(matches!(
            compute_metrics::<f64>(&[], &[], &[], &[], &cfg),
            Err(MetricsError::Empty)
        ));
        let w = [ServiceWindow {
            start_min: 3,
            end_min: 9,
            delta_p_star_kw: 0.0,
        }];
        assert!(matches!(
            compute_metrics(&a, &a, &a, &w, &cfg),
            Err(MetricsError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn every_sample_excluded_is_an_error() {
        let cfg = MetricsConfig::defaults(900.0);
        let p = flat(5.0, 10);
        let r = flat(0.0, 10);
        assert!(matches!(
            compute_metrics(&p, &r, &p, &[], &cfg),
            Err(MetricsError::Empty)
        ));
    }
}
