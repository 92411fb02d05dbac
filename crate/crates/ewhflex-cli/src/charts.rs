//! Static SVG charts of a run: the power tracking panel, the deviation
//! panel, and the broadcast set-point delta panel.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use crate::runner::{FlexArtifacts, RunArtifacts};

const SIZE: (u32, u32) = (1024, 520);

fn padded_range(series: &[&[f64]]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in *s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

fn line_panel(
    path: &Path,
    caption: &str,
    y_desc: &str,
    series: &[(&str, &[f64], RGBColor)],
) -> Result<()> {
    let len = series
        .iter()
        .map(|(_, s, _)| s.len())
        .max()
        .ok_or_else(|| anyhow!("no series to plot"))?;
    let values: Vec<&[f64]> = series.iter().map(|(_, s, _)| *s).collect();
    let (y_lo, y_hi) = padded_range(&values);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(42)
        .y_label_area_size(64)
        .build_cartesian_2d(0f64..len as f64, y_lo..y_hi)?;
    chart
        .configure_mesh()
        .x_desc("minute of day")
        .y_desc(y_desc)
        .draw()?;
    for (name, data, color) in series {
        let color = *color;
        chart
            .draw_series(LineSeries::new(
                data.iter().enumerate().map(|(k, &v)| (k as f64, v)),
                &color,
            ))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Aggregate power against reference, baseline, and the flexibility
/// envelopes.
pub fn power_panel(path: &Path, run: &RunArtifacts) -> Result<()> {
    line_panel(
        path,
        "Aggregate power and reference",
        "kW",
        &[
            ("upward envelope", &run.profiles.upward_kw, RGBColor(160, 200, 160)),
            ("downward envelope", &run.profiles.downward_kw, RGBColor(200, 160, 200)),
            ("baseline", &run.baseline_kw, BLACK),
            ("reference", &run.p_ref_kw, RED),
            ("aggregate power", &run.p_a_kw, BLUE),
        ],
    )
}

/// Realized and requested deviation from the baseline.
pub fn deviation_panel(path: &Path, run: &RunArtifacts) -> Result<()> {
    let realized: Vec<f64> = run
        .p_a_kw
        .iter()
        .zip(run.baseline_kw.iter())
        .map(|(p, b)| p - b)
        .collect();
    let requested: Vec<f64> = run
        .p_ref_kw
        .iter()
        .zip(run.baseline_kw.iter())
        .map(|(r, b)| r - b)
        .collect();
    line_panel(
        path,
        "Deviation from baseline",
        "kW",
        &[
            ("requested", &requested, RED),
            ("realized", &realized, BLUE),
        ],
    )
}

/// Broadcast set-point delta.
pub fn delta_panel(path: &Path, run: &RunArtifacts) -> Result<()> {
    line_panel(
        path,
        "Broadcast set-point delta",
        "°C",
        &[("delta theta", &run.delta_theta_c, BLUE)],
    )
}

/// The three run panels.
pub fn write_run_charts(dir: &Path, run: &RunArtifacts) -> Result<()> {
    power_panel(&dir.join("power.svg"), run)?;
    deviation_panel(&dir.join("deviation.svg"), run)?;
    delta_panel(&dir.join("delta_theta.svg"), run)?;
    Ok(())
}

/// Profiles-only panel for margin estimation runs.
pub fn write_flex_chart(dir: &Path, flex: &FlexArtifacts) -> Result<()> {
    line_panel(
        &dir.join("profiles.svg"),
        "Flexibility profiles",
        "kW",
        &[
            ("upward", &flex.profiles.upward_kw, RGBColor(60, 140, 60)),
            ("downward", &flex.profiles.downward_kw, RGBColor(140, 60, 140)),
            ("baseline", &flex.profiles.baseline_kw, BLACK),
        ],
    )
}
