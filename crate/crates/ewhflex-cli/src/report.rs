//! CSV and scenario-echo emission.
//!
//! Every float is written with a fixed `{:.6}` format and rows are emitted
//! in a fixed order, so identical runs produce byte-identical files. The
//! main series schema is part of the tool's public interface:
//! `minute,p_a_kw,p_ref_kw,baseline_kw,delta_theta_c,a_hat,b_hat,w_hat,ape_pct`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use ewhflex_core::flexibility::FlexProfiles;
use ewhflex_core::metrics::MetricsReport;

use crate::runner::{FlexArtifacts, ResolvedRequest, RunArtifacts};
use crate::scenario::{Direction, ResolvedScenario};

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// `minute,p_a_kw,p_ref_kw,baseline_kw,delta_theta_c,a_hat,b_hat,w_hat,ape_pct`;
/// the APE cell is empty on excluded samples.
pub fn write_main_csv(path: &Path, run: &RunArtifacts) -> Result<()> {
    let mut out = String::with_capacity(run.p_a_kw.len() * 96);
    out.push_str("minute,p_a_kw,p_ref_kw,baseline_kw,delta_theta_c,a_hat,b_hat,w_hat,ape_pct\n");
    for k in 0..run.p_a_kw.len() {
        let ape = match run.metrics.ape_pct[k] {
            Some(v) => fmt(v),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            k,
            fmt(run.p_a_kw[k]),
            fmt(run.p_ref_kw[k]),
            fmt(run.baseline_kw[k]),
            fmt(run.delta_theta_c[k]),
            fmt(run.a_hat[k]),
            fmt(run.b_hat[k]),
            fmt(run.w_hat[k]),
            ape,
        ));
    }
    write_file(path, &out)
}

/// `minute,baseline_kw,up_kw,down_kw`.
pub fn write_flex_csv(path: &Path, profiles: &FlexProfiles<f64>) -> Result<()> {
    let mut out = String::with_capacity(profiles.baseline_kw.len() * 48);
    out.push_str("minute,baseline_kw,up_kw,down_kw\n");
    for k in 0..profiles.baseline_kw.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            k,
            fmt(profiles.baseline_kw[k]),
            fmt(profiles.upward_kw[k]),
            fmt(profiles.downward_kw[k]),
        ));
    }
    write_file(path, &out)
}

/// One row per request: window, margins found, and the deviation resolved.
pub fn write_margins_csv(path: &Path, requests: &[ResolvedRequest]) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "start_tau_min,duration_min,direction,magnitude_pct,margin_up_kw,margin_down_kw,\
         delta_p_star_kw,rebound_mitigation\n",
    );
    for r in requests {
        let direction = match r.spec.direction {
            Direction::Down => "down",
            Direction::Up => "up",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.spec.start_tau_min,
            r.spec.duration_min,
            direction,
            fmt(r.spec.magnitude_pct),
            fmt(r.margin_up_kw),
            fmt(r.margin_down_kw),
            fmt(r.delta_p_star_kw),
            r.spec.rebound_mitigation,
        ));
    }
    write_file(path, &out)
}

/// Scalar indices as `metric,value` rows in a fixed order.
pub fn write_metrics_csv(
    path: &Path,
    metrics: &MetricsReport<f64>,
    solve_failures: u64,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("metric,value\n");
    out.push_str(&format!("mape_pct,{}\n", fmt(metrics.mape_pct)));
    out.push_str(&format!("ape_max_pct,{}\n", fmt(metrics.ape_max_pct)));
    out.push_str(&format!("f_5_pct,{}\n", fmt(metrics.f_5_pct)));
    out.push_str(&format!("excluded_samples,{}\n", metrics.excluded_samples));
    out.push_str(&format!("solve_failures,{solve_failures}\n"));
    if let Some(s) = &metrics.service_incl_transients {
        out.push_str(&format!("service_mape_pct,{}\n", fmt(s.mape_pct)));
        out.push_str(&format!("service_ape_max_pct,{}\n", fmt(s.ape_max_pct)));
        out.push_str(&format!("service_f_5_pct,{}\n", fmt(s.f_5_pct)));
    }
    if let Some(s) = &metrics.service_excl_transients {
        out.push_str(&format!("service_core_mape_pct,{}\n", fmt(s.mape_pct)));
        out.push_str(&format!("service_core_ape_max_pct,{}\n", fmt(s.ape_max_pct)));
        out.push_str(&format!("service_core_f_5_pct,{}\n", fmt(s.f_5_pct)));
    }
    write_file(path, &out)
}

/// Delivered and rebound energy per service window.
pub fn write_energy_csv(path: &Path, metrics: &MetricsReport<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "start_min,end_min,requested_kw,delivered_kwh,rebound_kwh,rebound_span_min\n",
    );
    for e in &metrics.energy {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.start_min,
            e.end_min,
            fmt(e.requested_kw),
            fmt(e.delivered_kwh),
            fmt(e.rebound_kwh),
            e.rebound_span_min,
        ));
    }
    write_file(path, &out)
}

/// Weight-schedule breakpoints with the activation level at each.
pub fn write_schedule_csv(path: &Path, run: &RunArtifacts) -> Result<()> {
    let mut out = String::new();
    out.push_str("breakpoint_min,sigma\n");
    for &bp in &run.breakpoints {
        let sigma = run.sigma.get(bp).copied().unwrap_or(0.0);
        out.push_str(&format!("{bp},{}\n", fmt(sigma)));
    }
    write_file(path, &out)
}

/// Echo of the fully materialized scenario.
pub fn write_resolved_scenario(path: &Path, scenario: &ResolvedScenario) -> Result<()> {
    let text = toml::to_string_pretty(scenario).context("serializing resolved scenario")?;
    write_file(path, &text)
}

/// Emits the full report bundle for a closed-loop run.
pub fn write_run_reports(dir: &Path, scenario: &ResolvedScenario, run: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_resolved_scenario(&dir.join("resolved_scenario.toml"), scenario)?;
    write_main_csv(&dir.join("main.csv"), run)?;
    write_flex_csv(&dir.join("flex.csv"), &run.profiles)?;
    write_margins_csv(&dir.join("margins.csv"), &run.requests)?;
    write_metrics_csv(&dir.join("metrics.csv"), &run.metrics, run.solve_failures)?;
    write_energy_csv(&dir.join("energy.csv"), &run.metrics)?;
    write_schedule_csv(&dir.join("schedule.csv"), run)?;
    Ok(())
}

/// Emits the margin-only bundle.
pub fn write_flex_reports(
    dir: &Path,
    scenario: &ResolvedScenario,
    flex: &FlexArtifacts,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_resolved_scenario(&dir.join("resolved_scenario.toml"), scenario)?;
    write_flex_csv(&dir.join("flex.csv"), &flex.profiles)?;
    write_margins_csv(&dir.join("margins.csv"), &flex.requests)?;
    Ok(())
}

/// One-paragraph human summary for stdout.
pub fn summary_line(scenario: &ResolvedScenario, run: &RunArtifacts) -> String {
    let mut s = format!(
        "{}: MAPE {:.2}%, APE_max {:.2}%, f_5 {:.2}% ({} excluded, {} solve fallbacks)",
        scenario.name,
        run.metrics.mape_pct,
        run.metrics.ape_max_pct,
        run.metrics.f_5_pct,
        run.metrics.excluded_samples,
        run.solve_failures,
    );
    if let Some(core) = &run.metrics.service_excl_transients {
        s.push_str(&format!(
            "; service core MAPE {:.2}%, APE_max {:.2}%",
            core.mape_pct, core.ape_max_pct
        ));
    }
    for e in &run.metrics.energy {
        s.push_str(&format!(
            "; window {}-{}: delivered {:.1} kWh, rebound {:.1} kWh",
            e.start_min, e.end_min, e.delivered_kwh, e.rebound_kwh
        ));
    }
    s
}
