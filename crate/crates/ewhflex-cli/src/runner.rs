//! Closed-loop scenario execution.
//!
//! Per minute `k` the loop is strictly causal: measure the aggregate power
//! P_a(k), feed the identifier with the transition observed from k−1, query
//! the schedule for the reference window and active weights, solve the
//! receding-horizon problem, and broadcast the first move to the plant,
//! which then produces P_a(k+1). The controller sees nothing but the power
//! measurement and its own outputs.
//!
//! Flexibility margins are estimated before the loop so that requests given
//! as a percentage of the available margin can be resolved to absolute kW.
//!
//! Two baselines appear in a run and they are deliberately different. The
//! Monte Carlo ensemble mean (from the flexibility module, independent draw
//! seeds) sizes the margins — a day-ahead planning quantity. The reference
//! the controller tracks, and the series metrics are judged against, is the
//! *counterfactual* baseline: the same fleet stepped over the same draw and
//! climate realizations with Δθ ≡ 0. This plays the role of a perfect
//! day-ahead forecast; judged against any independent forecast, the
//! minute-level switching noise of a finite fleet (several percent of the
//! mean) would swamp the tracking error being measured.

use anyhow::{Context, Result};

use ewhflex_core::exogenous::ExogenousInputs;
use ewhflex_core::flexibility::{estimate_profiles, margins, FlexProfiles};
use ewhflex_core::identifier::IdentifierState;
use ewhflex_core::metrics::{compute_metrics, MetricsReport, ServiceWindow};
use ewhflex_core::mpc::Controller;
use ewhflex_core::plant::{aggregate_step, build_population};
use ewhflex_core::rng::{stream_rng, STREAM_LOOP_DRAWS, STREAM_POPULATION};
use ewhflex_core::scheduler::{build_schedule, DrRequest, ModeSchedule, Schedule, ScheduleOptions};

use crate::scenario::{Direction, RequestSpec, ResolvedScenario};

/// A request with its window margins and the absolute deviation it resolved
/// to.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedRequest {
    pub spec: RequestSpec,
    pub margin_up_kw: f64,
    pub margin_down_kw: f64,
    pub delta_p_star_kw: f64,
}

/// Everything a run produces, ready for report emission.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub p_a_kw: Vec<f64>,
    pub p_ref_kw: Vec<f64>,
    pub baseline_kw: Vec<f64>,
    pub delta_theta_c: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    pub profiles: FlexProfiles<f64>,
    pub requests: Vec<ResolvedRequest>,
    pub breakpoints: Vec<usize>,
    pub metrics: MetricsReport<f64>,
    pub solve_failures: u64,
}

/// Profiles plus resolved margins, for margin-only invocations.
#[derive(Debug, Clone)]
pub struct FlexArtifacts {
    pub profiles: FlexProfiles<f64>,
    pub requests: Vec<ResolvedRequest>,
}

fn resolve_requests(
    scenario: &ResolvedScenario,
    profiles: &FlexProfiles<f64>,
) -> Result<Vec<ResolvedRequest>> {
    scenario
        .requests
        .iter()
        .map(|spec| {
            let (up, down) = margins(profiles, spec.start_tau_min, spec.duration_min)
                .with_context(|| {
                    format!(
                        "resolving margins for the request at minute {}",
                        spec.start_tau_min
                    )
                })?;
            let margin = match spec.direction {
                Direction::Down => down,
                Direction::Up => up,
            };
            let delta_p_star_kw = margin * spec.magnitude_pct / 100.0;
            if delta_p_star_kw == 0.0 {
                log::warn!(
                    "request at minute {} resolves to 0 kW (margin exhausted)",
                    spec.start_tau_min
                );
            }
            Ok(ResolvedRequest {
                spec: *spec,
                margin_up_kw: up,
                margin_down_kw: down,
                delta_p_star_kw,
            })
        })
        .collect()
}

fn schedule_for(
    scenario: &ResolvedScenario,
    requests: &[ResolvedRequest],
) -> Result<Schedule<f64>> {
    let dr: Vec<DrRequest<f64>> = requests
        .iter()
        .map(|r| DrRequest {
            start_tau_min: r.spec.start_tau_min,
            duration_min: r.spec.duration_min,
            delta_p_star_kw: r.delta_p_star_kw,
            rebound_mitigation: r.spec.rebound_mitigation,
        })
        .collect();
    let mode = ModeSchedule {
        cm1_weights: scenario.weights_cm1,
        cm2_weights: scenario.weights_cm2,
        cm_ramp_min: scenario.cm_ramp_min,
        rebound_ramp_min: scenario.rebound_ramp_min,
    };
    let options = ScheduleOptions {
        truncate_holds: scenario.truncate_holds,
    };
    Ok(build_schedule(&dr, mode, scenario.horizon_min, options)?)
}

/// Estimates profiles and resolves request margins without running the loop.
pub fn run_flex(scenario: &ResolvedScenario) -> Result<FlexArtifacts> {
    let profiles = estimate_profiles(
        &scenario.population,
        &scenario.climate,
        &scenario.draws,
        scenario.horizon_min,
        &scenario.flexibility,
        scenario.seed,
    )?;
    let requests = resolve_requests(scenario, &profiles)?;
    Ok(FlexArtifacts { profiles, requests })
}

/// Executes the full closed-loop day.
pub fn run_scenario(scenario: &ResolvedScenario) -> Result<RunArtifacts> {
    let FlexArtifacts { profiles, requests } = run_flex(scenario)?;
    let schedule = schedule_for(scenario, &requests)?;
    let horizon = scenario.horizon_min;

    let mut population = build_population(
        &scenario.population,
        &mut stream_rng(scenario.seed, STREAM_POPULATION),
    )?;
    let inputs = ExogenousInputs::generate(
        population.n_units(),
        horizon,
        &scenario.climate,
        &scenario.draws,
        &mut stream_rng(scenario.seed, STREAM_LOOP_DRAWS),
    )?;

    // Counterfactual baseline: the identical fleet over the identical
    // exogenous realizations, never steered. Sampled with the same
    // conventions as the loop below so that a zero-request run matches it
    // sample for sample.
    let baseline = {
        let mut ghost = population.clone();
        let mut series = Vec::with_capacity(horizon);
        let mut b_now = ghost.instantaneous_power_kw();
        for k in 0..horizon {
            series.push(b_now);
            b_now = aggregate_step(&mut ghost, 0.0, &inputs, k)?;
        }
        series
    };
    let baseline = &baseline;
    let mut identifier = IdentifierState::new(&scenario.identifier)?;
    let mut controller = Controller::new(scenario.mpc.clone())?;
    let window_len = scenario.mpc.horizon_t_min + 1;

    let mut p_a_kw = Vec::with_capacity(horizon);
    let mut p_ref_kw = Vec::with_capacity(horizon);
    let mut delta_theta_c = Vec::with_capacity(horizon);
    let mut a_hat = Vec::with_capacity(horizon);
    let mut b_hat = Vec::with_capacity(horizon);
    let mut w_hat = Vec::with_capacity(horizon);
    let mut sigma = Vec::with_capacity(horizon);

    // The first measurement is the instantaneous ON-power of the sampled
    // initial state; afterwards the plant reports per-minute means.
    let mut p_now = population.instantaneous_power_kw();
    let mut p_prev = 0.0f64;
    let mut delta_prev = 0.0f64;

    for k in 0..horizon {
        if k >= 1 {
            identifier.update(p_now, (p_prev, delta_prev))?;
        }
        let estimate = identifier.estimate();
        let reference = schedule.reference_window(k, window_len, baseline);
        let weights = schedule.weights_at(k);
        let solution = controller.step(&estimate, p_now, &reference, &weights)?;
        let delta_k = solution.applied;

        p_a_kw.push(p_now);
        p_ref_kw.push(reference[0]);
        delta_theta_c.push(delta_k);
        a_hat.push(estimate.a);
        b_hat.push(estimate.b_kw_per_c);
        w_hat.push(estimate.w_kw);
        sigma.push(schedule.sigma_at(k));

        let p_next = aggregate_step(&mut population, delta_k, &inputs, k)?;
        p_prev = p_now;
        delta_prev = delta_k;
        p_now = p_next;
    }

    let windows: Vec<ServiceWindow<f64>> = requests
        .iter()
        .map(|r| ServiceWindow {
            start_min: r.spec.start_tau_min,
            end_min: r.spec.start_tau_min + r.spec.duration_min,
            delta_p_star_kw: r.delta_p_star_kw,
        })
        .collect();
    let metrics = compute_metrics(&p_a_kw, &p_ref_kw, baseline, &windows, &scenario.metrics)?;

    Ok(RunArtifacts {
        p_a_kw,
        p_ref_kw,
        baseline_kw: baseline.clone(),
        delta_theta_c,
        a_hat,
        b_hat,
        w_hat,
        sigma,
        breakpoints: schedule.breakpoints().to_vec(),
        profiles,
        requests,
        metrics,
        solve_failures: controller.solve_failures(),
    })
}
