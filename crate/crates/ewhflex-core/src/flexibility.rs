//! Monte Carlo estimation of flexibility margins.
//!
//! Three uncontrolled day profiles are forecast by ensemble simulation of
//! the same device fleet under different set-point policies: the baseline
//! (user set-points), the upward profile (set-points at the thermostat
//! maximum) and the downward profile (set-points at the user-acceptable
//! minimum). The margins available for a service window are the smallest
//! distances between the baseline and the shifted profiles inside that
//! window — what the fleet can sustain for the whole window, not just at its
//! start.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exogenous::{ClimateConfig, DrawConfig, ExogenousError, ExogenousInputs};
use crate::plant::{
    aggregate_step, build_population, thermostat_update, AggregatePopulation, PlantError,
    PopulationSpec,
};
use crate::rng::{
    stream_rng, STREAM_BASELINE_BASE, STREAM_DOWN_BASE, STREAM_POPULATION, STREAM_UP_BASE,
};
use crate::scalar::{c, Scalar};

/// Errors from profile estimation and margin queries.
#[derive(Debug, thiserror::Error)]
pub enum FlexError {
    #[error("ensemble size must be ≥ 1")]
    EmptyEnsemble,
    #[error("window [{tau}, {tau}+{delta_t}) outside the {len}-minute profile")]
    WindowOutOfRange {
        tau: usize,
        delta_t: usize,
        len: usize,
    },
    #[error("empty margin window")]
    EmptyWindow,
    #[error("invalid flexibility config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Exogenous(#[from] ExogenousError),
}

/// Set-point policy imposed on every unit for a forecast run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetpointPolicy {
    /// User set-points unchanged.
    Baseline,
    /// Thermostat ceiling: `max_temperature − halfband`.
    Max,
    /// User-acceptable minimum: `setpoint − offset`, floored.
    UserMin,
}

/// Ensemble and policy tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexConfig<T> {
    /// Number of Monte Carlo members per profile.
    pub ensemble_size: usize,
    /// How far below the user set-point the downward policy may reach (°C).
    pub user_min_offset_c: T,
    /// Absolute comfort floor for the downward policy (°C).
    pub user_min_floor_c: T,
}

impl<T: Scalar> Default for FlexConfig<T> {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            user_min_offset_c: c(5.0),
            user_min_floor_c: c(45.0),
        }
    }
}

impl<T: Scalar> FlexConfig<T> {
    fn validate(&self) -> Result<(), FlexError> {
        if self.ensemble_size == 0 {
            return Err(FlexError::EmptyEnsemble);
        }
        if !(self.user_min_offset_c >= T::zero()) || !self.user_min_floor_c.is_finite() {
            return Err(FlexError::InvalidConfig(
                "user-min offset must be ≥ 0 and the floor finite".into(),
            ));
        }
        Ok(())
    }
}

/// The three forecast profiles (per-minute ensemble means, kW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexProfiles<T> {
    pub baseline_kw: Vec<T>,
    pub upward_kw: Vec<T>,
    pub downward_kw: Vec<T>,
    pub ensemble_size: usize,
}

/// Set-point a unit gets under `policy`.
fn policy_setpoint<T: Scalar>(
    policy: SetpointPolicy,
    user_setpoint_c: T,
    max_temperature_c: T,
    halfband_c: T,
    config: &FlexConfig<T>,
) -> T {
    match policy {
        SetpointPolicy::Baseline => user_setpoint_c,
        SetpointPolicy::Max => max_temperature_c - halfband_c,
        SetpointPolicy::UserMin => {
            (user_setpoint_c - config.user_min_offset_c).max(config.user_min_floor_c)
        }
    }
}

/// Re-targets every unit to the policy set-point. Initial temperatures are
/// shifted by the same offset as the set-point, which preserves each unit's
/// relative position inside its dead band: the forecast then starts in the
/// policy's quasi-stationary regime instead of spending hours on a fleet-wide
/// reheat (or cool-down) transient that no sustained-availability estimate
/// should contain.
fn apply_policy<T: Scalar>(
    population: &mut AggregatePopulation<T>,
    policy: SetpointPolicy,
    config: &FlexConfig<T>,
) {
    if policy == SetpointPolicy::Baseline {
        return;
    }
    for (params, state) in population.units.iter_mut() {
        let target = policy_setpoint(
            policy,
            params.setpoint_c,
            params.max_temperature_c,
            params.halfband_c,
            config,
        );
        let shift = target - params.setpoint_c;
        params.setpoint_c = target;
        state.temperature_c += shift;
        state.effective_setpoint_c = target;
        state.heater_on = thermostat_update(
            state.heater_on,
            state.temperature_c,
            target,
            params.halfband_c,
        );
    }
}

fn member_stream_base(policy: SetpointPolicy) -> u64 {
    match policy {
        SetpointPolicy::Baseline => STREAM_BASELINE_BASE,
        SetpointPolicy::Max => STREAM_UP_BASE,
        SetpointPolicy::UserMin => STREAM_DOWN_BASE,
    }
}

fn simulate_member<T: Scalar>(
    spec: &PopulationSpec<T>,
    climate: &ClimateConfig<T>,
    draws: &DrawConfig<T>,
    horizon_min: usize,
    policy: SetpointPolicy,
    config: &FlexConfig<T>,
    master_seed: u64,
    member: usize,
) -> Result<Vec<T>, FlexError> {
    // Device parameters are shared by every member and policy; only the
    // draw realization is resampled, one stream per (policy, member).
    let mut population = build_population(spec, &mut stream_rng(master_seed, STREAM_POPULATION))?;
    apply_policy(&mut population, policy, config);
    let inputs = ExogenousInputs::generate(
        population.n_units(),
        horizon_min,
        climate,
        draws,
        &mut stream_rng(master_seed, member_stream_base(policy) + member as u64),
    )?;
    let mut series = Vec::with_capacity(horizon_min);
    for minute in 0..horizon_min {
        series.push(aggregate_step(&mut population, T::zero(), &inputs, minute)?);
    }
    Ok(series)
}

/// Per-minute ensemble mean of the aggregate power under one policy.
///
/// Members run in parallel; the reduction adds them in member order, so the
/// result is bit-identical for a fixed `(seed, ensemble_size)` regardless of
/// thread scheduling.
pub fn estimate_profile<T: Scalar>(
    spec: &PopulationSpec<T>,
    climate: &ClimateConfig<T>,
    draws: &DrawConfig<T>,
    horizon_min: usize,
    policy: SetpointPolicy,
    config: &FlexConfig<T>,
    master_seed: u64,
) -> Result<Vec<T>, FlexError> {
    config.validate()?;
    let members: Vec<Vec<T>> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|m| simulate_member(spec, climate, draws, horizon_min, policy, config, master_seed, m))
        .collect::<Result<_, _>>()?;
    let mut mean = vec![T::zero(); horizon_min];
    for series in &members {
        for (acc, &v) in mean.iter_mut().zip(series.iter()) {
            *acc += v;
        }
    }
    let m = c::<T>(config.ensemble_size as f64);
    for v in mean.iter_mut() {
        *v /= m;
    }
    Ok(mean)
}

/// Runs all three policies and bundles the profiles.
pub fn estimate_profiles<T: Scalar>(
    spec: &PopulationSpec<T>,
    climate: &ClimateConfig<T>,
    draws: &DrawConfig<T>,
    horizon_min: usize,
    config: &FlexConfig<T>,
    master_seed: u64,
) -> Result<FlexProfiles<T>, FlexError> {
    Ok(FlexProfiles {
        baseline_kw: estimate_profile(
            spec,
            climate,
            draws,
            horizon_min,
            SetpointPolicy::Baseline,
            config,
            master_seed,
        )?,
        upward_kw: estimate_profile(
            spec,
            climate,
            draws,
            horizon_min,
            SetpointPolicy::Max,
            config,
            master_seed,
        )?,
        downward_kw: estimate_profile(
            spec,
            climate,
            draws,
            horizon_min,
            SetpointPolicy::UserMin,
            config,
            master_seed,
        )?,
        ensemble_size: config.ensemble_size,
    })
}

/// Flexibility margins over the window `[tau, tau + delta_t)`:
/// `ΔP⁺ = max(0, min(upward − baseline))` and
/// `ΔP⁻ = −max(0, min(baseline − downward))`, so `ΔP⁺ ≥ 0 ≥ ΔP⁻` always.
pub fn margins<T: Scalar>(
    profiles: &FlexProfiles<T>,
    tau_min: usize,
    delta_t_min: usize,
) -> Result<(T, T), FlexError> {
    if delta_t_min == 0 {
        return Err(FlexError::EmptyWindow);
    }
    let len = profiles.baseline_kw.len();
    if tau_min + delta_t_min > len
        || profiles.upward_kw.len() != len
        || profiles.downward_kw.len() != len
    {
        return Err(FlexError::WindowOutOfRange {
            tau: tau_min,
            delta_t: delta_t_min,
            len,
        });
    }
    let mut up_min = T::infinity();
    let mut down_min = T::infinity();
    for k in tau_min..tau_min + delta_t_min {
        up_min = up_min.min(profiles.upward_kw[k] - profiles.baseline_kw[k]);
        down_min = down_min.min(profiles.baseline_kw[k] - profiles.downward_kw[k]);
    }
    Ok((up_min.max(T::zero()), -down_min.max(T::zero())))
}
