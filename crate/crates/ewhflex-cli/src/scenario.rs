//! Scenario files: parsing, default materialization, validation.
//!
//! A scenario is one TOML file describing a full closed-loop day: the
//! appliance population, climate and draw statistics, identifier/controller
//! tuning, and the service requests. Every physical key carries its unit in
//! the name. Requests size themselves as a percentage of the flexibility
//! margin available in their window, so the file stays valid across
//! population changes.
//!
//! Parsing keeps every field optional where a sound default exists;
//! [`resolve`] materializes all defaults into a fully concrete
//! [`ResolvedScenario`] which is echoed next to the run outputs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ewhflex_core::exogenous::{ClimateConfig, DrawConfig};
use ewhflex_core::flexibility::FlexConfig;
use ewhflex_core::identifier::IdentifierConfig;
use ewhflex_core::metrics::MetricsConfig;
use ewhflex_core::mpc::{MpcConfig, Weights};
use ewhflex_core::plant::{class_counts, ClassSpec, PopulationSpec};

/// Which margin a request draws on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Down,
    Up,
}

/// One service request, sized relative to the available margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub start_tau_min: usize,
    pub duration_min: usize,
    /// Percentage of the window's flexibility margin to request.
    pub magnitude_pct: f64,
    pub direction: Direction,
    #[serde(default)]
    pub rebound_mitigation: bool,
}

// ---------------------------------------------------------------------------
// Raw file schema: optional fields, strict about unknown keys.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon_min: usize,
    pub population: PopulationSection,
    #[serde(default)]
    pub climate: ClimateSection,
    #[serde(default)]
    pub draws: DrawsSection,
    #[serde(default)]
    pub identifier: IdentifierSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub flexibility: FlexSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub requests: Vec<RequestSpec>,
}

fn default_seed() -> u64 {
    1
}

fn default_horizon() -> usize {
    ewhflex_core::MINUTES_PER_DAY
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub n_units: usize,
    pub classes: Vec<ClassSection>,
    pub setpoint_min_c: Option<f64>,
    pub setpoint_max_c: Option<f64>,
    pub halfband_c: Option<f64>,
    pub max_temperature_c: Option<f64>,
    pub expected_daily_draw_l: Option<f64>,
    pub cold_water_ref_c: Option<f64>,
    pub ambient_ref_c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub share: f64,
    pub capacity_liters: f64,
    pub nominal_power_kw: f64,
    pub dispersion_kwh_per_day: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateSection {
    pub ambient_mean_c: Option<f64>,
    pub ambient_amplitude_c: Option<f64>,
    pub ambient_min_minute: Option<usize>,
    pub cold_water_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawsSection {
    pub daily_volume_l: Option<f64>,
    pub event_volume_min_l: Option<f64>,
    pub event_volume_max_l: Option<f64>,
    pub hourly_weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifierSection {
    pub a0: Option<f64>,
    pub b0_kw_per_c: Option<f64>,
    pub sigma0_sq: Option<f64>,
    pub r1: Option<[f64; 3]>,
    pub r2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub horizon_t_min: Option<usize>,
    pub horizon_l_min: Option<usize>,
    pub delta_min_c: Option<f64>,
    pub delta_max_c: Option<f64>,
    pub solver_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(default)]
    pub cm1: WeightOverride,
    #[serde(default)]
    pub cm2: WeightOverride,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverride {
    pub w_p: Option<f64>,
    pub w_theta: Option<f64>,
    pub w_dtheta: Option<f64>,
}

impl WeightOverride {
    fn apply(&self, base: Weights<f64>) -> Weights<f64> {
        Weights {
            w_p: self.w_p.unwrap_or(base.w_p),
            w_theta: self.w_theta.unwrap_or(base.w_theta),
            w_dtheta: self.w_dtheta.unwrap_or(base.w_dtheta),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub cm_ramp_min: Option<usize>,
    pub rebound_ramp_min: Option<usize>,
    pub truncate_holds: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexSection {
    pub ensemble_size: Option<usize>,
    pub user_min_offset_c: Option<f64>,
    pub user_min_floor_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub ape_floor_fraction: Option<f64>,
    pub transient_min: Option<usize>,
    pub rebound_window_min: Option<usize>,
}

// ---------------------------------------------------------------------------
// Fully materialized scenario.
// ---------------------------------------------------------------------------

/// Everything a run needs, with every default filled in. Serialized next to
/// the outputs so a report is reproducible from its own echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub horizon_min: usize,
    pub population: PopulationSpec<f64>,
    pub climate: ClimateConfig<f64>,
    pub draws: DrawConfig<f64>,
    pub identifier: IdentifierConfig<f64>,
    pub mpc: MpcConfig<f64>,
    pub weights_cm1: Weights<f64>,
    pub weights_cm2: Weights<f64>,
    pub cm_ramp_min: usize,
    pub rebound_ramp_min: usize,
    pub truncate_holds: bool,
    pub flexibility: FlexConfig<f64>,
    pub metrics: MetricsConfig<f64>,
    pub requests: Vec<RequestSpec>,
    pub derived: DerivedValues,
}

/// Values computed from the sections above, echoed for transparency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValues {
    /// Total nominal power of the fleet, kW (exact, from class counts).
    pub p_nom_kw: f64,
    /// Units per class after largest-remainder rounding.
    pub class_counts: Vec<usize>,
}

/// Reads and parses a scenario file.
pub fn load(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let file: ScenarioFile =
        toml::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
    Ok(file)
}

/// Materializes all defaults and validates cross-section consistency.
pub fn resolve(file: ScenarioFile, seed_override: Option<u64>) -> Result<ResolvedScenario> {
    if file.horizon_min == 0 {
        bail!("horizon_min must be positive");
    }

    let climate = ClimateConfig {
        ambient_mean_c: file.climate.ambient_mean_c.unwrap_or(20.0),
        ambient_amplitude_c: file.climate.ambient_amplitude_c.unwrap_or(3.0),
        ambient_min_minute: file.climate.ambient_min_minute.unwrap_or(300),
        cold_water_c: file.climate.cold_water_c.unwrap_or(15.0),
    };
    let draw_defaults = DrawConfig::<f64>::default();
    let draws = DrawConfig {
        daily_volume_l: file.draws.daily_volume_l.unwrap_or(draw_defaults.daily_volume_l),
        event_volume_min_l: file
            .draws
            .event_volume_min_l
            .unwrap_or(draw_defaults.event_volume_min_l),
        event_volume_max_l: file
            .draws
            .event_volume_max_l
            .unwrap_or(draw_defaults.event_volume_max_l),
        hourly_weights: file
            .draws
            .hourly_weights
            .unwrap_or_else(|| draw_defaults.hourly_weights.clone()),
    };
    draws.minute_probabilities()?;

    let p = &file.population;
    if p.classes.is_empty() {
        bail!("population needs at least one class");
    }
    let classes: Vec<ClassSpec<f64>> = p
        .classes
        .iter()
        .map(|c| ClassSpec {
            share: c.share,
            capacity_liters: c.capacity_liters,
            nominal_power_kw: c.nominal_power_kw,
            dispersion_kwh_per_day: c.dispersion_kwh_per_day,
        })
        .collect();
    let min_capacity = classes
        .iter()
        .map(|c| c.capacity_liters)
        .fold(f64::INFINITY, f64::min);
    if draws.event_volume_max_l > min_capacity {
        bail!(
            "event_volume_max_l = {} exceeds the smallest tank capacity {} l",
            draws.event_volume_max_l,
            min_capacity
        );
    }
    let population = PopulationSpec {
        n_units: p.n_units,
        classes,
        setpoint_min_c: p.setpoint_min_c.unwrap_or(55.0),
        setpoint_max_c: p.setpoint_max_c.unwrap_or(65.0),
        halfband_c: p.halfband_c.unwrap_or(2.0),
        max_temperature_c: p.max_temperature_c.unwrap_or(80.0),
        expected_daily_draw_l: p.expected_daily_draw_l.unwrap_or(draws.daily_volume_l),
        cold_water_ref_c: p.cold_water_ref_c.unwrap_or(climate.cold_water_c),
        ambient_ref_c: p.ambient_ref_c.unwrap_or(climate.ambient_mean_c),
    };
    let counts = class_counts(&population.classes, population.n_units)?;
    let p_nom_kw: f64 = population
        .classes
        .iter()
        .zip(counts.iter())
        .map(|(c, &n)| c.nominal_power_kw * n as f64)
        .sum();

    let ident_defaults = IdentifierConfig::defaults(p_nom_kw);
    let identifier = IdentifierConfig {
        a0: file.identifier.a0.unwrap_or(ident_defaults.a0),
        b0_kw_per_c: file
            .identifier
            .b0_kw_per_c
            .unwrap_or(ident_defaults.b0_kw_per_c),
        sigma0_sq: file.identifier.sigma0_sq.unwrap_or(ident_defaults.sigma0_sq),
        r1: file.identifier.r1.unwrap_or(ident_defaults.r1),
        r2: file.identifier.r2.unwrap_or(ident_defaults.r2),
        p_nom_kw,
    };

    let mpc_defaults = MpcConfig::defaults(p_nom_kw);
    let mpc = MpcConfig {
        horizon_t_min: file.mpc.horizon_t_min.unwrap_or(mpc_defaults.horizon_t_min),
        horizon_l_min: file.mpc.horizon_l_min.unwrap_or(mpc_defaults.horizon_l_min),
        delta_min_c: file.mpc.delta_min_c.unwrap_or(mpc_defaults.delta_min_c),
        delta_max_c: file.mpc.delta_max_c.unwrap_or(mpc_defaults.delta_max_c),
        solver_tolerance: file
            .mpc
            .solver_tolerance
            .unwrap_or(mpc_defaults.solver_tolerance),
        max_iterations: file.mpc.max_iterations.unwrap_or(mpc_defaults.max_iterations),
        p_nom_kw,
    };
    mpc.validate()?;

    let weights_cm1 = file.weights.cm1.apply(Weights::cm1_defaults(p_nom_kw));
    let weights_cm2 = file.weights.cm2.apply(Weights::cm2_defaults(p_nom_kw));
    weights_cm1.validate()?;
    weights_cm2.validate()?;

    let flex_defaults = FlexConfig::<f64>::default();
    let flexibility = FlexConfig {
        ensemble_size: file
            .flexibility
            .ensemble_size
            .unwrap_or(flex_defaults.ensemble_size),
        user_min_offset_c: file
            .flexibility
            .user_min_offset_c
            .unwrap_or(flex_defaults.user_min_offset_c),
        user_min_floor_c: file
            .flexibility
            .user_min_floor_c
            .unwrap_or(flex_defaults.user_min_floor_c),
    };

    let metric_defaults = MetricsConfig::defaults(p_nom_kw);
    let metrics = MetricsConfig {
        p_nom_kw,
        ape_floor_fraction: file
            .metrics
            .ape_floor_fraction
            .unwrap_or(metric_defaults.ape_floor_fraction),
        transient_min: file.metrics.transient_min.unwrap_or(metric_defaults.transient_min),
        rebound_window_min: file
            .metrics
            .rebound_window_min
            .unwrap_or(metric_defaults.rebound_window_min),
    };

    for (i, r) in file.requests.iter().enumerate() {
        if !(r.magnitude_pct.is_finite() && r.magnitude_pct >= 0.0) {
            bail!("request {i}: magnitude_pct must be a non-negative number");
        }
        if r.magnitude_pct > 100.0 {
            log::warn!(
                "request {i} asks for {}% of the margin — beyond what the fleet \
                 is estimated to sustain",
                r.magnitude_pct
            );
        }
    }

    Ok(ResolvedScenario {
        name: file.name,
        description: file.description,
        seed: seed_override.unwrap_or(file.seed),
        horizon_min: file.horizon_min,
        population,
        climate,
        draws,
        identifier,
        mpc,
        weights_cm1,
        weights_cm2,
        cm_ramp_min: file.schedule.cm_ramp_min.unwrap_or(5),
        rebound_ramp_min: file.schedule.rebound_ramp_min.unwrap_or(60),
        truncate_holds: file.schedule.truncate_holds.unwrap_or(false),
        flexibility,
        metrics,
        requests: file.requests,
        derived: DerivedValues {
            p_nom_kw,
            class_counts: counts,
        },
    })
}

/// Convenience: load + resolve in one call.
pub fn load_resolved(path: &Path, seed_override: Option<u64>) -> Result<ResolvedScenario> {
    resolve(load(path)?, seed_override)
}
