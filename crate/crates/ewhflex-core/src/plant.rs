//! Population model of thermostatically controlled electric water heaters.
//!
//! Each unit is a fully mixed single-node tank with a hysteretic thermostat.
//! The aggregate listens to one broadcast set-point delta and reports the
//! fleet power at 1-minute granularity, integrating internally at 10-second
//! sub-steps to keep dead-band overshoot artifacts small.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exogenous::ExogenousInputs;
use crate::scalar::{c, Scalar};

/// Specific heat of water in kWh/(l·K).
pub const WATER_KWH_PER_L_K: f64 = 1.163e-3;
/// Tank temperature at which standing losses are rated, °C.
pub const RATING_TANK_C: f64 = 65.0;
/// Ambient temperature assumed by the standing-loss rating, °C.
pub const RATING_AMBIENT_C: f64 = 20.0;
/// Integration sub-steps per 1-minute sample.
pub const SUBSTEPS_PER_MINUTE: usize = 6;

/// Errors produced by plant construction and stepping.
#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("class shares invalid: {0}")]
    InvalidShares(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("draw volume {volume_l} l outside [0, {capacity_l} l]")]
    DrawOutOfRange { volume_l: f64, capacity_l: f64 },
    #[error("minute {minute} outside exogenous input span {span}")]
    MinuteOutOfSpan { minute: usize, span: usize },
}

/// Static parameters of one water heater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwhParams<T> {
    /// Tank volume in liters.
    pub capacity_liters: T,
    /// Electrical heater rating in kW.
    pub nominal_power_kw: T,
    /// User set-point in °C.
    pub setpoint_c: T,
    /// Thermostat half-band Δ in °C (dead-band is 2Δ wide).
    pub halfband_c: T,
    /// Hard upper temperature limit in °C.
    pub max_temperature_c: T,
    /// Standing losses at the rating point, kWh per day.
    pub dispersion_kwh_per_day: T,
}

impl<T: Scalar> EwhParams<T> {
    pub fn new(
        capacity_liters: T,
        nominal_power_kw: T,
        setpoint_c: T,
        halfband_c: T,
        max_temperature_c: T,
        dispersion_kwh_per_day: T,
    ) -> Result<Self, PlantError> {
        let p = Self {
            capacity_liters,
            nominal_power_kw,
            setpoint_c,
            halfband_c,
            max_temperature_c,
            dispersion_kwh_per_day,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), PlantError> {
        let all = [
            self.capacity_liters,
            self.nominal_power_kw,
            self.setpoint_c,
            self.halfband_c,
            self.max_temperature_c,
            self.dispersion_kwh_per_day,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFinite("EwhParams"));
        }
        if self.capacity_liters <= T::zero()
            || self.nominal_power_kw <= T::zero()
            || self.halfband_c <= T::zero()
            || self.dispersion_kwh_per_day < T::zero()
        {
            return Err(PlantError::InvalidParams(
                "capacity, power and halfband must be positive; dispersion non-negative".into(),
            ));
        }
        if self.setpoint_c + self.halfband_c > self.max_temperature_c {
            return Err(PlantError::InvalidParams(format!(
                "setpoint {} + halfband {} exceeds max temperature {}",
                self.setpoint_c, self.halfband_c, self.max_temperature_c
            )));
        }
        Ok(())
    }

    /// Thermal capacity of the tank contents, kWh/K.
    #[inline]
    pub fn thermal_capacity_kwh_per_k(&self) -> T {
        self.capacity_liters * c::<T>(WATER_KWH_PER_L_K)
    }

    /// Standing-loss coefficient, kW/K, calibrated from the daily dispersion
    /// at the 65 °C / 20 °C rating point.
    #[inline]
    pub fn loss_coefficient_kw_per_k(&self) -> T {
        self.dispersion_kwh_per_day / c::<T>(24.0 * (RATING_TANK_C - RATING_AMBIENT_C))
    }
}

/// Dynamic state of one water heater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwhState<T> {
    /// Mixed tank temperature in °C.
    pub temperature_c: T,
    /// Heater relay state.
    pub heater_on: bool,
    /// Set-point currently enforced by the thermostat (user set-point plus
    /// broadcast delta, clamped).
    pub effective_setpoint_c: T,
}

/// Standard hysteretic thermostat with closed thresholds: at exactly a
/// threshold the transition fires, which keeps trajectories deterministic.
#[inline]
pub fn thermostat_update<T: Scalar>(
    heater_on: bool,
    temperature_c: T,
    effective_setpoint_c: T,
    halfband_c: T,
) -> bool {
    if temperature_c <= effective_setpoint_c - halfband_c {
        true
    } else if temperature_c >= effective_setpoint_c + halfband_c {
        false
    } else {
        heater_on
    }
}

/// Advances one tank by `dt_hours`: first-order thermal balance, then
/// instantaneous mixing of the drawn volume with cold water, then a
/// thermostat refresh.
pub fn tank_step<T: Scalar>(
    state: &EwhState<T>,
    params: &EwhParams<T>,
    ambient_c: T,
    cold_water_c: T,
    draw_liters: T,
    dt_hours: T,
) -> Result<EwhState<T>, PlantError> {
    if !(state.temperature_c.is_finite()
        && state.effective_setpoint_c.is_finite()
        && ambient_c.is_finite()
        && cold_water_c.is_finite()
        && draw_liters.is_finite()
        && dt_hours.is_finite())
    {
        return Err(PlantError::NonFinite("tank_step"));
    }
    if dt_hours <= T::zero() {
        return Err(PlantError::InvalidParams("dt must be positive".into()));
    }
    if draw_liters < T::zero() || draw_liters > params.capacity_liters {
        return Err(PlantError::DrawOutOfRange {
            volume_l: draw_liters.to_f64(),
            capacity_l: params.capacity_liters.to_f64(),
        });
    }
    Ok(tank_step_unchecked(
        state,
        params,
        ambient_c,
        cold_water_c,
        draw_liters,
        dt_hours,
    ))
}

#[inline]
fn tank_step_unchecked<T: Scalar>(
    state: &EwhState<T>,
    params: &EwhParams<T>,
    ambient_c: T,
    cold_water_c: T,
    draw_liters: T,
    dt_hours: T,
) -> EwhState<T> {
    let heat = if state.heater_on {
        params.nominal_power_kw
    } else {
        T::zero()
    };
    let loss = params.loss_coefficient_kw_per_k() * (state.temperature_c - ambient_c);
    let mut temperature =
        state.temperature_c + dt_hours * (heat - loss) / params.thermal_capacity_kwh_per_k();
    temperature += draw_liters / params.capacity_liters * (cold_water_c - temperature);
    let heater_on = thermostat_update(
        state.heater_on,
        temperature,
        state.effective_setpoint_c,
        params.halfband_c,
    );
    EwhState {
        temperature_c: temperature,
        heater_on,
        effective_setpoint_c: state.effective_setpoint_c,
    }
}

/// A fleet of water heaters plus its nominal power total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePopulation<T> {
    pub units: Vec<(EwhParams<T>, EwhState<T>)>,
    pub nominal_power_total_kw: T,
}

impl<T: Scalar> AggregatePopulation<T> {
    pub fn from_units(units: Vec<(EwhParams<T>, EwhState<T>)>) -> Result<Self, PlantError> {
        if units.is_empty() {
            return Err(PlantError::EmptyPopulation);
        }
        let mut total = T::zero();
        for (p, _) in &units {
            p.validate()?;
            total += p.nominal_power_kw;
        }
        Ok(Self {
            units,
            nominal_power_total_kw: total,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Σ nominal power of the units whose heater is currently on.
    pub fn instantaneous_power_kw(&self) -> T {
        let mut sum = T::zero();
        for (p, s) in &self.units {
            if s.heater_on {
                sum += p.nominal_power_kw;
            }
        }
        sum
    }
}

/// Applies the broadcast set-point delta to every unit (clamped to
/// `[cold_water + halfband, max_temperature − halfband]`), advances the fleet
/// one minute in [`SUBSTEPS_PER_MINUTE`] sub-steps with the minute's draw
/// volume split evenly across them, and returns the mean ON-power over the
/// minute.
pub fn aggregate_step<T: Scalar>(
    population: &mut AggregatePopulation<T>,
    delta_setpoint_c: T,
    inputs: &ExogenousInputs<T>,
    minute: usize,
) -> Result<T, PlantError> {
    if !delta_setpoint_c.is_finite() {
        return Err(PlantError::NonFinite("delta_setpoint"));
    }
    if population.units.is_empty() {
        return Err(PlantError::EmptyPopulation);
    }
    if minute >= inputs.horizon_min() {
        return Err(PlantError::MinuteOutOfSpan {
            minute,
            span: inputs.horizon_min(),
        });
    }
    let ambient = inputs.ambient_c(minute);
    let cold = inputs.cold_water_c(minute);
    let substeps = c::<T>(SUBSTEPS_PER_MINUTE as f64);
    let dt_hours = T::one() / (c::<T>(60.0) * substeps);

    let mut power_sum = T::zero();
    for (i, (params, state)) in population.units.iter_mut().enumerate() {
        let lo = cold + params.halfband_c;
        let hi = params.max_temperature_c - params.halfband_c;
        state.effective_setpoint_c = (params.setpoint_c + delta_setpoint_c).max(lo).min(hi);

        let draw_minute = inputs.draw_liters(minute, i);
        debug_assert!(draw_minute >= T::zero() && draw_minute <= params.capacity_liters);
        let draw_sub = draw_minute / substeps;
        let mut unit_on_steps = T::zero();
        for _ in 0..SUBSTEPS_PER_MINUTE {
            if state.heater_on {
                unit_on_steps += T::one();
            }
            *state = tank_step_unchecked(state, params, ambient, cold, draw_sub, dt_hours);
        }
        power_sum += params.nominal_power_kw * unit_on_steps;
    }
    Ok(power_sum / substeps)
}

/// One commercial model class inside an aggregate descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec<T> {
    /// Population share in [0, 1]; shares must sum to 1.
    pub share: T,
    pub capacity_liters: T,
    pub nominal_power_kw: T,
    pub dispersion_kwh_per_day: T,
}

/// Descriptor from which a concrete population is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec<T> {
    pub n_units: usize,
    pub classes: Vec<ClassSpec<T>>,
    /// User set-points are drawn uniformly from this range (°C).
    pub setpoint_min_c: T,
    pub setpoint_max_c: T,
    pub halfband_c: T,
    pub max_temperature_c: T,
    /// Expected per-unit daily draw volume, used only to estimate the
    /// initial duty cycle (l/day).
    pub expected_daily_draw_l: T,
    /// Reference temperatures for the duty estimate (°C).
    pub cold_water_ref_c: T,
    pub ambient_ref_c: T,
}

/// Splits `n_units` across class shares with largest-remainder rounding:
/// every class gets the floor of its exact share, then the leftover units go
/// to the classes with the largest fractional parts (ties broken by class
/// order).
pub fn class_counts<T: Scalar>(
    classes: &[ClassSpec<T>],
    n_units: usize,
) -> Result<Vec<usize>, PlantError> {
    if classes.is_empty() {
        return Err(PlantError::InvalidShares("no classes given".into()));
    }
    let mut sum = T::zero();
    for cl in classes {
        if !cl.share.is_finite() || cl.share < T::zero() {
            return Err(PlantError::InvalidShares(format!(
                "share {} out of range",
                cl.share
            )));
        }
        sum += cl.share;
    }
    if (sum - T::one()).abs() > c::<T>(1e-9) {
        return Err(PlantError::InvalidShares(format!(
            "shares sum to {sum}, expected 1"
        )));
    }
    let mut counts = Vec::with_capacity(classes.len());
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(classes.len());
    let mut assigned = 0usize;
    for (i, cl) in classes.iter().enumerate() {
        let exact = cl.share.to_f64() * n_units as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        fractions.push((i, exact - exact.floor()));
    }
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in fractions.iter().take(n_units.saturating_sub(assigned)) {
        counts[*i] += 1;
    }
    Ok(counts)
}

/// Samples a concrete population from a descriptor. Deterministic for a
/// fixed RNG state: units are generated class by class, and per unit the
/// draw order is set-point, temperature, heater coin.
pub fn build_population<T: Scalar, R: Rng>(
    spec: &PopulationSpec<T>,
    rng: &mut R,
) -> Result<AggregatePopulation<T>, PlantError> {
    if spec.n_units == 0 {
        return Err(PlantError::EmptyPopulation);
    }
    if spec.setpoint_min_c > spec.setpoint_max_c {
        return Err(PlantError::InvalidParams("setpoint range inverted".into()));
    }
    let counts = class_counts(&spec.classes, spec.n_units)?;
    let setpoint_dist = Uniform::new_inclusive(spec.setpoint_min_c, spec.setpoint_max_c);
    let mut units = Vec::with_capacity(spec.n_units);
    for (class, &count) in spec.classes.iter().zip(counts.iter()) {
        for _ in 0..count {
            let setpoint = setpoint_dist.sample(rng);
            let params = EwhParams::new(
                class.capacity_liters,
                class.nominal_power_kw,
                setpoint,
                spec.halfband_c,
                spec.max_temperature_c,
                class.dispersion_kwh_per_day,
            )?;
            let temp_dist = Uniform::new_inclusive(
                setpoint - spec.halfband_c,
                setpoint + spec.halfband_c,
            );
            let temperature = temp_dist.sample(rng);
            let duty = estimate_duty(&params, spec);
            let coin_on = rng.gen::<f64>() < duty;
            // A thermostat pass makes the sampled relay state consistent
            // with hysteresis at the sampled temperature.
            let heater_on = thermostat_update(coin_on, temperature, setpoint, spec.halfband_c);
            units.push((
                params,
                EwhState {
                    temperature_c: temperature,
                    heater_on,
                    effective_setpoint_c: setpoint,
                },
            ));
        }
    }
    AggregatePopulation::from_units(units)
}

/// Long-run duty-cycle estimate: standing losses at the set-point plus the
/// average draw reheat load, relative to the heater rating.
fn estimate_duty<T: Scalar>(params: &EwhParams<T>, spec: &PopulationSpec<T>) -> f64 {
    let standing =
        params.loss_coefficient_kw_per_k() * (params.setpoint_c - spec.ambient_ref_c);
    let draw = spec.expected_daily_draw_l * c::<T>(WATER_KWH_PER_L_K)
        * (params.setpoint_c - spec.cold_water_ref_c)
        / c::<T>(24.0);
    let duty = ((standing + draw) / params.nominal_power_kw).to_f64();
    duty.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exogenous::ExogenousInputs;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params_100l() -> EwhParams<f64> {
        EwhParams::new(100.0, 1.5, 60.0, 2.5, 75.0, 1.56).unwrap()
    }

    fn constant_inputs(n_units: usize, minutes: usize) -> ExogenousInputs<f64> {
        ExogenousInputs::constant(n_units, minutes, 20.0, 15.0)
    }

    #[test]
    fn thermostat_switches_on_below_lower_threshold() {
        assert!(thermostat_update(false, 54.9, 60.0, 2.5));
    }

    #[test]
    fn thermostat_switches_off_above_upper_threshold() {
        assert!(!thermostat_update(true, 63.0, 60.0, 2.5));
    }

    #[test]
    fn thermostat_holds_state_inside_deadband() {
        assert!(thermostat_update(true, 60.0, 60.0, 2.5));
        assert!(!thermostat_update(false, 60.0, 60.0, 2.5));
    }

    #[test]
    fn thermostat_thresholds_are_closed() {
        assert!(thermostat_update(false, 57.5, 60.0, 2.5));
        assert!(!thermostat_update(true, 62.5, 60.0, 2.5));
    }

    #[test]
    fn tank_in_equilibrium_stays_put() {
        let params = params_100l();
        let state = EwhState {
            temperature_c: 20.0,
            heater_on: false,
            effective_setpoint_c: 60.0,
        };
        // Heater off, ambient equals tank temperature, no draw.
        let next = tank_step(&state, &params, 20.0, 15.0, 0.0, 1.0 / 60.0).unwrap();
        assert_eq!(next.temperature_c, 20.0);
    }

    #[test]
    fn lossless_heating_rate_matches_hand_value() {
        // 1.5 kW into 100 l (C = 0.1163 kWh/K) for one minute:
        // Δθ = 1.5/60/0.1163 ≈ 0.215 K.
        let params = EwhParams::new(100.0, 1.5, 60.0, 2.5, 75.0, 0.0).unwrap();
        let state = EwhState {
            temperature_c: 58.0,
            heater_on: true,
            effective_setpoint_c: 60.0,
        };
        let next = tank_step(&state, &params, 20.0, 15.0, 0.0, 1.0 / 60.0).unwrap();
        assert_relative_eq!(next.temperature_c - 58.0, 1.5 / 60.0 / 0.1163, epsilon = 1e-12);
    }

    #[test]
    fn heating_with_losses_tracks_analytic_solution() {
        // With constant heating and losses the node has the closed form
        // θ(t) = θ∞ + (θ0 − θ∞)·exp(−U·t/C). Sub-minute Euler stepping must
        // stay within a hair of it over a full hour.
        let params = params_100l();
        let u = params.loss_coefficient_kw_per_k();
        let cth = params.thermal_capacity_kwh_per_k();
        let theta_inf = 20.0 + 1.5 / u;
        let theta0 = 40.0;
        let mut state = EwhState {
            temperature_c: theta0,
            heater_on: true,
            // Set-point high enough that the thermostat never interferes.
            effective_setpoint_c: 70.0,
        };
        let dt = 1.0 / 360.0; // 10-second sub-steps
        for _ in 0..360 {
            state = tank_step(&state, &params, 20.0, 15.0, 0.0, dt).unwrap();
        }
        let analytic = theta_inf + (theta0 - theta_inf) * (-u * 1.0 / cth).exp();
        // Forward-Euler truncation over the hour is O(n·(λ·dt)²·|θ0 − θ∞|)
        // ≈ 2·10⁻⁴ K at 10-second steps; allow a small cushion over that.
        assert_abs_diff_eq!(state.temperature_c, analytic, epsilon = 5e-4);
    }

    #[test]
    fn full_capacity_draw_replaces_tank_with_cold_water() {
        let params = EwhParams::new(100.0, 1.5, 60.0, 2.5, 75.0, 0.0).unwrap();
        let state = EwhState {
            temperature_c: 60.0,
            heater_on: false,
            effective_setpoint_c: 60.0,
        };
        let next = tank_step(&state, &params, 60.0, 15.0, 100.0, 1e-9).unwrap();
        assert_relative_eq!(next.temperature_c, 15.0, epsilon = 1e-9);
    }

    #[test]
    fn tank_step_rejects_bad_inputs() {
        let params = params_100l();
        let state = EwhState {
            temperature_c: 60.0,
            heater_on: false,
            effective_setpoint_c: 60.0,
        };
        assert!(tank_step(&state, &params, f64::NAN, 15.0, 0.0, 1.0 / 60.0).is_err());
        assert!(tank_step(&state, &params, 20.0, 15.0, -1.0, 1.0 / 60.0).is_err());
        assert!(tank_step(&state, &params, 20.0, 15.0, 101.0, 1.0 / 60.0).is_err());
        assert!(tank_step(&state, &params, 20.0, 15.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn aggregate_of_off_units_reports_zero_power() {
        let params = params_100l();
        let units = (0..10)
            .map(|_| {
                (
                    params.clone(),
                    EwhState {
                        temperature_c: 60.0,
                        heater_on: false,
                        effective_setpoint_c: 60.0,
                    },
                )
            })
            .collect();
        let mut pop = AggregatePopulation::from_units(units).unwrap();
        let inputs = constant_inputs(10, 5);
        let p = aggregate_step(&mut pop, 0.0, &inputs, 0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn aggregate_all_on_reports_nominal_total() {
        // 600 units at 1.5 kW all heating from cold: exactly 900 kW.
        let units = (0..600)
            .map(|_| {
                (
                    params_100l(),
                    EwhState {
                        temperature_c: 45.0,
                        heater_on: true,
                        effective_setpoint_c: 60.0,
                    },
                )
            })
            .collect();
        let mut pop = AggregatePopulation::from_units(units).unwrap();
        assert_eq!(pop.nominal_power_total_kw, 900.0);
        let inputs = constant_inputs(600, 5);
        let p = aggregate_step(&mut pop, 0.0, &inputs, 0).unwrap();
        assert_eq!(p, 900.0);
        assert_eq!(pop.instantaneous_power_kw(), 900.0);
    }

    #[test]
    fn aggregate_power_stays_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = agg1_spec();
        let mut pop = build_population(&spec, &mut rng).unwrap();
        let inputs = ExogenousInputs::constant(600, 60, 20.0, 15.0);
        for minute in 0..60 {
            let p = aggregate_step(&mut pop, -3.0, &inputs, minute).unwrap();
            assert!(p >= 0.0 && p <= pop.nominal_power_total_kw);
        }
    }

    #[test]
    fn aggregate_step_rejects_non_finite_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pop = build_population(&agg1_spec(), &mut rng).unwrap();
        let inputs = constant_inputs(600, 5);
        assert!(aggregate_step(&mut pop, f64::NAN, &inputs, 0).is_err());
    }

    #[test]
    fn effective_setpoint_clamps_to_physical_band() {
        let params = params_100l();
        let units = vec![(
            params,
            EwhState {
                temperature_c: 60.0,
                heater_on: false,
                effective_setpoint_c: 60.0,
            },
        )];
        let mut pop = AggregatePopulation::from_units(units).unwrap();
        let inputs = constant_inputs(1, 5);
        aggregate_step(&mut pop, -100.0, &inputs, 0).unwrap();
        // Floor: cold water 15 + halfband 2.5.
        assert_eq!(pop.units[0].1.effective_setpoint_c, 17.5);
        aggregate_step(&mut pop, 100.0, &inputs, 1).unwrap();
        // Ceiling: max temperature 75 − halfband 2.5.
        assert_eq!(pop.units[0].1.effective_setpoint_c, 72.5);
    }

    fn agg1_spec() -> PopulationSpec<f64> {
        PopulationSpec {
            n_units: 600,
            classes: vec![ClassSpec {
                share: 1.0,
                capacity_liters: 100.0,
                nominal_power_kw: 1.5,
                dispersion_kwh_per_day: 1.56,
            }],
            setpoint_min_c: 55.0,
            setpoint_max_c: 65.0,
            halfband_c: 2.5,
            max_temperature_c: 75.0,
            expected_daily_draw_l: 120.0,
            cold_water_ref_c: 15.0,
            ambient_ref_c: 20.0,
        }
    }

    fn agg2_spec() -> PopulationSpec<f64> {
        PopulationSpec {
            n_units: 600,
            classes: vec![
                ClassSpec {
                    share: 0.22,
                    capacity_liters: 50.0,
                    nominal_power_kw: 1.2,
                    dispersion_kwh_per_day: 0.99,
                },
                ClassSpec {
                    share: 0.60,
                    capacity_liters: 80.0,
                    nominal_power_kw: 1.2,
                    dispersion_kwh_per_day: 1.35,
                },
                ClassSpec {
                    share: 0.18,
                    capacity_liters: 100.0,
                    nominal_power_kw: 1.5,
                    dispersion_kwh_per_day: 1.56,
                },
            ],
            setpoint_min_c: 55.0,
            setpoint_max_c: 65.0,
            halfband_c: 2.5,
            max_temperature_c: 75.0,
            expected_daily_draw_l: 120.0,
            cold_water_ref_c: 15.0,
            ambient_ref_c: 20.0,
        }
    }

    #[test]
    fn aggregate1_population_totals_900_kw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = build_population(&agg1_spec(), &mut rng).unwrap();
        assert_eq!(pop.n_units(), 600);
        assert_eq!(pop.nominal_power_total_kw, 900.0);
    }

    #[test]
    fn aggregate2_population_shares_and_total() {
        let counts = class_counts(&agg2_spec().classes, 600).unwrap();
        assert_eq!(counts, vec![132, 360, 108]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = build_population(&agg2_spec(), &mut rng).unwrap();
        assert!((pop.nominal_power_total_kw - 752.4).abs() < 1e-9);
    }

    #[test]
    fn largest_remainder_distributes_leftovers() {
        let classes = vec![
            ClassSpec {
                share: 1.0 / 3.0,
                capacity_liters: 50.0,
                nominal_power_kw: 1.2,
                dispersion_kwh_per_day: 0.99,
            },
            ClassSpec {
                share: 1.0 / 3.0,
                capacity_liters: 80.0,
                nominal_power_kw: 1.2,
                dispersion_kwh_per_day: 1.35,
            },
            ClassSpec {
                share: 1.0 / 3.0,
                capacity_liters: 100.0,
                nominal_power_kw: 1.5,
                dispersion_kwh_per_day: 1.56,
            },
        ];
        // 100 × 1/3 = 33.33…, remainders equal: earlier classes win ties.
        assert_eq!(class_counts(&classes, 100).unwrap(), vec![34, 33, 33]);
    }

    #[test]
    fn invalid_shares_are_rejected() {
        let mut spec = agg2_spec();
        spec.classes[0].share = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_population(&spec, &mut rng),
            Err(PlantError::InvalidShares(_))
        ));
    }

    #[test]
    fn same_seed_builds_identical_population() {
        let a = build_population(&agg2_spec(), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = build_population(&agg2_spec(), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_states_respect_hysteresis_and_band() {
        let pop = build_population(&agg1_spec(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (p, s) in &pop.units {
            assert!(p.setpoint_c >= 55.0 && p.setpoint_c <= 65.0);
            assert!(s.temperature_c >= p.setpoint_c - p.halfband_c);
            assert!(s.temperature_c <= p.setpoint_c + p.halfband_c);
            // Consistency: at the closed thresholds the forced state holds.
            assert_eq!(
                s.heater_on,
                thermostat_update(s.heater_on, s.temperature_c, p.setpoint_c, p.halfband_c)
            );
        }
    }
}
