//! Simulation and control toolkit for aggregates of thermostatically
//! controlled electric water heaters.
//!
//! The crate models a fleet of tank water heaters that all listen to one
//! broadcast set-point offset, identifies a low-order model of the aggregate
//! power online, and closes the loop with a receding-horizon controller so
//! the fleet can track demand-response power references. A Monte Carlo layer
//! estimates how much flexibility the fleet can offer before a request is
//! committed.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`];
//! the type aliases at the crate root fix `f64` for everyday use.

pub mod exogenous;
pub mod flexibility;
pub mod identifier;
pub mod linalg;
pub mod metrics;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod rng;
pub mod scalar;
pub mod scheduler;

/// Minutes per simulated day; every schedule and draw profile is laid out on
/// this grid.
pub const MINUTES_PER_DAY: usize = 1440;

/// Default-precision aliases so downstream code does not have to spell out
/// the generic parameter.
pub type EwhParams = plant::EwhParams<f64>;
pub type EwhState = plant::EwhState<f64>;
pub type AggregatePopulation = plant::AggregatePopulation<f64>;
pub type ExogenousInputs = exogenous::ExogenousInputs<f64>;
pub type ArxEstimate = identifier::ArxEstimate<f64>;
pub type IdentifierState = identifier::IdentifierState<f64>;
pub type IdentifierConfig = identifier::IdentifierConfig<f64>;
pub type Weights = mpc::Weights<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
pub type ControlSolution = mpc::ControlSolution<f64>;
pub type Controller = mpc::Controller<f64>;
pub type DrRequest = scheduler::DrRequest<f64>;
pub type ModeSchedule = scheduler::ModeSchedule<f64>;
pub type Schedule = scheduler::Schedule<f64>;
pub type PopulationSpec = plant::PopulationSpec<f64>;
pub type FlexConfig = flexibility::FlexConfig<f64>;
pub type FlexProfiles = flexibility::FlexProfiles<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
