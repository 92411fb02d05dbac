//! Scenario ingestion, closed-loop orchestration, and report emission for
//! the water-heater flexibility toolkit.

pub mod charts;
pub mod report;
pub mod runner;
pub mod scenario;
