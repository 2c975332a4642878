//! Joint trajectory and uplink power planning for a fixed-wing UAV serving
//! ground nodes, by successive convex approximation with an interior-point
//! subsolver and a Dinkelbach outer loop for energy efficiency.

pub mod circular;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod planners;
pub mod subsolver;
pub mod surrogates;

pub use error::{Error, Result};
pub use model::{
    audit, channel_gain, instantaneous_rate, propagate, propulsion_power, scatter_gns,
    FeasibilityReport, LinkPlan, PlanReport, RunStatus, Scenario, Trajectory, Vec2,
};
pub use planners::{DinkelbachStart, Plan, PlanOutcome, ScaConfig};
