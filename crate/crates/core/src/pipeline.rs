//! One entry point per planner, each starting from its default initial plan.

use std::fmt;
use std::str::FromStr;

use crate::circular::{
    init_plan, init_state, solve_p3, solve_p4, CircularOutcome, CircularState, InitMode,
};
use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::planners::{solve_ee, solve_min_rate, PlanOutcome, ScaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    MinRate,
    EnergyEfficiency,
    CircularMinRate,
    CircularEnergyEfficiency,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::MinRate,
        Method::EnergyEfficiency,
        Method::CircularMinRate,
        Method::CircularEnergyEfficiency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MinRate => "plan-minrate",
            Method::EnergyEfficiency => "plan-ee",
            Method::CircularMinRate => "baseline-circular-minrate",
            Method::CircularEnergyEfficiency => "baseline-circular-ee",
        }
    }

    pub fn is_energy_efficiency(self) -> bool {
        matches!(self, Method::EnergyEfficiency | Method::CircularEnergyEfficiency)
    }

    fn init_mode(self) -> InitMode {
        if self.is_energy_efficiency() {
            InitMode::EnergyEfficiency
        } else {
            InitMode::MinRate
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown method {s:?}")))
    }
}

/// Result of [`run`]. Circular methods also return their angular state,
/// which is what their feasibility is judged on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub outcome: PlanOutcome,
    pub circle: Option<CircularState>,
}

/// Runs `method` on `scenario` from the best uniform circle.
pub fn run(scenario: &Scenario, method: Method, cfg: &ScaConfig) -> Result<RunOutput> {
    let mode = method.init_mode();
    let plain = |outcome| RunOutput { outcome, circle: None };
    let circular = |out: CircularOutcome| RunOutput {
        outcome: out.outcome,
        circle: Some(out.state),
    };
    Ok(match method {
        Method::MinRate => plain(solve_min_rate(scenario, &init_plan(scenario, mode)?, cfg)?),
        Method::EnergyEfficiency => plain(solve_ee(scenario, &init_plan(scenario, mode)?, cfg)?),
        Method::CircularMinRate => circular(solve_p3(scenario, &init_state(scenario, mode)?, cfg)?),
        Method::CircularEnergyEfficiency => {
            circular(solve_p4(scenario, &init_state(scenario, mode)?, cfg)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("plan-fast".parse::<Method>().is_err());
    }
}
