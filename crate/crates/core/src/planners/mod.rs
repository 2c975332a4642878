//! Successive convex approximation planners: max-min average rate under a
//! propulsion-power limit, and fairness energy efficiency via Dinkelbach's
//! method.

mod problem;

pub use problem::{g_reference, min_rate_of, slack_power_sum, Objective, TrajectoryProblem, EXPANSION_TOL};

use std::time::Instant;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::model::{
    audit, average_prop_power, channel_gain, LinkPlan, PlanReport, RunStatus, Scenario, Trajectory,
};
use crate::subsolver::{solve_with_phase_one, SolveStatus, SolverOptions};
use crate::surrogates::Curvature;

/// A trajectory together with its link variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub traj: Trajectory,
    pub link: LinkPlan,
}

impl Plan {
    /// Plan from received powers; transmit powers are recovered and the
    /// objectives filled in from the model.
    pub fn from_received(scenario: &Scenario, traj: Trajectory, g: Vec<Vec<f64>>, v1: Vec<f64>) -> Self {
        let p = recover_power(scenario, &traj, &g).p;
        let tau = min_rate_of(&g);
        let link = LinkPlan {
            g,
            p,
            v1,
            tau,
            eta: scenario.bandwidth * scenario.slot_len() * scenario.slots as f64 * tau,
        };
        Self { traj, link }
    }

    /// Plan from transmit powers with the speed slack set to the speed.
    pub fn from_powers(scenario: &Scenario, traj: Trajectory, p: Vec<Vec<f64>>) -> Self {
        let n = traj.slots();
        let g: Vec<Vec<f64>> = p
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(i, pk)| pk * channel_gain(scenario, &traj.q[i + 1], k))
                    .collect()
            })
            .collect();
        let v1 = (1..=n).map(|i| traj.v[i].norm()).collect();
        let mut plan = Self::from_received(scenario, traj, g, v1);
        plan.link.p = p;
        plan
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaConfig {
    pub max_outer_iters: usize,
    /// Relative objective change below which the approximation loop stops.
    pub rel_obj_tol: f64,
    /// Relative tolerance on `F(λ)`, scaled by `max(1, λ·E)`.
    pub dinkelbach_tol: f64,
    pub max_dinkelbach_rounds: usize,
    pub subsolver_tol: f64,
    /// Curvature of the received-power minorants.
    pub curvature: Curvature,
    pub dinkelbach_start: DinkelbachStart,
}

/// Starting parameter of Dinkelbach's method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DinkelbachStart {
    /// `λ = 0`: the first round maximises the minimum rate alone.
    Zero,
    /// The efficiency of the initial plan, so every round can only improve
    /// on it.
    #[default]
    InitialPlan,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            rel_obj_tol: 1e-4,
            dinkelbach_tol: 1e-3,
            max_dinkelbach_rounds: 20,
            subsolver_tol: 1e-7,
            curvature: Curvature::Tangent,
            dinkelbach_start: DinkelbachStart::default(),
        }
    }
}

/// One Dinkelbach round: the parameter used, the achieved `F`, and the
/// round index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachState {
    /// Bits per joule.
    pub lambda: f64,
    /// `η − λ·E` in bits.
    pub f: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub report: PlanReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecovery {
    pub p: Vec<Vec<f64>>,
    /// Largest amount by which `G/h` exceeded `P_peak` before clipping, W.
    pub max_excess: f64,
}

/// `p = G/h`, clipped to `[0, P_peak]`.
pub fn recover_power(scenario: &Scenario, traj: &Trajectory, g: &[Vec<f64>]) -> PowerRecovery {
    let mut max_excess = 0.0f64;
    let p = g
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(i, gk)| {
                    let raw = gk / channel_gain(scenario, &traj.q[i + 1], k);
                    max_excess = max_excess.max(raw - scenario.peak_power);
                    raw.clamp(0.0, scenario.peak_power)
                })
                .collect()
        })
        .collect();
    if max_excess > 1e-8 * scenario.peak_power {
        warn!("recovered transmit power exceeds the peak by {max_excess:.3e} W");
    }
    PowerRecovery { p, max_excess }
}

pub fn build_p12(scenario: &Scenario, expansion: &Plan) -> Result<TrajectoryProblem> {
    TrajectoryProblem::build(scenario, expansion, Objective::MinRate, Curvature::default())
}

/// `lambda` is the Dinkelbach parameter in bits per joule.
pub fn build_p23(scenario: &Scenario, expansion: &Plan, lambda: f64) -> Result<TrajectoryProblem> {
    TrajectoryProblem::build(scenario, expansion, Objective::EnergyEfficiency { lambda }, Curvature::default())
}

struct ScaRun {
    plan: Plan,
    trace: Vec<f64>,
    status: RunStatus,
    iterations: usize,
}

/// True objective of a plan for the given restriction and the scale used by
/// the relative stopping test.
fn score(scenario: &Scenario, plan: &Plan, objective: Objective) -> (f64, f64) {
    let e = min_rate_of(&plan.link.g);
    match objective {
        Objective::MinRate => (e, e.abs()),
        Objective::EnergyEfficiency { lambda } => {
            let pen = lambda / (scenario.bandwidth * scenario.slots as f64)
                * slack_power_sum(scenario, &plan.traj, &plan.link);
            (e - pen, e.abs() + pen)
        }
    }
}

fn run_sca(scenario: &Scenario, start: Plan, objective: Objective, cfg: &ScaConfig) -> Result<ScaRun> {
    let opts = SolverOptions::with_tol(cfg.subsolver_tol);
    let mut plan = start;
    let (mut prev, _) = score(scenario, &plan, objective);
    let mut trace = vec![prev];
    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..cfg.max_outer_iters {
        let problem = match TrajectoryProblem::build(scenario, &plan, objective, cfg.curvature) {
            Ok(p) => p,
            Err(e) if it == 0 => return Err(e),
            Err(e) => {
                warn!("iterate {it} rejected as expansion point: {e}");
                status = RunStatus::SubsolverFailure;
                break;
            }
        };
        let res = match solve_with_phase_one(&problem.sp, &opts) {
            Ok(r) => r,
            Err(e) => {
                warn!("subproblem {it} failed: {e}");
                status = RunStatus::SubsolverFailure;
                break;
            }
        };
        let cand = problem.extract(scenario, &res.x);
        let (val, scale) = score(scenario, &cand, objective);
        let rep = audit(scenario, &cand.traj, &cand.link);
        let (name, worst) = rep.worst(scenario);
        if worst > EXPANSION_TOL || (res.status != SolveStatus::Optimal && val < prev - cfg.subsolver_tol) {
            warn!("subproblem {it} ended with {:?}; {name} residual {worst:.2e}", res.status);
            status = RunStatus::SubsolverFailure;
            break;
        }
        iterations = it + 1;
        debug!(
            "iteration {iterations}: objective {val:.9} (surrogate {:.9}, {} Newton steps)",
            res.objective, res.iterations
        );
        plan = cand;
        trace.push(val);
        if (val - prev).abs() <= cfg.rel_obj_tol * scale.max(f64::MIN_POSITIVE) {
            status = RunStatus::Converged;
            break;
        }
        prev = val;
    }
    Ok(ScaRun {
        plan,
        trace,
        status,
        iterations,
    })
}

fn check_init(scenario: &Scenario, init: &Plan) -> Result<()> {
    let n = scenario.slots;
    if init.traj.q.len() != n + 1 {
        return Err(Error::InfeasibleInit(format!(
            "initial trajectory has {} samples, expected {}",
            init.traj.q.len(),
            n + 1
        )));
    }
    let rep = audit(scenario, &init.traj, &init.link);
    let (name, worst) = rep.worst(scenario);
    if worst > EXPANSION_TOL {
        return Err(Error::InfeasibleInit(format!("{name} violated by {worst:.3e}")));
    }
    Ok(())
}

fn finish(scenario: &Scenario, plan: Plan, started: Instant) -> PlanOutcome {
    let mut report = PlanReport::evaluate(scenario, &plan.traj, &plan.link);
    report.wall_time_s = started.elapsed().as_secs_f64();
    PlanOutcome { plan, report }
}

/// Maximises the minimum average rate starting from a feasible plan.
pub fn solve_min_rate(scenario: &Scenario, init: &Plan, cfg: &ScaConfig) -> Result<PlanOutcome> {
    let started = Instant::now();
    check_init(scenario, init)?;
    let start = Plan::from_powers(scenario, init.traj.clone(), init.link.p.clone());
    let run = run_sca(scenario, start, Objective::MinRate, cfg)?;
    info!(
        "min-rate planner: {:?} after {} iterations, objective {:.6}",
        run.status,
        run.iterations,
        run.trace.last().copied().unwrap_or(f64::NAN)
    );
    let mut out = finish(scenario, run.plan, started);
    out.report.status = run.status;
    out.report.objective_trace = run.trace;
    out.report.iterations = run.iterations;
    Ok(out)
}

/// Maximises the fairness energy efficiency (minimum delivered bits per
/// joule of propulsion energy). The average-power limit does not apply to
/// this problem and is ignored.
pub fn solve_ee(scenario: &Scenario, init: &Plan, cfg: &ScaConfig) -> Result<PlanOutcome> {
    let started = Instant::now();
    let scenario = scenario.clone().with_prop_limit(None);
    check_init(&scenario, init)?;
    let mut plan = Plan::from_powers(&scenario, init.traj.clone(), init.link.p.clone());
    let dt = scenario.slot_len();
    let mut lambda = match cfg.dinkelbach_start {
        DinkelbachStart::Zero => 0.0,
        DinkelbachStart::InitialPlan => {
            let eta = scenario.bandwidth * dt * scenario.slots as f64 * min_rate_of(&plan.link.g);
            eta / (dt * scenario.slots as f64 * average_prop_power(&scenario, &plan.traj))
        }
    };
    let mut lambdas = Vec::new();
    let mut ees = Vec::new();
    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    let mut residual = None;
    for m in 0..cfg.max_dinkelbach_rounds {
        let run = run_sca(&scenario, plan, Objective::EnergyEfficiency { lambda }, cfg)?;
        plan = run.plan;
        iterations += run.iterations;
        let eta = scenario.bandwidth * dt * scenario.slots as f64 * min_rate_of(&plan.link.g);
        let energy = dt * scenario.slots as f64 * average_prop_power(&scenario, &plan.traj);
        let state = DinkelbachState {
            lambda,
            f: eta - lambda * energy,
            m,
        };
        let ee = eta / energy;
        debug!(
            "Dinkelbach round {m}: lambda {lambda:.6e}, F {:.6e}, EE {ee:.6e}",
            state.f
        );
        lambdas.push(lambda);
        ees.push(ee);
        residual = Some(state.f);
        if run.status == RunStatus::SubsolverFailure {
            status = RunStatus::SubsolverFailure;
            break;
        }
        if state.f.abs() <= cfg.dinkelbach_tol * (lambda * energy).max(1.0) {
            status = RunStatus::Converged;
            break;
        }
        lambda = ee;
    }
    info!(
        "energy-efficiency planner: {status:?} after {} rounds, EE {:.6e} bits/J",
        lambdas.len(),
        ees.last().copied().unwrap_or(f64::NAN)
    );
    let mut out = finish(&scenario, plan, started);
    out.report.status = status;
    out.report.objective_trace = ees;
    out.report.lambda_trace = lambdas;
    out.report.dinkelbach_residual = residual;
    out.report.iterations = iterations;
    Ok(out)
}
