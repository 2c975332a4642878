//! Circular-trajectory baseline and the circle used to initialise the
//! trajectory planners.
//!
//! The UAV flies a circle of radius `r` around the ground-node centroid with
//! angular kinematics `θ, ω, α`. Optimisation alternates between the radius
//! (angles fixed) and the angular profile (radius fixed), each by successive
//! convex approximation; the energy-efficiency variant wraps the alternation
//! in Dinkelbach's method.

mod problem;

pub use problem::{radius_limits, radius_power_coefficients, CircularProblem, Step};

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::model::{FeasibilityReport, PlanReport, RunStatus, Scenario, Trajectory, Vec2};
use crate::planners::{min_rate_of, DinkelbachStart, Objective, Plan, PlanOutcome, ScaConfig, EXPANSION_TOL};
use crate::subsolver::{solve_with_phase_one, SolveStatus, SolverOptions};
use crate::surrogates::{smax, PolarGn};

/// Number of log-spaced radii scanned before refinement.
const SCAN_POINTS: usize = 200;
/// Radius resolution of the refinement, m.
const RADIUS_RESOLUTION: f64 = 0.1;
/// Upper bound on radius/angle alternation rounds.
pub const MAX_ALTERNATIONS: usize = 30;

const PINNED_TOL: f64 = 1e-7;

/// Which objective the initial radius is chosen for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    MinRate,
    EnergyEfficiency,
}

/// Circle state: centre and radius, angular samples at `0..=N` and received
/// powers `s[k][n-1]` for slots `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularState {
    pub centre: Vec2,
    pub radius: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gns: Vec<PolarGn>,
    pub s: Vec<Vec<f64>>,
}

impl CircularState {
    /// Uniform flight (`ω = 2π/T`, `α = 0`, `θ[0] = phase`) with every node
    /// at peak power.
    pub fn uniform(scenario: &Scenario, radius: f64, phase: f64) -> Self {
        let n = scenario.slots;
        let centre = scenario.centroid();
        let w = TAU / scenario.period;
        let dt = scenario.slot_len();
        let theta: Vec<f64> = (0..=n).map(|i| phase + w * dt * i as f64).collect();
        let gns: Vec<PolarGn> = scenario.gn_positions.iter().map(|g| PolarGn::new(&centre, g)).collect();
        let s = gns
            .iter()
            .map(|gn| (1..=n).map(|i| smax(scenario, *gn, radius, theta[i])).collect())
            .collect();
        Self {
            centre,
            radius,
            theta,
            omega: vec![w; n + 1],
            alpha: vec![0.0; n + 1],
            gns,
            s,
        }
    }

    pub fn slots(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn position(&self, i: usize) -> Vec2 {
        self.centre + Vec2::new(self.theta[i].cos(), self.theta[i].sin()) * self.radius
    }

    /// Cartesian samples: velocity `rω` along the tangent, acceleration
    /// `rα` tangential plus `rω²` centripetal.
    pub fn trajectory(&self) -> Trajectory {
        let r = self.radius;
        let n = self.slots();
        let mut q = Vec::with_capacity(n + 1);
        let mut v = Vec::with_capacity(n + 1);
        let mut a = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let (st, ct) = self.theta[i].sin_cos();
            let tangent = Vec2::new(-st, ct);
            let radial = Vec2::new(ct, st);
            q.push(self.position(i));
            v.push(tangent * (r * self.omega[i]));
            a.push(tangent * (r * self.alpha[i]) - radial * (r * self.omega[i].powi(2)));
        }
        Trajectory { q, v, a }
    }

    pub fn plan(&self, scenario: &Scenario) -> Plan {
        let v1 = (1..=self.slots()).map(|i| self.radius * self.omega[i]).collect();
        Plan::from_received(scenario, self.trajectory(), self.s.clone(), v1)
    }

    /// Propulsion power in slot `i` from the angular model.
    pub fn prop_power(&self, scenario: &Scenario, i: usize) -> f64 {
        let r = self.radius;
        let w = self.omega[i];
        let a = self.alpha[i];
        let g2 = scenario.g.powi(2);
        scenario.c1 * (r * w).powi(3)
            + scenario.c2 / (r * w)
            + scenario.c2 * r * w.powi(3) / g2
            + scenario.c2 * r * a * a / (g2 * w)
    }

    pub fn average_prop_power(&self, scenario: &Scenario) -> f64 {
        let n = self.slots();
        (1..=n).map(|i| self.prop_power(scenario, i)).sum::<f64>() / n as f64
    }

    pub fn min_rate(&self) -> f64 {
        min_rate_of(&self.s)
    }

    /// Constraint residuals in the angular model. Kinematic and periodicity
    /// residuals are the angular recurrence errors times the radius; the
    /// remaining fields match the Cartesian audit of [`Self::plan`].
    pub fn audit(&self, scenario: &Scenario) -> FeasibilityReport {
        let n = self.slots();
        let dt = scenario.slot_len();
        let r = self.radius;
        let plan = self.plan(scenario);
        let mut rep = crate::model::audit(scenario, &plan.traj, &plan.link);
        rep.kinematic_position = 0.0;
        rep.kinematic_velocity = 0.0;
        for i in 1..=n {
            let dth = self.theta[i] - self.theta[i - 1] - self.omega[i - 1] * dt - 0.5 * self.alpha[i - 1] * dt * dt;
            let dw = self.omega[i] - self.omega[i - 1] - self.alpha[i - 1] * dt;
            rep.kinematic_position = rep.kinematic_position.max(r * dth.abs());
            rep.kinematic_velocity = rep.kinematic_velocity.max(r * dw.abs());
        }
        rep.periodicity = r * (self.theta[n] - self.theta[0] - TAU)
            .abs()
            .max((self.omega[n] - self.omega[0]).abs())
            .max((self.alpha[n] - self.alpha[0]).abs());
        rep.propulsion_limit = match scenario.prop_limit {
            Some(limit) => (self.average_prop_power(scenario) - limit).max(0.0),
            None => 0.0,
        };
        rep
    }

    /// Plan report with the angular audit in place of the Cartesian one.
    pub fn report(&self, scenario: &Scenario) -> PlanReport {
        let plan = self.plan(scenario);
        let mut report = PlanReport::evaluate(scenario, &plan.traj, &plan.link);
        report.feasibility = self.audit(scenario);
        report
    }
}

/// Radius interval admitted by the speed and acceleration limits at the
/// uniform angular rate `2π/T`.
pub fn radius_interval(scenario: &Scenario) -> Result<(f64, f64)> {
    let w = TAU / scenario.period;
    let lo = scenario.v_min / w;
    let hi = (scenario.v_max / w).min(scenario.a_max / (w * w));
    if lo > hi {
        return Err(Error::InfeasibleScenario(format!(
            "no circle satisfies the speed and acceleration limits (radius {lo:.3} m > {hi:.3} m)"
        )));
    }
    Ok((lo, hi))
}

/// Propulsion power of uniform circular flight at radius `r`.
pub fn circle_power(scenario: &Scenario, r: f64) -> f64 {
    let w = TAU / scenario.period;
    let g2 = scenario.g.powi(2);
    scenario.c1 * (r * w).powi(3) + scenario.c2 / (r * w) + scenario.c2 * r * w.powi(3) / g2
}

/// Speed and acceleration magnitude of the sampled circle that satisfies
/// the discrete kinematics exactly.
pub fn discrete_circle(scenario: &Scenario, r: f64) -> (f64, f64) {
    let half = PI / scenario.slots as f64;
    let dt = scenario.slot_len();
    let v = 2.0 * r * half.tan() / dt;
    (v, 2.0 * v * half.sin() / dt)
}

fn admissible(scenario: &Scenario, r: f64, mode: InitMode) -> bool {
    let (v, a) = discrete_circle(scenario, r);
    let tol = 1e-12;
    let mut ok = v <= scenario.v_max * (1.0 + tol) && v >= scenario.v_min * (1.0 - tol) && a <= scenario.a_max * (1.0 + tol);
    if let (InitMode::MinRate, Some(limit)) = (mode, scenario.prop_limit) {
        let discrete = scenario.c1 * v.powi(3) + scenario.c2 / v * (1.0 + (a / scenario.g).powi(2));
        ok &= circle_power(scenario, r) <= limit && discrete <= limit;
    }
    ok
}

/// Full-power value of uniform flight at radius `r`: the minimum average
/// rate, or the energy efficiency in bits per joule.
pub fn circle_value(scenario: &Scenario, r: f64, mode: InitMode) -> f64 {
    let rate = CircularState::uniform(scenario, r, 0.0).min_rate();
    match mode {
        InitMode::MinRate => rate,
        InitMode::EnergyEfficiency => scenario.bandwidth * rate / circle_power(scenario, r),
    }
}

/// Radius maximising [`circle_value`] over the admissible radii: a
/// log-spaced scan followed by golden-section refinement around the best
/// sample.
pub fn search_radius(scenario: &Scenario, mode: InitMode) -> Result<f64> {
    let (lo, hi) = radius_interval(scenario)?;
    let grid: Vec<f64> = if hi - lo <= RADIUS_RESOLUTION {
        vec![lo, hi]
    } else {
        let ratio = (hi / lo).ln();
        (0..SCAN_POINTS)
            .map(|i| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
            .collect()
    };
    let ok: Vec<bool> = grid.iter().map(|&r| admissible(scenario, r, mode)).collect();
    let vals: Vec<f64> = grid.iter().map(|&r| circle_value(scenario, r, mode)).collect();
    let best = (0..grid.len())
        .filter(|&i| ok[i])
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .ok_or_else(|| {
            Error::InfeasibleScenario(format!(
                "no circle with radius in [{lo:.3}, {hi:.3}] m meets the propulsion limit"
            ))
        })?;
    let mut a = if best > 0 && ok[best - 1] { grid[best - 1] } else { grid[best] };
    let mut b = if best + 1 < grid.len() && ok[best + 1] { grid[best + 1] } else { grid[best] };
    let f = |r: f64| circle_value(scenario, r, mode);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > RADIUS_RESOLUTION {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let r = [mid, grid[best]]
        .into_iter()
        .filter(|&r| admissible(scenario, r, mode))
        .max_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(grid[best]);
    debug!("initial radius {r:.3} m");
    Ok(r)
}

/// Sampled circle around the centroid that satisfies the discrete
/// kinematics exactly, flown at uniform angular rate with every node at
/// peak power.
pub fn circle_plan(scenario: &Scenario, r: f64) -> Plan {
    let n = scenario.slots;
    let centre = scenario.centroid();
    let step = TAU / n as f64;
    let (speed, acc) = discrete_circle(scenario, r);
    let mut q = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    let mut a = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let th = step * (i % n) as f64;
        let (st, ct) = th.sin_cos();
        let (sa, ca) = (th + 0.5 * step).sin_cos();
        q.push(centre + Vec2::new(ct, st) * r);
        v.push(Vec2::new(-st, ct) * speed);
        a.push(Vec2::new(-ca, -sa) * acc);
    }
    let traj = Trajectory { q, v, a };
    let p = vec![vec![scenario.peak_power; n]; scenario.num_gns()];
    Plan::from_powers(scenario, traj, p)
}

/// Initial plan for the trajectory planners.
pub fn init_plan(scenario: &Scenario, mode: InitMode) -> Result<Plan> {
    let r = search_radius(scenario, mode)?;
    Ok(circle_plan(scenario, r))
}

/// Initial state for the circular baseline.
pub fn init_state(scenario: &Scenario, mode: InitMode) -> Result<CircularState> {
    let r = search_radius(scenario, mode)?;
    Ok(CircularState::uniform(scenario, r, 0.0))
}

fn score(scenario: &Scenario, state: &CircularState, objective: Objective) -> (f64, f64) {
    let e = state.min_rate();
    match objective {
        Objective::MinRate => (e, e.abs()),
        Objective::EnergyEfficiency { lambda } => {
            let pen = lambda / scenario.bandwidth * state.average_prop_power(scenario);
            (e - pen, e.abs() + pen)
        }
    }
}

/// True when the uniform profile at radius `r` already uses the whole
/// propulsion budget. Uniform motion minimises the power at a fixed radius,
/// so no other profile is feasible and the angle step has nothing to move.
fn limit_pins_profile(scenario: &Scenario, r: f64) -> bool {
    scenario.prop_limit.is_some_and(|limit| circle_power(scenario, r) >= limit * (1.0 - PINNED_TOL))
}

/// One convex step of the given kind at `state`. Returns the new state and
/// whether the subsolver reached its tolerance.
pub fn step(
    scenario: &Scenario,
    state: &CircularState,
    kind: Step,
    objective: Objective,
    cfg: &ScaConfig,
) -> Result<(CircularState, SolveStatus)> {
    if kind == Step::Angle && objective == Objective::MinRate && limit_pins_profile(scenario, state.radius) {
        return Ok((state.clone(), SolveStatus::Optimal));
    }
    let problem = CircularProblem::build(scenario, state, kind, objective, cfg.curvature)?;
    let res = solve_with_phase_one(&problem.sp, &SolverOptions::with_tol(cfg.subsolver_tol))?;
    Ok((problem.extract(state, &res.x), res.status))
}

/// One radius step with the angular profile fixed.
pub fn solve_p31(scenario: &Scenario, state: &CircularState, cfg: &ScaConfig) -> Result<CircularState> {
    Ok(step(scenario, state, Step::Radius, Objective::MinRate, cfg)?.0)
}

/// One angular-profile step with the radius fixed.
pub fn solve_p32(scenario: &Scenario, state: &CircularState, cfg: &ScaConfig) -> Result<CircularState> {
    Ok(step(scenario, state, Step::Angle, Objective::MinRate, cfg)?.0)
}

struct Run {
    state: CircularState,
    trace: Vec<f64>,
    status: RunStatus,
    iterations: usize,
}

/// Successive steps of one kind until the true objective settles.
fn sca_loop(scenario: &Scenario, start: CircularState, kind: Step, objective: Objective, cfg: &ScaConfig) -> Run {
    let mut state = start;
    let (mut prev, _) = score(scenario, &state, objective);
    let mut trace = Vec::new();
    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..cfg.max_outer_iters {
        let (cand, st) = match step(scenario, &state, kind, objective, cfg) {
            Ok(x) => x,
            Err(e) => {
                warn!("{kind:?} step {it} failed: {e}");
                status = RunStatus::SubsolverFailure;
                break;
            }
        };
        let (val, scale) = score(scenario, &cand, objective);
        let (name, worst) = cand.audit(scenario).worst(scenario);
        if worst > EXPANSION_TOL || (st != SolveStatus::Optimal && val < prev - cfg.subsolver_tol) {
            warn!("{kind:?} step {it} ended with {st:?}; {name} residual {worst:.2e}");
            status = RunStatus::SubsolverFailure;
            break;
        }
        iterations += 1;
        state = cand;
        trace.push(val);
        if (val - prev).abs() <= cfg.rel_obj_tol * scale.max(f64::MIN_POSITIVE) {
            status = RunStatus::Converged;
            break;
        }
        prev = val;
    }
    Run {
        state,
        trace,
        status,
        iterations,
    }
}

/// Alternates radius and angular-profile loops until a full round leaves
/// the objective unchanged.
fn alternate(scenario: &Scenario, start: CircularState, objective: Objective, cfg: &ScaConfig) -> Run {
    let mut state = start;
    let (mut prev, _) = score(scenario, &state, objective);
    let mut trace = vec![prev];
    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    for round in 0..MAX_ALTERNATIONS {
        let mut failed = false;
        for kind in [Step::Radius, Step::Angle] {
            let run = sca_loop(scenario, state, kind, objective, cfg);
            state = run.state;
            trace.extend(run.trace);
            iterations += run.iterations;
            failed |= run.status == RunStatus::SubsolverFailure;
        }
        let (val, scale) = score(scenario, &state, objective);
        debug!("alternation {round}: objective {val:.9}, radius {:.3} m", state.radius);
        if failed {
            status = RunStatus::SubsolverFailure;
            break;
        }
        if (val - prev).abs() <= cfg.rel_obj_tol * scale.max(f64::MIN_POSITIVE) {
            status = RunStatus::Converged;
            break;
        }
        prev = val;
    }
    Run {
        state,
        trace,
        status,
        iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircularOutcome {
    pub state: CircularState,
    pub outcome: PlanOutcome,
}

fn finish(scenario: &Scenario, state: CircularState, started: Instant) -> CircularOutcome {
    let plan = state.plan(scenario);
    let mut report = state.report(scenario);
    report.wall_time_s = started.elapsed().as_secs_f64();
    CircularOutcome {
        state,
        outcome: PlanOutcome { plan, report },
    }
}

fn check_state(scenario: &Scenario, state: &CircularState) -> Result<()> {
    let n = scenario.slots;
    if state.theta.len() != n + 1 || state.s.len() != scenario.num_gns() {
        return Err(Error::InfeasibleInit("circular state shape does not match the scenario".into()));
    }
    let (name, worst) = state.audit(scenario).worst(scenario);
    if worst > EXPANSION_TOL {
        return Err(Error::InfeasibleInit(format!("{name} violated by {worst:.3e}")));
    }
    Ok(())
}

/// Radius-only optimisation: the uniform angular profile of `init` is kept.
pub fn solve_radius(scenario: &Scenario, init: &CircularState, cfg: &ScaConfig) -> Result<CircularOutcome> {
    let started = Instant::now();
    check_state(scenario, init)?;
    let run = sca_loop(scenario, init.clone(), Step::Radius, Objective::MinRate, cfg);
    let mut out = finish(scenario, run.state, started);
    out.outcome.report.status = run.status;
    out.outcome.report.objective_trace = run.trace;
    out.outcome.report.iterations = run.iterations;
    Ok(out)
}

/// Maximises the minimum average rate over circular trajectories.
pub fn solve_p3(scenario: &Scenario, init: &CircularState, cfg: &ScaConfig) -> Result<CircularOutcome> {
    let started = Instant::now();
    check_state(scenario, init)?;
    let run = alternate(scenario, init.clone(), Objective::MinRate, cfg);
    info!(
        "circular min-rate: {:?} after {} steps, objective {:.6}, radius {:.3} m",
        run.status,
        run.iterations,
        run.state.min_rate(),
        run.state.radius
    );
    let mut out = finish(scenario, run.state, started);
    out.outcome.report.status = run.status;
    out.outcome.report.objective_trace = run.trace;
    out.outcome.report.iterations = run.iterations;
    Ok(out)
}

/// Maximises the fairness energy efficiency over circular trajectories. The
/// average-power limit does not apply and is ignored.
pub fn solve_p4(scenario: &Scenario, init: &CircularState, cfg: &ScaConfig) -> Result<CircularOutcome> {
    let started = Instant::now();
    let scenario = scenario.clone().with_prop_limit(None);
    check_state(&scenario, init)?;
    let mut state = init.clone();
    let dt = scenario.slot_len();
    let n = scenario.slots as f64;
    let mut lambda = match cfg.dinkelbach_start {
        DinkelbachStart::Zero => 0.0,
        DinkelbachStart::InitialPlan => state.min_rate() * scenario.bandwidth / state.average_prop_power(&scenario),
    };
    let mut lambdas = Vec::new();
    let mut ees = Vec::new();
    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    let mut residual = None;
    for m in 0..cfg.max_dinkelbach_rounds {
        let run = alternate(&scenario, state, Objective::EnergyEfficiency { lambda }, cfg);
        state = run.state;
        iterations += run.iterations;
        let eta = scenario.bandwidth * dt * n * state.min_rate();
        let energy = dt * n * state.average_prop_power(&scenario);
        let f = eta - lambda * energy;
        let ee = eta / energy;
        debug!("circular Dinkelbach round {m}: lambda {lambda:.6e}, F {f:.6e}, EE {ee:.6e}");
        lambdas.push(lambda);
        ees.push(ee);
        residual = Some(f);
        if run.status == RunStatus::SubsolverFailure {
            status = RunStatus::SubsolverFailure;
            break;
        }
        if f.abs() <= cfg.dinkelbach_tol * (lambda * energy).max(1.0) {
            status = RunStatus::Converged;
            break;
        }
        lambda = ee;
    }
    info!(
        "circular energy efficiency: {status:?} after {} rounds, EE {:.6e} bits/J",
        lambdas.len(),
        ees.last().copied().unwrap_or(f64::NAN)
    );
    let mut out = finish(&scenario, state, started);
    out.outcome.report.status = status;
    out.outcome.report.objective_trace = ees;
    out.outcome.report.lambda_trace = lambdas;
    out.outcome.report.dinkelbach_residual = residual;
    out.outcome.report.iterations = iterations;
    Ok(out)
}
