//! Physical and radio model: scenario constants, line-of-sight channel gains,
//! interference-limited uplink rates, fixed-wing propulsion power, discrete
//! kinematics and the feasibility audit applied to every plan.
//!
//! Slot convention: the kinematic recurrences and the speed/acceleration
//! limits run over indices `0..=N`; rates, transmit powers and propulsion
//! power are accumulated over slots `1..=N`. Per-slot link quantities are
//! therefore stored with length `N`, entry `n - 1` holding slot `n`.

use std::f64::consts::LOG2_E;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.8;
/// Default aircraft constant multiplying `‖v‖³`.
pub const DEFAULT_C1: f64 = 9.26e-4;
/// Default aircraft constant multiplying `1/‖v‖`.
pub const DEFAULT_C2: f64 = 2250.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Immutable problem instance. All quantities are linear SI units; dB inputs
/// are converted once when a scenario file is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Horizontal ground-node positions, m.
    pub gn_positions: Vec<Vec2>,
    /// Flight altitude H, m.
    pub altitude: f64,
    /// Period T, s.
    pub period: f64,
    /// Number of slots N.
    pub slots: usize,
    /// Reference SNR at 1 m (channel power over noise power), linear.
    pub ref_snr: f64,
    /// Peak transmit power per ground node, W.
    pub peak_power: f64,
    /// Limit on the average propulsion power, W. `None` leaves it unconstrained.
    pub prop_limit: Option<f64>,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub g: f64,
}

impl Scenario {
    /// Scenario with the reference constants (H = 100 m, W = 1 MHz,
    /// γ0 = 80 dB, P_peak = 10 dBm, V ∈ [3, 100] m/s, a_max = 5 m/s²,
    /// P_lim = 150 W) and the given layout and time grid.
    pub fn reference(gn_positions: Vec<Vec2>, period: f64, slots: usize) -> Self {
        Self {
            gn_positions,
            altitude: 100.0,
            period,
            slots,
            ref_snr: db_to_linear(80.0),
            peak_power: dbm_to_watts(10.0),
            prop_limit: Some(150.0),
            bandwidth: 1e6,
            v_min: 3.0,
            v_max: 100.0,
            a_max: 5.0,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            g: GRAVITY,
        }
    }

    pub fn with_prop_limit(mut self, limit: Option<f64>) -> Self {
        self.prop_limit = limit;
        self
    }

    pub fn num_gns(&self) -> usize {
        self.gn_positions.len()
    }

    /// Slot length δt = T / N.
    pub fn slot_len(&self) -> f64 {
        self.period / self.slots as f64
    }

    /// Geometric centre of the ground nodes.
    pub fn centroid(&self) -> Vec2 {
        let sum = self
            .gn_positions
            .iter()
            .fold(Vec2::zeros(), |acc, w| acc + w);
        sum / self.num_gns() as f64
    }

    /// Speed minimising the hover-free propulsion power `c1 v³ + c2 / v`.
    pub fn power_optimal_speed(&self) -> f64 {
        (self.c2 / (3.0 * self.c1)).powf(0.25)
    }

    /// Smallest propulsion power reachable at a constant admissible speed.
    pub fn min_feasible_prop_power(&self) -> f64 {
        let v = self.power_optimal_speed().clamp(self.v_min, self.v_max);
        self.c1 * v.powi(3) + self.c2 / v
    }

    /// Checks the scenario invariants and returns it unchanged.
    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.gn_positions.is_empty() {
            return bad("at least one ground node is required".into());
        }
        if self
            .gn_positions
            .iter()
            .any(|w| !w.x.is_finite() || !w.y.is_finite())
        {
            return bad("gn_positions must be finite".into());
        }
        if self.slots < 4 {
            return bad(format!("slots must be at least 4, got {}", self.slots));
        }
        let positive = [
            ("altitude_m", self.altitude),
            ("period_s", self.period),
            ("ref_snr", self.ref_snr),
            ("peak_power", self.peak_power),
            ("bandwidth_hz", self.bandwidth),
            ("v_min", self.v_min),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("c1", self.c1),
            ("c2", self.c2),
            ("g", self.g),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if self.v_min >= self.v_max {
            return bad(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            ));
        }
        if let Some(limit) = self.prop_limit {
            if !(limit.is_finite() && limit > 0.0) {
                return bad(format!("prop_limit_w must be positive, got {limit}"));
            }
            let floor = self.min_feasible_prop_power();
            if limit < floor {
                return Err(Error::InfeasibleScenario(format!(
                    "propulsion limit {limit} W is below the minimum achievable {floor:.3} W"
                )));
            }
        }
        Ok(self)
    }
}

/// Places `k` ground nodes uniformly at random in the square
/// `[-half_side, half_side]²`, reproducibly for a given seed.
pub fn scatter_gns(k: usize, half_side: f64, seed: u64) -> Vec<Vec2> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            Vec2::new(
                rng.gen_range(-half_side..=half_side),
                rng.gen_range(-half_side..=half_side),
            )
        })
        .collect()
}

/// Discretised flight path: positions, velocities and accelerations at
/// indices `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub q: Vec<Vec2>,
    pub v: Vec<Vec2>,
    pub a: Vec<Vec2>,
}

impl Trajectory {
    /// Number of slots N (one less than the number of samples).
    pub fn slots(&self) -> usize {
        self.q.len() - 1
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }
}

/// Per-slot link variables. `g[k][n-1]` and `p[k][n-1]` belong to slot `n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkPlan {
    /// Received SNR-scaled power `p·h`.
    pub g: Vec<Vec<f64>>,
    /// Transmit power, W.
    pub p: Vec<Vec<f64>>,
    /// Speed slack variable bounding `‖v[n]‖` from below.
    pub v1: Vec<f64>,
    /// Minimum average rate objective, bits/s/Hz.
    pub tau: f64,
    /// Minimum delivered bits objective, bits.
    pub eta: f64,
}

/// `h_k[n] = γ0 / (‖q − w_k‖² + H²)`. Panics if `k` is not a ground node index.
pub fn channel_gain(scenario: &Scenario, q: &Vec2, k: usize) -> f64 {
    let d2 = (q - scenario.gn_positions[k]).norm_squared() + scenario.altitude.powi(2);
    scenario.ref_snr / d2
}

/// Channel gains of all ground nodes at one position.
pub fn channel_gains(scenario: &Scenario, q: &Vec2) -> Vec<f64> {
    (0..scenario.num_gns())
        .map(|k| channel_gain(scenario, q, k))
        .collect()
}

/// Rate of node `k` with every other node acting as interference.
pub fn instantaneous_rate(gains: &[f64], powers: &[f64], k: usize) -> f64 {
    let interference: f64 = gains
        .iter()
        .zip(powers)
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, (h, p))| h * p)
        .sum();
    (1.0 + powers[k] * gains[k] / (1.0 + interference)).log2()
}

/// The same rate written through received powers `G_j = p_j h_j` as a
/// difference of two concave functions.
pub fn rate_from_received(received: &[f64], k: usize) -> f64 {
    let total: f64 = received.iter().sum();
    let others = total - received[k];
    (1.0 + total).log2() - (1.0 + others).log2()
}

/// `log2(1 + Σ_{j≠k} G_j)`, the interference part of [`rate_from_received`].
pub fn interference_rate(received: &[f64], k: usize) -> f64 {
    let others: f64 = received
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, g)| g)
        .sum();
    (1.0 + others).log2()
}

/// Derivative of `log2(1 + s)`.
pub fn log2_slope(s: f64) -> f64 {
    LOG2_E / (1.0 + s)
}

/// `c1‖v‖³ + (c2/‖v‖)(1 + ‖a‖²/g²)`.
pub fn propulsion_power(scenario: &Scenario, v: &Vec2, a: &Vec2) -> Result<f64> {
    let speed = v.norm();
    if speed <= 0.0 {
        return Err(Error::ZeroSpeed);
    }
    Ok(scenario.c1 * speed.powi(3)
        + scenario.c2 / speed * (1.0 + a.norm_squared() / scenario.g.powi(2)))
}

/// Integrates the discrete kinematics from `(q0, v0)` under accelerations
/// `a[0..N]`. The terminal acceleration `a[N]` is not part of the recurrence
/// and is set to `a[0]`; periodicity of `q` and `v` is left to the audit.
pub fn propagate(scenario: &Scenario, q0: Vec2, v0: Vec2, accels: &[Vec2]) -> Trajectory {
    let n = scenario.slots;
    assert_eq!(accels.len(), n, "expected one acceleration per slot");
    let dt = scenario.slot_len();
    let mut q = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    q.push(q0);
    v.push(v0);
    for i in 1..=n {
        let a = accels[i - 1];
        v.push(v[i - 1] + a * dt);
        q.push(q[i - 1] + v[i - 1] * dt + a * (0.5 * dt * dt));
    }
    let mut a = accels.to_vec();
    a.push(accels[0]);
    Trajectory { q, v, a }
}

/// Named maximum constraint violations of a plan. All fields are absolute
/// and non-negative; [`FeasibilityReport::is_feasible`] normalises the
/// limit-type residuals by their limits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Position recurrence residual, m.
    pub kinematic_position: f64,
    /// Velocity recurrence residual, m/s.
    pub kinematic_velocity: f64,
    /// Mismatch between index 0 and index N of q, v and a.
    pub periodicity: f64,
    /// Excess of `‖v‖` over `V_max`, m/s.
    pub speed_upper: f64,
    /// Shortfall of `‖v‖` below `V_min`, m/s.
    pub speed_lower: f64,
    /// Excess of `‖a‖` over `a_max`, m/s².
    pub acceleration: f64,
    /// Transmit power outside `[0, P_peak]`, W.
    pub power_box: f64,
    /// Excess of the average propulsion power over `P_lim`, W.
    pub propulsion_limit: f64,
    /// Largest relative mismatch between `G` and `p·h` (0 when `G` is absent).
    pub received_power: f64,
}

impl FeasibilityReport {
    /// Residuals in the units used by the feasibility test: kinematics and
    /// periodicity absolute, limits relative to the limit.
    pub fn normalised(&self, scenario: &Scenario) -> [(&'static str, f64); 9] {
        let plim = scenario.prop_limit.unwrap_or(f64::INFINITY);
        [
            ("kinematic_position", self.kinematic_position),
            ("kinematic_velocity", self.kinematic_velocity),
            ("periodicity", self.periodicity),
            ("speed_upper", self.speed_upper / scenario.v_max),
            ("speed_lower", self.speed_lower / scenario.v_min),
            ("acceleration", self.acceleration / scenario.a_max),
            ("power_box", self.power_box / scenario.peak_power),
            ("propulsion_limit", self.propulsion_limit / plim),
            ("received_power", self.received_power),
        ]
    }

    /// True iff every normalised residual is at most `eps`.
    pub fn is_feasible(&self, scenario: &Scenario, eps: f64) -> bool {
        self.normalised(scenario).iter().all(|(_, r)| *r <= eps)
    }

    pub fn worst(&self, scenario: &Scenario) -> (&'static str, f64) {
        self.normalised(scenario)
            .into_iter()
            .fold(("none", 0.0), |best, item| if item.1 > best.1 { item } else { best })
    }
}

/// Maximum violations of the kinematic, periodicity, speed, acceleration,
/// transmit-power and average-propulsion constraints.
pub fn audit(scenario: &Scenario, traj: &Trajectory, link: &LinkPlan) -> FeasibilityReport {
    let n = traj.slots();
    let dt = scenario.slot_len();
    let mut rep = FeasibilityReport::default();
    for i in 1..=n {
        let dq = traj.q[i] - traj.q[i - 1] - traj.v[i - 1] * dt - traj.a[i - 1] * (0.5 * dt * dt);
        let dv = traj.v[i] - traj.v[i - 1] - traj.a[i - 1] * dt;
        rep.kinematic_position = rep.kinematic_position.max(dq.norm());
        rep.kinematic_velocity = rep.kinematic_velocity.max(dv.norm());
    }
    rep.periodicity = (traj.q[0] - traj.q[n])
        .norm()
        .max((traj.v[0] - traj.v[n]).norm())
        .max((traj.a[0] - traj.a[n]).norm());
    for i in 0..=n {
        let speed = traj.v[i].norm();
        rep.speed_upper = rep.speed_upper.max(speed - scenario.v_max);
        rep.speed_lower = rep.speed_lower.max(scenario.v_min - speed);
        rep.acceleration = rep.acceleration.max(traj.a[i].norm() - scenario.a_max);
    }
    for row in &link.p {
        for &p in row {
            rep.power_box = rep.power_box.max(-p).max(p - scenario.peak_power);
        }
    }
    if let Some(limit) = scenario.prop_limit {
        let avg = average_prop_power(scenario, traj);
        rep.propulsion_limit = (avg - limit).max(0.0);
    }
    if !link.g.is_empty() {
        for (k, (grow, prow)) in link.g.iter().zip(&link.p).enumerate() {
            for (i, (g, p)) in grow.iter().zip(prow).enumerate() {
                let h = channel_gain(scenario, &traj.q[i + 1], k);
                rep.received_power = rep.received_power.max((g - p * h).abs() / g.abs().max(1.0));
            }
        }
    }
    rep
}

/// Average propulsion power over slots `1..=N`; infinite if any speed is zero.
pub fn average_prop_power(scenario: &Scenario, traj: &Trajectory) -> f64 {
    let n = traj.slots();
    let total: f64 = (1..=n)
        .map(|i| propulsion_power(scenario, &traj.v[i], &traj.a[i]).unwrap_or(f64::INFINITY))
        .sum();
    total / n as f64
}

/// Per-slot rates `R_k[n]` for slots `1..=N`, indexed `[k][n-1]`.
pub fn slot_rates(scenario: &Scenario, traj: &Trajectory, powers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k_count = scenario.num_gns();
    let n = traj.slots();
    let mut rates = vec![vec![0.0; n]; k_count];
    let mut slot_powers = vec![0.0; k_count];
    for i in 1..=n {
        let gains = channel_gains(scenario, &traj.q[i]);
        for (k, p) in slot_powers.iter_mut().enumerate() {
            *p = powers[k][i - 1];
        }
        for (k, row) in rates.iter_mut().enumerate() {
            row[i - 1] = instantaneous_rate(&gains, &slot_powers, k);
        }
    }
    rates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    SubsolverFailure,
    /// Plan evaluated without running an optimiser.
    Evaluated,
}

/// Metrics, traces and audit attached to a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub status: RunStatus,
    pub objective_trace: Vec<f64>,
    /// Dinkelbach parameter per outer round (energy-efficiency runs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_trace: Vec<f64>,
    /// Final `F(λ)` of an energy-efficiency run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dinkelbach_residual: Option<f64>,
    pub rates: Vec<Vec<f64>>,
    pub avg_rate_per_gn: Vec<f64>,
    pub min_avg_rate: f64,
    pub avg_prop_power_w: f64,
    pub total_prop_energy_j: f64,
    pub ee_bits_per_joule: f64,
    pub avg_speed: f64,
    pub avg_acceleration: f64,
    pub feasibility: FeasibilityReport,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl PlanReport {
    /// Evaluates a plan with the model equations. Traces and run metadata
    /// are left empty for the caller to fill.
    pub fn evaluate(scenario: &Scenario, traj: &Trajectory, link: &LinkPlan) -> Self {
        let n = traj.slots();
        let dt = scenario.slot_len();
        let rates = slot_rates(scenario, traj, &link.p);
        let sums: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
        let avg_rate_per_gn: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let min_avg_rate = avg_rate_per_gn.iter().copied().fold(f64::INFINITY, f64::min);
        let avg_prop = average_prop_power(scenario, traj);
        let energy = avg_prop * n as f64 * dt;
        let min_bits = scenario.bandwidth * dt * sums.iter().copied().fold(f64::INFINITY, f64::min);
        let avg_speed = (1..=n).map(|i| traj.v[i].norm()).sum::<f64>() / n as f64;
        let avg_acc = (1..=n).map(|i| traj.a[i].norm()).sum::<f64>() / n as f64;
        Self {
            status: RunStatus::Evaluated,
            objective_trace: Vec::new(),
            lambda_trace: Vec::new(),
            dinkelbach_residual: None,
            rates,
            avg_rate_per_gn,
            min_avg_rate,
            avg_prop_power_w: avg_prop,
            total_prop_energy_j: energy,
            ee_bits_per_joule: min_bits / energy,
            avg_speed,
            avg_acceleration: avg_acc,
            feasibility: audit(scenario, traj, link),
            iterations: 0,
            wall_time_s: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_gn() -> Scenario {
        Scenario::reference(vec![Vec2::zeros()], 60.0, 30)
    }

    #[test]
    fn scattered_layout_is_seeded_and_bounded() {
        let a = scatter_gns(6, 250.0, 3);
        assert_eq!(a, scatter_gns(6, 250.0, 3));
        assert_ne!(a, scatter_gns(6, 250.0, 4));
        assert!(a.iter().all(|w| w.x.abs() <= 250.0 && w.y.abs() <= 250.0));
    }

    #[test]
    fn gain_directly_overhead() {
        let s = one_gn();
        assert_relative_eq!(channel_gain(&s, &Vec2::zeros(), 0), 1e4, max_relative = 1e-12);
        assert_relative_eq!(
            channel_gain(&s, &Vec2::new(100.0, 0.0), 0),
            5e3,
            max_relative = 1e-12
        );
        let mut unit = s.clone();
        unit.ref_snr = 1.0;
        unit.altitude = 1.0;
        assert_eq!(channel_gain(&unit, &Vec2::zeros(), 0), 1.0);
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(instantaneous_rate(&[100.0], &[1.0], 0), 101f64.log2());
        let two = instantaneous_rate(&[100.0, 100.0], &[1.0, 1.0], 0);
        assert_relative_eq!(two, (1.0 + 100.0 / 101.0f64).log2(), max_relative = 1e-14);
        assert!((two - 0.9928).abs() < 1e-4);
        assert_eq!(instantaneous_rate(&[100.0, 100.0], &[0.0, 1.0], 0), 0.0);
    }

    #[test]
    fn propulsion_examples() {
        let s = one_gn();
        let p30 = propulsion_power(&s, &Vec2::new(30.0, 0.0), &Vec2::zeros()).unwrap();
        assert!((p30 - 100.002).abs() < 1e-9);
        let p100 = propulsion_power(&s, &Vec2::new(0.0, 100.0), &Vec2::zeros()).unwrap();
        assert_relative_eq!(p100, 948.5, max_relative = 1e-12);
        let pg = propulsion_power(&s, &Vec2::new(30.0, 0.0), &Vec2::new(0.0, GRAVITY)).unwrap();
        assert!((pg - 175.002).abs() < 1e-9);
        assert!(matches!(
            propulsion_power(&s, &Vec2::zeros(), &Vec2::zeros()),
            Err(Error::ZeroSpeed)
        ));
    }

    #[test]
    fn propagate_constant_velocity() {
        let mut s = one_gn();
        s.period = 30.0;
        let q0 = Vec2::new(5.0, -2.0);
        let traj = propagate(&s, q0, Vec2::new(30.0, 0.0), &vec![Vec2::zeros(); 30]);
        for (n, q) in traj.q.iter().enumerate() {
            assert_relative_eq!(*q, q0 + Vec2::new(30.0 * n as f64, 0.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn propagate_single_step_by_hand() {
        let mut s = one_gn();
        s.slots = 4;
        s.period = 8.0;
        let mut acc = vec![Vec2::zeros(); 4];
        acc[0] = Vec2::new(1.0, 0.0);
        let traj = propagate(&s, Vec2::zeros(), Vec2::new(3.0, 0.0), &acc);
        assert_eq!(traj.v[1], Vec2::new(5.0, 0.0));
        assert_eq!(traj.q[1], Vec2::new(8.0, 0.0));
    }

    #[test]
    fn propagate_centripetal_stays_near_circle() {
        // Continuous centripetal profile sampled at slot starts. The Taylor
        // recurrence drifts by O(δt²) per slot, so O(δt²·N) over a lap.
        let drift = |slots: usize| {
            let r = 300.0;
            let omega = 0.1;
            let mut s = one_gn();
            s.slots = slots;
            s.period = 2.0 * std::f64::consts::PI / omega;
            let dt = s.slot_len();
            let acc: Vec<Vec2> = (0..slots)
                .map(|i| {
                    let th = omega * dt * i as f64;
                    -r * omega * omega * Vec2::new(th.cos(), th.sin())
                })
                .collect();
            let traj = propagate(&s, Vec2::new(r, 0.0), Vec2::new(0.0, r * omega), &acc);
            let worst = traj
                .q
                .iter()
                .map(|q| (q.norm() - r).abs())
                .fold(0.0, f64::max);
            (worst, r * omega * omega * dt * dt * slots as f64)
        };
        let (coarse, bound) = drift(200);
        assert!(coarse <= bound, "drift {coarse} above {bound}");
        let (fine, _) = drift(400);
        let ratio = coarse / fine;
        assert!((1.8..2.2).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn audit_flags_injected_speed_violation() {
        let mut s = one_gn();
        s.prop_limit = None;
        let mut traj = propagate(&s, Vec2::zeros(), Vec2::new(30.0, 0.0), &vec![Vec2::zeros(); 30]);
        traj.v[3] = Vec2::new(s.v_max + 1.0, 0.0);
        let rep = audit(&s, &traj, &LinkPlan::default());
        assert_relative_eq!(rep.speed_upper, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn audit_power_limit_boundary_is_zero() {
        let s = one_gn();
        // Straight flight is not periodic, but the propulsion residual only
        // looks at the average power.
        let traj = propagate(&s, Vec2::zeros(), Vec2::new(30.0, 0.0), &vec![Vec2::zeros(); 30]);
        let avg = average_prop_power(&s, &traj);
        let s = s.with_prop_limit(Some(avg));
        let rep = audit(&s, &traj, &LinkPlan::default());
        assert_eq!(rep.propulsion_limit, 0.0);
    }

    #[test]
    fn rate_identity_matches_direct_formula() {
        let gains = [3.0e3, 1.2e4, 40.0];
        let powers = [0.004, 0.01, 0.0];
        let received: Vec<f64> = gains.iter().zip(&powers).map(|(h, p)| h * p).collect();
        for k in 0..3 {
            let direct = instantaneous_rate(&gains, &powers, k);
            assert!((rate_from_received(&received, k) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let mut s = one_gn();
        s.slots = 0;
        assert!(matches!(s.validated(), Err(Error::InvalidScenario(_))));
        let mut s = one_gn();
        s.v_min = 120.0;
        assert!(matches!(s.validated(), Err(Error::InvalidScenario(_))));
        let s = one_gn().with_prop_limit(Some(90.0));
        assert!(matches!(s.validated(), Err(Error::InfeasibleScenario(_))));
        assert!(one_gn().validated().is_ok());
    }

    #[test]
    fn power_optimal_speed_matches_reference_constants() {
        let s = one_gn();
        let v = s.power_optimal_speed();
        assert!((v - 29.98).abs() < 0.1, "{v}");
        assert!((s.min_feasible_prop_power() - 100.0).abs() < 0.1);
    }
}
