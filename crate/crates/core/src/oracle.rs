//! Independent reference computations used to check the planners.
//!
//! Nothing here calls the model, surrogate or planner evaluators: rates,
//! propulsion power and constraint residuals are re-derived from the raw
//! scenario constants so that a shared bug cannot hide on both sides of a
//! comparison.

use std::f64::consts::{LN_2, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Scenario, Trajectory};
use crate::subsolver::{AffineRow, ConstraintKind, Kernel, Layout, SmoothFn, SubProblem};

/// Central-difference gradient with per-coordinate steps `h`. The flag is
/// set when any sample is non-finite.
pub fn finite_diff_gradient<F: Fn(&[f64]) -> f64 + ?Sized>(f: &F, x: &[f64], h: &[f64]) -> (Vec<f64>, bool) {
    let mut xp = x.to_vec();
    let mut bad = false;
    let g = (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h[i];
            let fp = f(&xp);
            xp[i] = x[i] - h[i];
            let fm = f(&xp);
            xp[i] = x[i];
            if !fp.is_finite() || !fm.is_finite() {
                bad = true;
            }
            (fp - fm) / (2.0 * h[i])
        })
        .collect();
    (g, bad)
}

/// One reference-versus-candidate comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub quantity: String,
    pub reference: f64,
    pub candidate: f64,
    pub abs_error: f64,
    /// `abs_error / max(|reference|, 1e-300)`.
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Passes when the relative error is within `tol`.
    pub fn relative(quantity: impl Into<String>, reference: f64, candidate: f64, tol: f64) -> Self {
        let abs_error = (reference - candidate).abs();
        let rel_error = abs_error / reference.abs().max(1e-300);
        Self {
            quantity: quantity.into(),
            reference,
            candidate,
            abs_error,
            rel_error,
            tolerance: tol,
            pass: rel_error <= tol,
        }
    }

    /// Passes when the absolute error is within `tol`.
    pub fn absolute(quantity: impl Into<String>, reference: f64, candidate: f64, tol: f64) -> Self {
        let mut r = Self::relative(quantity, reference, candidate, tol);
        r.pass = r.abs_error <= tol;
        r
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: reference {:.9e}, candidate {:.9e}, rel. error {:.3e} (tol {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.quantity,
            self.reference,
            self.candidate,
            self.rel_error,
            self.tolerance
        )
    }
}

/// Plan metrics recomputed from positions, velocities, accelerations and
/// transmit powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `[k][n-1]`, bits/s/Hz.
    pub rates: Vec<Vec<f64>>,
    pub avg_rate_per_gn: Vec<f64>,
    pub min_avg_rate: f64,
    pub avg_prop_power_w: f64,
    pub total_prop_energy_j: f64,
    /// Minimum delivered bits over the period.
    pub min_bits: f64,
    pub ee_bits_per_joule: f64,
    pub avg_speed: f64,
    pub avg_acceleration: f64,
}

impl Metrics {
    /// Rows of a summary table: average speed, average acceleration,
    /// minimum average rate, average propulsion power and energy efficiency.
    pub fn summary(&self) -> [(&'static str, f64); 5] {
        [
            ("avg_speed_mps", self.avg_speed),
            ("avg_acceleration_mps2", self.avg_acceleration),
            ("min_avg_rate_bps_hz", self.min_avg_rate),
            ("avg_prop_power_w", self.avg_prop_power_w),
            ("ee_bits_per_joule", self.ee_bits_per_joule),
        ]
    }
}

fn hypot2(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

/// Aerodynamic power from speed and squared acceleration magnitude.
fn flight_power(s: &Scenario, speed: f64, acc_sq: f64) -> f64 {
    let gg = s.g * s.g;
    s.c1 * speed * speed * speed + s.c2 / speed + s.c2 * acc_sq / (gg * speed)
}

/// Recomputes rates, power, energy and efficiency of a Cartesian plan.
/// `powers` is indexed `[k][n-1]` for slots `1..=N`.
pub fn recompute_metrics(scenario: &Scenario, traj: &Trajectory, powers: &[Vec<f64>]) -> Metrics {
    let n = traj.q.len() - 1;
    let kc = scenario.gn_positions.len();
    let dt = scenario.period / n as f64;
    let hh = scenario.altitude * scenario.altitude;
    let mut rates = vec![vec![0.0; n]; kc];
    for i in 1..=n {
        let q = traj.q[i];
        let rx: Vec<f64> = (0..kc)
            .map(|k| {
                let w = scenario.gn_positions[k];
                let d2 = (q.x - w.x).powi(2) + (q.y - w.y).powi(2) + hh;
                powers[k][i - 1] * scenario.ref_snr / d2
            })
            .collect();
        let total: f64 = rx.iter().sum();
        for k in 0..kc {
            let sinr = rx[k] / (1.0 + total - rx[k]);
            rates[k][i - 1] = (1.0 + sinr).ln() / LN_2;
        }
    }
    let mut power_sum = 0.0;
    let mut speed_sum = 0.0;
    let mut acc_sum = 0.0;
    for i in 1..=n {
        let speed = hypot2(traj.v[i].x, traj.v[i].y);
        let acc = hypot2(traj.a[i].x, traj.a[i].y);
        power_sum += flight_power(scenario, speed, acc * acc);
        speed_sum += speed;
        acc_sum += acc;
    }
    metrics_from(scenario, rates, power_sum, speed_sum, acc_sum, n, dt)
}

fn metrics_from(
    scenario: &Scenario,
    rates: Vec<Vec<f64>>,
    power_sum: f64,
    speed_sum: f64,
    acc_sum: f64,
    n: usize,
    dt: f64,
) -> Metrics {
    let sums: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
    let min_sum = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let min_bits = scenario.bandwidth * dt * min_sum;
    let energy = dt * power_sum;
    Metrics {
        avg_rate_per_gn: sums.iter().map(|s| s / n as f64).collect(),
        min_avg_rate: min_sum / n as f64,
        avg_prop_power_w: power_sum / n as f64,
        total_prop_energy_j: energy,
        min_bits,
        ee_bits_per_joule: min_bits / energy,
        avg_speed: speed_sum / n as f64,
        avg_acceleration: acc_sum / n as f64,
        rates,
    }
}

/// Recomputes the metrics of a circular plan from its angular description
/// (`θ, ω, α` at `0..=N`, centre, radius). Speed is `rω` and the squared
/// acceleration `r²(α² + ω⁴)`.
pub fn recompute_circular_metrics(
    scenario: &Scenario,
    centre: [f64; 2],
    radius: f64,
    theta: &[f64],
    omega: &[f64],
    alpha: &[f64],
    powers: &[Vec<f64>],
) -> Metrics {
    let n = theta.len() - 1;
    let positions: Vec<crate::model::Vec2> = theta
        .iter()
        .map(|t| crate::model::Vec2::new(centre[0] + radius * t.cos(), centre[1] + radius * t.sin()))
        .collect();
    let dummy = Trajectory {
        q: positions,
        v: vec![crate::model::Vec2::zeros(); n + 1],
        a: vec![crate::model::Vec2::zeros(); n + 1],
    };
    let base = recompute_metrics(scenario, &dummy, powers);
    let dt = scenario.period / n as f64;
    let mut power_sum = 0.0;
    let mut speed_sum = 0.0;
    let mut acc_sum = 0.0;
    for i in 1..=n {
        let speed = radius * omega[i];
        let acc_sq = radius * radius * (alpha[i] * alpha[i] + omega[i].powi(4));
        power_sum += flight_power(scenario, speed, acc_sq);
        speed_sum += speed;
        acc_sum += acc_sq.sqrt();
    }
    metrics_from(scenario, base.rates, power_sum, speed_sum, acc_sum, n, dt)
}

/// Named constraint residuals. Kinematics and periodicity are absolute
/// (m, m/s, m/s²); speed, acceleration, power-box and propulsion-limit
/// entries are relative to their limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub residuals: Vec<(String, f64)>,
}

impl AuditReport {
    pub fn worst(&self) -> (&str, f64) {
        self.residuals
            .iter()
            .fold(("none", 0.0), |b, (name, v)| if *v > b.1 { (name.as_str(), *v) } else { b })
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.residuals.iter().all(|(_, v)| *v <= tol)
    }
}

fn limit_residuals(
    scenario: &Scenario,
    speeds: &[f64],
    accs: &[f64],
    powers: &[Vec<f64>],
    avg_power: f64,
) -> Vec<(String, f64)> {
    let mut over = 0.0f64;
    let mut under = 0.0f64;
    let mut acc = 0.0f64;
    for &sp in speeds {
        over = over.max((sp - scenario.v_max) / scenario.v_max);
        under = under.max((scenario.v_min - sp) / scenario.v_min);
    }
    for &a in accs {
        acc = acc.max((a - scenario.a_max) / scenario.a_max);
    }
    let mut pbox = 0.0f64;
    for row in powers {
        for &p in row {
            pbox = pbox.max(-p / scenario.peak_power).max((p - scenario.peak_power) / scenario.peak_power);
        }
    }
    let plim = match scenario.prop_limit {
        Some(l) => ((avg_power - l) / l).max(0.0),
        None => 0.0,
    };
    vec![
        ("speed_upper".into(), over),
        ("speed_lower".into(), under),
        ("acceleration".into(), acc),
        ("power_box".into(), pbox),
        ("propulsion_limit".into(), plim),
    ]
}

/// Audits a Cartesian plan against the discrete kinematics, periodicity,
/// speed and acceleration limits, transmit-power box and average
/// propulsion limit.
pub fn audit_plan(scenario: &Scenario, traj: &Trajectory, powers: &[Vec<f64>]) -> AuditReport {
    let n = traj.q.len() - 1;
    let dt = scenario.period / n as f64;
    let mut pos = 0.0f64;
    let mut vel = 0.0f64;
    for i in 0..n {
        let (q0, q1, v0, v1, a0) = (traj.q[i], traj.q[i + 1], traj.v[i], traj.v[i + 1], traj.a[i]);
        let ex = q1.x - q0.x - v0.x * dt - 0.5 * a0.x * dt * dt;
        let ey = q1.y - q0.y - v0.y * dt - 0.5 * a0.y * dt * dt;
        pos = pos.max(hypot2(ex, ey));
        vel = vel.max(hypot2(v1.x - v0.x - a0.x * dt, v1.y - v0.y - a0.y * dt));
    }
    let per = [(traj.q[0], traj.q[n]), (traj.v[0], traj.v[n]), (traj.a[0], traj.a[n])]
        .iter()
        .map(|(a, b)| hypot2(a.x - b.x, a.y - b.y))
        .fold(0.0, f64::max);
    let speeds: Vec<f64> = traj.v.iter().map(|v| hypot2(v.x, v.y)).collect();
    let accs: Vec<f64> = traj.a.iter().map(|a| hypot2(a.x, a.y)).collect();
    let avg = recompute_metrics(scenario, traj, powers).avg_prop_power_w;
    let mut residuals = vec![
        ("kinematic_position".into(), pos),
        ("kinematic_velocity".into(), vel),
        ("periodicity".into(), per),
    ];
    residuals.extend(limit_residuals(scenario, &speeds, &accs, powers, avg));
    AuditReport { residuals }
}

/// Audits a circular plan in its angular description. Kinematic and
/// periodicity residuals are angular recurrence errors scaled by the
/// radius, so they are arc lengths and arc speeds.
pub fn audit_circular(
    scenario: &Scenario,
    radius: f64,
    theta: &[f64],
    omega: &[f64],
    alpha: &[f64],
    powers: &[Vec<f64>],
) -> AuditReport {
    let n = theta.len() - 1;
    let dt = scenario.period / n as f64;
    let mut pos = 0.0f64;
    let mut vel = 0.0f64;
    for i in 0..n {
        let e = theta[i + 1] - theta[i] - omega[i] * dt - 0.5 * alpha[i] * dt * dt;
        pos = pos.max(radius * e.abs());
        vel = vel.max(radius * (omega[i + 1] - omega[i] - alpha[i] * dt).abs());
    }
    let per = radius
        * (theta[n] - theta[0] - TAU)
            .abs()
            .max((omega[n] - omega[0]).abs())
            .max((alpha[n] - alpha[0]).abs());
    let speeds: Vec<f64> = omega.iter().map(|w| radius * w).collect();
    let accs: Vec<f64> = omega
        .iter()
        .zip(alpha)
        .map(|(w, a)| radius * (a * a + w.powi(4)).sqrt())
        .collect();
    let avg = recompute_circular_metrics(scenario, [0.0, 0.0], radius, theta, omega, alpha, powers).avg_prop_power_w;
    let mut residuals = vec![
        ("kinematic_position".into(), pos),
        ("kinematic_velocity".into(), vel),
        ("periodicity".into(), per),
    ];
    residuals.extend(limit_residuals(scenario, &speeds, &accs, powers, avg));
    AuditReport { residuals }
}

/// Best uniform circle found by exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub radius: f64,
    pub phase: f64,
    pub min_rate: f64,
    /// Radius spacing of the grid, m.
    pub radius_step: f64,
    /// Largest change of the objective between neighbouring grid points
    /// around the optimum, a bound on the discretisation error.
    pub resolution: f64,
}

/// Full-power minimum average rate of the uniform circle of radius `r`
/// around the centroid with `θ[n] = phase + 2πn/N`.
pub fn uniform_circle_rate(scenario: &Scenario, r: f64, phase: f64) -> f64 {
    let n = scenario.slots;
    let kc = scenario.gn_positions.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for w in &scenario.gn_positions {
        cx += w.x / kc as f64;
        cy += w.y / kc as f64;
    }
    let powers = vec![vec![scenario.peak_power; n]; kc];
    let q: Vec<crate::model::Vec2> = (0..=n)
        .map(|i| {
            let t = phase + TAU * i as f64 / n as f64;
            crate::model::Vec2::new(cx + r * t.cos(), cy + r * t.sin())
        })
        .collect();
    let traj = Trajectory {
        v: vec![crate::model::Vec2::zeros(); n + 1],
        a: vec![crate::model::Vec2::zeros(); n + 1],
        q,
    };
    recompute_metrics(scenario, &traj, &powers).min_avg_rate
}

/// Exhaustive search over `radii × phases` uniform circles flown at
/// `ω = 2π/T` (the only constant rate compatible with one closed lap per
/// period). Radii span the speed and acceleration interval; circles whose
/// propulsion power exceeds `P_lim` are skipped. `None` when no grid point
/// is admissible.
pub fn brute_force_circular(scenario: &Scenario, radii: usize, phases: usize) -> Option<GridOptimum> {
    let w = TAU / scenario.period;
    let lo = scenario.v_min / w;
    let hi = (scenario.v_max / w).min(scenario.a_max / (w * w));
    if lo > hi || radii == 0 || phases == 0 {
        return None;
    }
    let step = if radii > 1 { (hi - lo) / (radii - 1) as f64 } else { 0.0 };
    let slot_angle = TAU / scenario.slots as f64;
    let mut table = vec![vec![f64::NEG_INFINITY; phases]; radii];
    for (i, row) in table.iter_mut().enumerate() {
        let r = lo + step * i as f64;
        let speed = r * w;
        let power = flight_power(scenario, speed, (r * w * w).powi(2));
        if scenario.prop_limit.is_some_and(|l| power > l) {
            continue;
        }
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = uniform_circle_rate(scenario, r, slot_angle * j as f64 / phases as f64);
        }
    }
    let (bi, bj) = (0..radii)
        .flat_map(|i| (0..phases).map(move |j| (i, j)))
        .filter(|&(i, j)| table[i][j].is_finite())
        .max_by(|a, b| table[a.0][a.1].total_cmp(&table[b.0][b.1]))?;
    let best = table[bi][bj];
    let mut resolution = 0.0f64;
    for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        let i = bi as i64 + di;
        let j = (bj as i64 + dj).rem_euclid(phases as i64);
        if i >= 0 && (i as usize) < radii {
            let v = table[i as usize][j as usize];
            if v.is_finite() {
                resolution = resolution.max(best - v);
            }
        }
    }
    Some(GridOptimum {
        radius: lo + step * bi as f64,
        phase: slot_angle * bj as f64 / phases as f64,
        min_rate: best,
        radius_step: step,
        resolution,
    })
}

/// Box-constrained concave quadratic `max −½xᵀQx + cᵀx` over `lo ≤ x ≤ hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxQp {
    /// Random instance with `Q = MᵀM + εI` and a box around the origin.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..-0.1)).collect();
        let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        Self { q, c, lo, hi }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        -0.5 * xv.dot(&(&self.q * &xv)) + self.c.dot(&xv)
    }

    /// The instance as a subsolver problem started at the box centre.
    pub fn to_subproblem(&self) -> SubProblem {
        let n = self.c.len();
        let mut layout = Layout::default();
        layout.push("x", n);
        let rows: Vec<AffineRow> = (0..n).map(AffineRow::var).collect();
        let qh: Vec<f64> = (0..n * n).map(|i| 0.5 * self.q[(i / n, i % n)]).collect();
        let l: Vec<f64> = self.c.iter().map(|v| -v).collect();
        let objective = SmoothFn::default().with_term(rows, Kernel::quadratic(qh, l, 0.0));
        let start = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut sp = SubProblem::new(layout, objective, start);
        box_constraints(&mut sp, &self.lo, &self.hi);
        sp
    }

    /// Primal active-set method; exact up to round-off.
    pub fn solve_active_set(&self) -> Vec<f64> {
        let n = self.c.len();
        // 0 free, -1 at lower bound, +1 at upper bound.
        let mut state = vec![0i8; n];
        let mut x: Vec<f64> = (0..n).map(|i| 0.0f64.clamp(self.lo[i], self.hi[i])).collect();
        for i in 0..n {
            if x[i] == self.lo[i] {
                state[i] = -1;
            } else if x[i] == self.hi[i] {
                state[i] = 1;
            }
        }
        for _ in 0..50 * n.max(1) {
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
            // Minimiser of the quadratic over the free variables.
            let mut target = x.clone();
            if !free.is_empty() {
                let nf = free.len();
                let qff = DMatrix::from_fn(nf, nf, |a, b| self.q[(free[a], free[b])]);
                let rhs = DVector::from_fn(nf, |a, _| {
                    let i = free[a];
                    self.c[i] - (0..n).filter(|&j| state[j] != 0).map(|j| self.q[(i, j)] * x[j]).sum::<f64>()
                });
                let sol = qff.cholesky().expect("Q is positive definite").solve(&rhs);
                for (a, &i) in free.iter().enumerate() {
                    target[i] = sol[a];
                }
            }
            let dir: Vec<f64> = (0..n).map(|i| target[i] - x[i]).collect();
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if dir.iter().all(|d| d.abs() <= 1e-14 * scale) {
                // Multipliers of the active bounds from the gradient.
                let xv = DVector::from_column_slice(&x);
                let grad = &self.q * &xv - &self.c;
                let mut worst = (0.0, None);
                for i in 0..n {
                    let mult = match state[i] {
                        -1 => grad[i],
                        1 => -grad[i],
                        _ => continue,
                    };
                    if mult < worst.0 {
                        worst = (mult, Some(i));
                    }
                }
                match worst.1 {
                    Some(i) if worst.0 < -1e-12 => state[i] = 0,
                    _ => return x,
                }
                continue;
            }
            let mut step = 1.0;
            let mut block = None;
            for i in 0..n {
                if state[i] != 0 {
                    continue;
                }
                let lim = if dir[i] > 0.0 {
                    (self.hi[i] - x[i]) / dir[i]
                } else if dir[i] < 0.0 {
                    (self.lo[i] - x[i]) / dir[i]
                } else {
                    f64::INFINITY
                };
                if lim < step {
                    step = lim;
                    block = Some(i);
                }
            }
            for i in 0..n {
                x[i] += step * dir[i];
            }
            if let Some(i) = block {
                if dir[i] > 0.0 {
                    x[i] = self.hi[i];
                    state[i] = 1;
                } else {
                    x[i] = self.lo[i];
                    state[i] = -1;
                }
            }
        }
        x
    }
}

fn box_constraints(sp: &mut SubProblem, lo: &[f64], hi: &[f64]) {
    for i in 0..lo.len() {
        sp.constrain(
            format!("upper[{i}]"),
            ConstraintKind::Affine,
            SmoothFn::from_row(AffineRow::new(vec![(i, 1.0)], -hi[i])),
        );
        sp.constrain(
            format!("lower[{i}]"),
            ConstraintKind::Affine,
            SmoothFn::from_row(AffineRow::new(vec![(i, -1.0)], lo[i])),
        );
    }
}

/// Random smooth concave maximisation over a box:
/// `Σ_j s_j log2(1 + a_jᵀx) − ½‖Bx − d‖² − e·Σ x_i³` on `0 < lo ≤ x ≤ hi`,
/// with nonnegative `a_j` and `e` so every term is defined and concave.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBoxInstance {
    pub s: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub e: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LogBoxInstance {
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = 1 + n / 2;
        let rows = 1 + n / 3;
        Self {
            s: (0..terms).map(|_| rng.gen_range(0.5..3.0)).collect(),
            a: (0..terms)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect())
                .collect(),
            b: (0..rows)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            d: (0..rows).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            e: rng.gen_range(0.01..0.1),
            lo: (0..n).map(|_| rng.gen_range(0.01..0.5)).collect(),
            hi: (0..n).map(|_| rng.gen_range(1.0..4.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Objective and gradient, written out term by term.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        for (sj, aj) in self.s.iter().zip(&self.a) {
            let arg = 1.0 + aj.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>();
            v += sj * arg.ln() / LN_2;
            let k = sj / (arg * LN_2);
            for (g, a) in grad.iter_mut().zip(aj) {
                *g += k * a;
            }
        }
        for (bi, di) in self.b.iter().zip(&self.d) {
            let res = bi.iter().zip(x).map(|(b, xi)| b * xi).sum::<f64>() - di;
            v -= 0.5 * res * res;
            for (g, b) in grad.iter_mut().zip(bi) {
                *g -= res * b;
            }
        }
        for (g, xi) in grad.iter_mut().zip(x) {
            v -= self.e * xi.powi(3);
            *g -= 3.0 * self.e * xi * xi;
        }
        v
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, &mut g)
    }

    /// The instance as a subsolver problem started at the box centre.
    pub fn to_subproblem(&self) -> SubProblem {
        let n = self.dim();
        let mut layout = Layout::default();
        layout.push("x", n);
        let mut f = SmoothFn::default();
        for (sj, aj) in self.s.iter().zip(&self.a) {
            let row = AffineRow::new(aj.iter().copied().enumerate().collect(), 0.0);
            f.add_term(vec![row], Kernel::NegLog2 { scale: *sj });
        }
        let rows: Vec<AffineRow> = self
            .b
            .iter()
            .zip(&self.d)
            .map(|(bi, di)| AffineRow::new(bi.iter().copied().enumerate().collect(), -di))
            .collect();
        let m = rows.len();
        let q: Vec<f64> = (0..m * m).map(|i| if i / m == i % m { 0.5 } else { 0.0 }).collect();
        f.add_term(rows, Kernel::quadratic(q, vec![0.0; m], 0.0));
        for i in 0..n {
            f.add_term(vec![AffineRow::var(i)], Kernel::powers(vec![(self.e, 3.0)]));
        }
        let start = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut sp = SubProblem::new(layout, f, start);
        box_constraints(&mut sp, &self.lo, &self.hi);
        sp
    }

    /// Accelerated projected gradient ascent with adaptive restart and a
    /// backtracked step, run until the projected step stalls or
    /// `max_iters` is reached.
    pub fn solve_projected_gradient(&self, max_iters: usize) -> Vec<f64> {
        let n = self.dim();
        let project = |x: &mut [f64]| {
            for i in 0..n {
                x[i] = x[i].clamp(self.lo[i], self.hi[i]);
            }
        };
        let mut x: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut y = x.clone();
        let mut g = vec![0.0; n];
        let mut xn = vec![0.0; n];
        let mut gn = vec![0.0; n];
        let mut t = 1.0f64;
        let mut lip = 1.0f64;
        let mut stall = 0;
        for _ in 0..max_iters {
            let fy = self.value_grad(&y, &mut g);
            loop {
                for i in 0..n {
                    xn[i] = y[i] + g[i] / lip;
                }
                project(&mut xn);
                let fx = self.value_grad(&xn, &mut gn);
                let mut lin = fy;
                let mut sq = 0.0;
                for i in 0..n {
                    let d = xn[i] - y[i];
                    lin += g[i] * d;
                    sq += d * d;
                }
                if fx >= lin - 0.5 * lip * sq - 1e-15 * fy.abs() {
                    break;
                }
                lip *= 2.0;
            }
            let moved = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let restart = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum::<f64>() < 0.0;
            let tn = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let mom = if restart { 0.0 } else { (t - 1.0) / tn };
            for i in 0..n {
                y[i] = xn[i] + mom * (xn[i] - x[i]);
            }
            project(&mut y);
            x.copy_from_slice(&xn);
            t = tn;
            lip *= 0.9;
            stall = if moved <= 1e-15 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                stall + 1
            } else {
                0
            };
            if stall >= 20 {
                break;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec2;

    #[test]
    fn finite_differences_of_quadratic_are_accurate() {
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let (g, bad) = finite_diff_gradient(&f, &[3.0, 4.0], &[1e-5, 1e-5]);
        assert!(!bad);
        assert!((g[0] - 6.0).abs() < 1e-6 && (g[1] - 8.0).abs() < 1e-6);
    }

    #[test]
    fn finite_differences_flag_nonfinite_samples() {
        let f = |x: &[f64]| x[0].ln();
        let (_, bad) = finite_diff_gradient(&f, &[0.0], &[1e-3]);
        assert!(bad);
    }

    #[test]
    fn active_set_satisfies_kkt() {
        for seed in 0..5 {
            let qp = BoxQp::random(12, seed);
            let x = qp.solve_active_set();
            let grad = &qp.q * DVector::from_column_slice(&x) - &qp.c;
            for i in 0..12 {
                assert!(x[i] >= qp.lo[i] - 1e-12 && x[i] <= qp.hi[i] + 1e-12);
                if x[i] > qp.lo[i] && x[i] < qp.hi[i] {
                    assert!(grad[i].abs() < 1e-9, "free gradient {}", grad[i]);
                } else if x[i] == qp.lo[i] {
                    assert!(grad[i] >= -1e-9);
                } else {
                    assert!(grad[i] <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn projected_gradient_beats_box_samples() {
        let inst = LogBoxInstance::random(8, 3);
        let x = inst.solve_projected_gradient(200_000);
        let best = inst.value(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let y: Vec<f64> = (0..8).map(|i| rng.gen_range(inst.lo[i]..inst.hi[i])).collect();
            assert!(inst.value(&y) <= best + 1e-12);
        }
    }

    #[test]
    fn instance_gradient_matches_finite_differences() {
        let inst = LogBoxInstance::random(6, 1);
        let x: Vec<f64> = inst.lo.iter().zip(&inst.hi).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
        let mut g = vec![0.0; 6];
        inst.value_grad(&x, &mut g);
        let (fd, _) = finite_diff_gradient(&|y: &[f64]| inst.value(y), &x, &[1e-6; 6]);
        for i in 0..6 {
            assert!((fd[i] - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()));
        }
        let sp = inst.to_subproblem();
        assert!((sp.objective_value(&x) - inst.value(&x)).abs() < 1e-10);
    }

    #[test]
    fn centred_single_node_grid_optimum_is_smallest_radius() {
        let s = Scenario::reference(vec![Vec2::new(0.0, 0.0)], 100.0, 16).with_prop_limit(None);
        let opt = brute_force_circular(&s, 64, 8).unwrap();
        let lo = 3.0 * 100.0 / TAU;
        assert!((opt.radius - lo).abs() < 1e-9);
    }

    #[test]
    fn tiny_power_limit_leaves_empty_grid() {
        let mut s = Scenario::reference(vec![Vec2::new(0.0, 0.0)], 100.0, 16);
        s.prop_limit = Some(50.0);
        assert!(brute_force_circular(&s, 64, 8).is_none());
    }

    #[test]
    fn metrics_of_hover_free_straight_line() {
        // Constant velocity at 30 m/s along x, one node at peak power.
        let s = Scenario::reference(vec![Vec2::new(0.0, 0.0)], 4.0, 4);
        let q: Vec<Vec2> = (0..=4).map(|i| Vec2::new(30.0 * i as f64, 0.0)).collect();
        let traj = Trajectory {
            q,
            v: vec![Vec2::new(30.0, 0.0); 5],
            a: vec![Vec2::zeros(); 5],
        };
        let m = recompute_metrics(&s, &traj, &[vec![0.01; 4]]);
        let p = 9.26e-4 * 27000.0 + 2250.0 / 30.0;
        assert!((m.avg_prop_power_w - p).abs() < 1e-9);
        assert!((m.total_prop_energy_j - 4.0 * p).abs() < 1e-9);
        let expect = m.min_bits / m.total_prop_energy_j;
        assert!((m.ee_bits_per_joule - expect).abs() <= 1e-12 * expect);
        let r1 = (1.0f64 + 0.01 * 1e8 / (900.0 + 1e4)).log2();
        assert!((m.rates[0][0] - r1).abs() < 1e-12);
        let audit = audit_plan(&s, &traj, &[vec![0.01; 4]]);
        assert!(audit.residuals[0].1 < 1e-12);
        // Not periodic: q[N] is 120 m from q[0].
        assert!((audit.residuals[2].1 - 120.0).abs() < 1e-9);
    }
}
