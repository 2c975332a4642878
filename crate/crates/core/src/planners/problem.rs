//! Convex restriction of the joint trajectory/power problem around an
//! expansion plan.
//!
//! The kinematics are eliminated: the decision vector holds `q[0]`, `v[0]`
//! and the accelerations `a[0..N-1]`, from which every `q[n]` and `v[n]` is an
//! affine image. Periodicity of `q` and `v` becomes four affine equalities
//! and `a[N] = a[0]` holds by construction.

use crate::error::{Error, Result};
use crate::model::{audit, propagate, rate_from_received, LinkPlan, Scenario, Trajectory, Vec2};
use crate::subsolver::{AffineRow, ConstraintKind, Kernel, Layout, SmoothFn, SubProblem};
use crate::surrogates::{Curvature, SurrogateCoeffs};

use super::Plan;

/// Feasibility tolerance an expansion plan must meet.
pub const EXPANSION_TOL: f64 = 1e-5;
/// Relative margin used to pull a warm start inside tight constraints.
const INTERIOR_MARGIN: f64 = 1e-3;
const SLACK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Maximise the minimum average rate.
    MinRate,
    /// Maximise `η − λ·Σ P_prop` with `λ` in bits per joule.
    EnergyEfficiency { lambda: f64 },
}

/// Index map of the reduced decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Indices {
    q0: usize,
    v0: usize,
    a: usize,
    g: usize,
    v1: usize,
    obj: usize,
}

#[derive(Debug, Clone)]
pub struct TrajectoryProblem {
    pub sp: SubProblem,
    pub coeffs: SurrogateCoeffs,
    pub objective: Objective,
    idx: Indices,
    slots: usize,
    gns: usize,
    dt: f64,
}

impl TrajectoryProblem {
    /// Builds the restriction at `expansion`. Without a propulsion limit in
    /// the scenario the average-power constraint is omitted.
    pub fn build(scenario: &Scenario, expansion: &Plan, objective: Objective, curvature: Curvature) -> Result<Self> {
        let n = scenario.slots;
        let k_count = scenario.num_gns();
        check_expansion(scenario, expansion)?;
        let traj = &expansion.traj;
        let dt = scenario.slot_len();

        let mut layout = Layout::default();
        let idx = Indices {
            q0: layout.push("q0", 2),
            v0: layout.push("v0", 2),
            a: layout.push("a", 2 * n),
            g: layout.push("g", k_count * n),
            v1: layout.push("v1", n),
            obj: layout.push(
                match objective {
                    Objective::MinRate => "tau",
                    Objective::EnergyEfficiency { .. } => "eta",
                },
                1,
            ),
        };
        let coeffs = SurrogateCoeffs::new(scenario, &traj.q, &traj.v, &expansion.link.g, curvature);
        let rows = RowBuilder { idx, dt, slots: n };

        let objective_fn = match objective {
            Objective::MinRate => SmoothFn::affine(vec![(idx.obj, -1.0)], 0.0),
            Objective::EnergyEfficiency { lambda } => {
                let scale = lambda / (scenario.bandwidth * n as f64);
                let mut f = SmoothFn::affine(vec![(idx.obj, -1.0)], 0.0);
                add_power_sum(&mut f, scenario, &rows, scale);
                f
            }
        };
        let mut sp = SubProblem::new(layout, objective_fn, Vec::new());

        // Periodicity: v[N] = v[0] and q[N] = q[0], the latter scaled by 1/(Nδ).
        for c in 0..2 {
            let coefs = (0..n).map(|i| (idx.a + 2 * i + c, dt)).collect();
            sp.equate(format!("periodic_v[{c}]"), AffineRow::new(coefs, 0.0));
            let mut coefs = vec![(idx.v0 + c, 1.0)];
            coefs.extend((0..n).map(|i| (idx.a + 2 * i + c, dt * (n as f64 - i as f64 - 0.5) / n as f64)));
            sp.equate(format!("periodic_q[{c}]"), AffineRow::new(coefs, 0.0));
        }

        let unit2 = vec![1.0, 0.0, 0.0, 1.0];
        for i in 0..n {
            let r = rows.a(i);
            sp.constrain(
                format!("acceleration[{i}]"),
                ConstraintKind::ConeRepresentable,
                SmoothFn::affine(vec![], -1.0).with_term(
                    r.to_vec(),
                    Kernel::quadratic(scaled(&unit2, scenario.a_max.powi(-2)), vec![0.0; 2], 0.0),
                ),
            );
        }
        let vmax2 = scenario.v_max.powi(2);
        for s in 1..=n {
            let vr = rows.v(s);
            sp.constrain(
                format!("speed_max[{s}]"),
                ConstraintKind::ConeRepresentable,
                SmoothFn::affine(vec![], -1.0).with_term(
                    vr.to_vec(),
                    Kernel::quadratic(scaled(&unit2, 1.0 / vmax2), vec![0.0; 2], 0.0),
                ),
            );
            let v1 = idx.v1 + s - 1;
            sp.constrain(
                format!("speed_slack_min[{s}]"),
                ConstraintKind::Affine,
                SmoothFn::affine(vec![(v1, -1.0 / scenario.v_min)], 1.0),
            );
            // V1² ≤ −‖v‖² + 2v_lᵀ(2v − v_l)
            let vl = coeffs.v_prev[s - 1];
            let mut qrows = vec![AffineRow::var(v1)];
            qrows.extend(vr);
            sp.constrain(
                format!("speed_slack[{s}]"),
                ConstraintKind::ConeRepresentable,
                SmoothFn::default().with_term(
                    qrows,
                    Kernel::quadratic(
                        scaled(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 1.0 / vmax2),
                        vec![0.0, -4.0 * vl.x / vmax2, -4.0 * vl.y / vmax2],
                        2.0 * vl.norm_squared() / vmax2,
                    ),
                ),
            );
        }

        let g_ref = g_reference(scenario);
        for k in 0..k_count {
            for s in 1..=n {
                let gi = idx.g + k * n + s - 1;
                sp.constrain(
                    format!("received_min[{k},{s}]"),
                    ConstraintKind::Affine,
                    SmoothFn::affine(vec![(gi, -1.0 / g_ref)], 0.0),
                );
                // G ≤ scale·(−curv‖q − w‖² + B (q − w)ᵀ(q_l − w) + C)
                let b = &coeffs.gmax[k][s - 1];
                let m = &b.minorant;
                let w = b.gn;
                let qr = rows.q(s, &w);
                let sc = b.scale / g_ref;
                let curv = sc * m.curvature();
                let mut qrows = vec![AffineRow::var(gi)];
                qrows.extend(qr);
                sp.constrain(
                    format!("received_max[{k},{s}]"),
                    ConstraintKind::ConeRepresentable,
                    SmoothFn::default().with_term(
                        qrows,
                        Kernel::quadratic(
                            vec![0.0, 0.0, 0.0, 0.0, curv, 0.0, 0.0, 0.0, curv],
                            vec![
                                1.0 / g_ref,
                                -sc * m.slope * m.anchor[0],
                                -sc * m.slope * m.anchor[1],
                            ],
                            -sc * m.offset,
                        ),
                    ),
                );
            }
        }

        if let (Objective::MinRate, Some(limit)) = (objective, scenario.prop_limit) {
            let mut f = SmoothFn::affine(vec![], -1.0);
            add_power_sum(&mut f, scenario, &rows, 1.0 / (n as f64 * limit));
            sp.constrain("propulsion_limit", ConstraintKind::ConvexSmooth, f);
        }

        // Average rate lower bounds, one per node.
        let inv_n = 1.0 / n as f64;
        for k in 0..k_count {
            let mut f = SmoothFn::affine(vec![(idx.obj, 1.0)], 0.0);
            for s in 1..=n {
                let total = AffineRow::new((0..k_count).map(|j| (idx.g + j * n + s - 1, 1.0)).collect(), 0.0);
                f.add_term(vec![total], Kernel::NegLog2 { scale: inv_n });
                let maj = coeffs.interference[k][s - 1];
                for j in (0..k_count).filter(|&j| j != k) {
                    f.add_linear(idx.g + j * n + s - 1, inv_n * maj.slope);
                }
                f.constant += inv_n * (maj.base_value - maj.slope * maj.base_sum);
            }
            sp.constrain(format!("rate[{k}]"), ConstraintKind::ConvexSmooth, f);
        }

        let mut problem = Self {
            sp,
            coeffs,
            objective,
            idx,
            slots: n,
            gns: k_count,
            dt,
        };
        problem.sp.start = problem.warm_start(scenario, expansion);
        Ok(problem)
    }

    /// Decision vector of a plan with the epigraph variable set to `obj`.
    pub fn point(&self, plan: &Plan, obj: f64) -> Vec<f64> {
        let n = self.slots;
        let mut x = vec![0.0; self.sp.dim()];
        let t = &plan.traj;
        x[self.idx.q0] = t.q[0].x;
        x[self.idx.q0 + 1] = t.q[0].y;
        x[self.idx.v0] = t.v[0].x;
        x[self.idx.v0 + 1] = t.v[0].y;
        for i in 0..n {
            x[self.idx.a + 2 * i] = t.a[i].x;
            x[self.idx.a + 2 * i + 1] = t.a[i].y;
        }
        for k in 0..self.gns {
            for i in 0..n {
                x[self.idx.g + k * n + i] = plan.link.g[k][i];
            }
        }
        for i in 0..n {
            x[self.idx.v1 + i] = plan.link.v1[i];
        }
        x[self.idx.obj] = obj;
        x
    }

    /// Surrogate average rate of every node at `x` (the epigraph variable is
    /// ignored).
    pub fn surrogate_rates(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        y[self.idx.obj] = 0.0;
        self.sp
            .constraints
            .iter()
            .filter(|c| c.label.starts_with("rate["))
            .map(|c| -c.f.value(&y))
            .collect()
    }

    /// Plan encoded by a decision vector; transmit powers are recovered from
    /// the received powers.
    pub fn extract(&self, scenario: &Scenario, x: &[f64]) -> Plan {
        let n = self.slots;
        let q0 = Vec2::new(x[self.idx.q0], x[self.idx.q0 + 1]);
        let v0 = Vec2::new(x[self.idx.v0], x[self.idx.v0 + 1]);
        let a: Vec<Vec2> = (0..n)
            .map(|i| Vec2::new(x[self.idx.a + 2 * i], x[self.idx.a + 2 * i + 1]))
            .collect();
        let traj = propagate(scenario, q0, v0, &a);
        let g: Vec<Vec<f64>> = (0..self.gns)
            .map(|k| x[self.idx.g + k * n..self.idx.g + (k + 1) * n].to_vec())
            .collect();
        let v1 = x[self.idx.v1..self.idx.v1 + n].to_vec();
        Plan::from_received(scenario, traj, g, v1)
    }

    /// Layout of the equivalent problem with explicit `q`, `v`, `a` at every
    /// index `0..=N`.
    pub fn full_layout(&self) -> Layout {
        let n = self.slots;
        let mut l = Layout::default();
        l.push("q", 2 * (n + 1));
        l.push("v", 2 * (n + 1));
        l.push("a", 2 * (n + 1));
        l.push("g", self.gns * n);
        l.push("v1", n);
        l.push(self.sp.layout.blocks.last().map_or("tau", |b| b.name), 1);
        l
    }

    pub fn slot_len(&self) -> f64 {
        self.dt
    }

    fn warm_start(&self, scenario: &Scenario, expansion: &Plan) -> Vec<f64> {
        let n = self.slots;
        let mut plan = expansion.clone();
        let eps = INTERIOR_MARGIN;
        for (k, row) in plan.link.g.iter_mut().enumerate() {
            for (i, g) in row.iter_mut().enumerate() {
                let cap = crate::surrogates::gmax(scenario, k, &expansion.traj.q[i + 1]);
                *g = g.clamp(eps * cap, (1.0 - eps) * cap);
            }
        }
        for i in 0..n {
            let speed = expansion.traj.v[i + 1].norm();
            let v1 = &mut plan.link.v1[i];
            // Shrinking the slack raises the power bound, so only a
            // violation is repaired here.
            *v1 = v1.min(speed * (1.0 - SLACK_MARGIN)).max(scenario.v_min * (1.0 + SLACK_MARGIN));
        }
        let mut x = self.point(&plan, 0.0);
        let rates = self.surrogate_rates(&x);
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let obj = match self.objective {
            Objective::MinRate => lo,
            Objective::EnergyEfficiency { .. } => lo,
        };
        x[self.idx.obj] = obj - eps * obj.abs().max(1.0);
        x
    }
}

/// `P_peak γ0 / H²`, the received power directly overhead; used to scale
/// the received-power constraints.
pub fn g_reference(scenario: &Scenario) -> f64 {
    scenario.peak_power * scenario.ref_snr / scenario.altitude.powi(2)
}

fn scaled(m: &[f64], s: f64) -> Vec<f64> {
    m.iter().map(|v| v * s).collect()
}

/// Adds `scale·Σ_n [c1‖v[n]‖³ + c2/V1[n] + c2‖a[n]‖²/(g²V1[n])]`.
fn add_power_sum(f: &mut SmoothFn, scenario: &Scenario, rows: &RowBuilder, scale: f64) {
    let n = rows.slots;
    for s in 1..=n {
        let v1 = AffineRow::var(rows.idx.v1 + s - 1);
        f.add_term(rows.v(s).to_vec(), Kernel::NormCube { scale: scale * scenario.c1 });
        f.add_term(vec![v1.clone()], Kernel::powers(vec![(scale * scenario.c2, -1.0)]));
        let [ax, ay] = rows.a(s % n);
        f.add_term(
            vec![ax, ay, v1],
            Kernel::QuadOverLin {
                scale: scale * scenario.c2 / scenario.g.powi(2),
            },
        );
    }
}

struct RowBuilder {
    idx: Indices,
    dt: f64,
    slots: usize,
}

impl RowBuilder {
    /// `a[i]` for `i < N`.
    fn a(&self, i: usize) -> [AffineRow; 2] {
        [0, 1].map(|c| AffineRow::var(self.idx.a + 2 * i + c))
    }

    /// `v[n] = v0 + δ Σ_{i<n} a[i]`.
    fn v(&self, n: usize) -> [AffineRow; 2] {
        [0, 1].map(|c| {
            let mut coefs = vec![(self.idx.v0 + c, 1.0)];
            coefs.extend((0..n).map(|i| (self.idx.a + 2 * i + c, self.dt)));
            AffineRow::new(coefs, 0.0)
        })
    }

    /// `q[n] − shift` with `q[n] = q0 + nδ v0 + δ² Σ_{i<n} (n − i − ½) a[i]`.
    fn q(&self, n: usize, shift: &Vec2) -> [AffineRow; 2] {
        let dt2 = self.dt * self.dt;
        [0, 1].map(|c| {
            let mut coefs = vec![(self.idx.q0 + c, 1.0), (self.idx.v0 + c, n as f64 * self.dt)];
            coefs.extend((0..n).map(|i| (self.idx.a + 2 * i + c, dt2 * (n as f64 - i as f64 - 0.5))));
            AffineRow::new(coefs, -shift[c])
        })
    }
}

fn check_expansion(scenario: &Scenario, plan: &Plan) -> Result<()> {
    let n = scenario.slots;
    let k = scenario.num_gns();
    let t = &plan.traj;
    if t.q.len() != n + 1 || t.v.len() != n + 1 || t.a.len() != n + 1 {
        return Err(Error::InfeasibleInit(format!(
            "trajectory must have {} samples",
            n + 1
        )));
    }
    if plan.link.g.len() != k || plan.link.g.iter().any(|r| r.len() != n) || plan.link.v1.len() != n {
        return Err(Error::InfeasibleInit("link plan shape does not match the scenario".into()));
    }
    let rep = audit(scenario, t, &plan.link);
    let (name, worst) = rep.worst(scenario);
    if worst > EXPANSION_TOL {
        return Err(Error::InfeasibleInit(format!("{name} violated by {worst:.3e}")));
    }
    Ok(())
}

/// Minimum over nodes of the average rate implied by received powers.
pub fn min_rate_of(g: &[Vec<f64>]) -> f64 {
    let n = g.first().map_or(0, Vec::len);
    let k_count = g.len();
    let mut sums = vec![0.0; k_count];
    let mut col = vec![0.0; k_count];
    for i in 0..n {
        for k in 0..k_count {
            col[k] = g[k][i];
        }
        for (k, s) in sums.iter_mut().enumerate() {
            *s += rate_from_received(&col, k);
        }
    }
    sums.iter().map(|s| s / n as f64).fold(f64::INFINITY, f64::min)
}

/// Propulsion power sum with the speed slack in place of the speed, the
/// quantity the restriction bounds.
pub fn slack_power_sum(scenario: &Scenario, traj: &Trajectory, link: &LinkPlan) -> f64 {
    let n = traj.slots();
    (1..=n)
        .map(|s| {
            let v1 = link.v1[s - 1];
            scenario.c1 * traj.v[s].norm().powi(3)
                + scenario.c2 / v1
                + scenario.c2 * traj.a[s].norm_squared() / (scenario.g.powi(2) * v1)
        })
        .sum()
}
