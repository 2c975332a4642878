//! Convex restrictions of the circular-trajectory problem: one in the radius
//! with the angular profile fixed, one in the angular profile with the
//! radius fixed.

use std::f64::consts::{PI, TAU};

use crate::error::Result;
use crate::model::Scenario;
use crate::planners::{g_reference, Objective};
use crate::subsolver::{AffineRow, ConstraintKind, Kernel, Layout, SmoothFn, SubProblem};
use crate::surrogates::{smax, AngleBound, Curvature, InterferenceMajorant, RadiusBound};

use super::CircularState;

const INTERIOR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Radius and received powers; angles fixed.
    Radius,
    /// Angles, angular rates and received powers; radius fixed.
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Indices {
    /// `r` for the radius step, `θ[0]` for the angle step.
    head: usize,
    /// `ω[0]` (angle step only).
    omega0: usize,
    /// `α[0..N-1]` (angle step only).
    alpha: usize,
    s: usize,
    obj: usize,
}

#[derive(Debug, Clone)]
pub struct CircularProblem {
    pub sp: SubProblem,
    pub step: Step,
    pub objective: Objective,
    idx: Indices,
    slots: usize,
    gns: usize,
    dt: f64,
}

impl CircularProblem {
    pub fn build(
        scenario: &Scenario,
        state: &CircularState,
        step: Step,
        objective: Objective,
        curvature: Curvature,
    ) -> Result<Self> {
        let n = scenario.slots;
        let k_count = scenario.num_gns();
        let dt = scenario.slot_len();
        let mut layout = Layout::default();
        let idx = match step {
            Step::Radius => {
                let head = layout.push("r", 1);
                Indices {
                    head,
                    omega0: usize::MAX,
                    alpha: usize::MAX,
                    s: layout.push("s", k_count * n),
                    obj: layout.push(obj_name(objective), 1),
                }
            }
            Step::Angle => Indices {
                head: layout.push("theta0", 1),
                omega0: layout.push("omega0", 1),
                alpha: layout.push("alpha", n),
                s: layout.push("s", k_count * n),
                obj: layout.push(obj_name(objective), 1),
            },
        };
        let mut sp = SubProblem::new(layout, SmoothFn::affine(vec![(idx.obj, -1.0)], 0.0), Vec::new());
        let mut problem = Self {
            sp: sp.clone(),
            step,
            objective,
            idx,
            slots: n,
            gns: k_count,
            dt,
        };
        let g_ref = g_reference(scenario);
        let r = state.radius;

        match step {
            Step::Radius => {
                let (lo, hi) = radius_limits(scenario, state);
                let ri = idx.head;
                sp.constrain("radius_min", ConstraintKind::Affine, SmoothFn::affine(vec![(ri, -1.0 / lo)], 1.0));
                sp.constrain("radius_max", ConstraintKind::Affine, SmoothFn::affine(vec![(ri, 1.0 / hi)], -1.0));
                let power = |scale: f64| {
                    let (c3, cm1, c1) = radius_power_coefficients(scenario, state);
                    SmoothFn::default().with_term(
                        vec![AffineRow::var(ri)],
                        Kernel::powers(vec![(scale * c3, 3.0), (scale * cm1, -1.0), (scale * c1, 1.0)]),
                    )
                };
                match objective {
                    Objective::MinRate => {
                        if let Some(limit) = scenario.prop_limit {
                            let mut f = power(1.0 / (n as f64 * limit));
                            f.constant -= 1.0;
                            sp.constrain("propulsion_limit", ConstraintKind::ConvexSmooth, f);
                        }
                    }
                    Objective::EnergyEfficiency { lambda } => {
                        let mut f = power(lambda / (scenario.bandwidth * n as f64));
                        f.add_linear(idx.obj, -1.0);
                        sp.objective = f;
                    }
                }
                for (k, gn) in state.gns.iter().enumerate() {
                    for s in 1..=n {
                        let si = idx.s + k * n + s - 1;
                        let b = RadiusBound::with_curvature(scenario, *gn, state.theta[s], r, curvature);
                        let m = &b.minorant;
                        let sc = b.scale / g_ref;
                        add_received_bounds(
                            &mut sp,
                            k,
                            s,
                            si,
                            g_ref,
                            AffineRow::new(vec![(ri, 1.0)], -b.b),
                            sc * m.curvature(),
                            sc * m.slope * m.anchor[0],
                            sc * m.offset,
                        );
                    }
                }
            }
            Step::Angle => {
                // θ[N] = θ[0] + 2π scaled by 1/(Nδ), and ω[N] = ω[0].
                let mut coefs = vec![(idx.omega0, 1.0)];
                coefs.extend((0..n).map(|i| (idx.alpha + i, dt * (n as f64 - i as f64 - 0.5) / n as f64)));
                sp.equate("periodic_theta", AffineRow::new(coefs, -TAU / scenario.period));
                sp.equate(
                    "periodic_omega",
                    AffineRow::new((0..n).map(|i| (idx.alpha + i, dt)).collect(), 0.0),
                );
                // A full turn is the same trajectory, so this box loses nothing. It keeps
                // the phase bounded when the rates do not depend on it.
                let theta0 = state.theta[0];
                sp.constrain(
                    "phase_lo",
                    ConstraintKind::Affine,
                    SmoothFn::affine(vec![(idx.head, -1.0 / PI)], theta0 / PI - 1.0),
                );
                sp.constrain(
                    "phase_hi",
                    ConstraintKind::Affine,
                    SmoothFn::affine(vec![(idx.head, 1.0 / PI)], -theta0 / PI - 1.0),
                );
                let w_min = scenario.v_min / r;
                let w_max = scenario.v_max / r;
                let a2 = scenario.a_max.powi(2);
                for i in 0..n {
                    let w = problem.omega_row(i);
                    sp.constrain(
                        format!("acceleration[{i}]"),
                        ConstraintKind::ConvexSmooth,
                        SmoothFn::affine(vec![], -1.0)
                            .with_term(
                                vec![AffineRow::var(idx.alpha + i)],
                                Kernel::quadratic(vec![r * r / a2], vec![0.0], 0.0),
                            )
                            .with_term(vec![w], Kernel::powers(vec![(r * r / a2, 4.0)])),
                    );
                }
                for s in 1..=n {
                    let w = problem.omega_row(s);
                    let mut lo = SmoothFn::from_row(w.clone().scaled(-1.0 / w_min));
                    lo.constant += 1.0;
                    sp.constrain(format!("omega_min[{s}]"), ConstraintKind::Affine, lo);
                    let mut hi = SmoothFn::from_row(w.scaled(1.0 / w_max));
                    hi.constant -= 1.0;
                    sp.constrain(format!("omega_max[{s}]"), ConstraintKind::Affine, hi);
                }
                let add_power = |f: &mut SmoothFn, scale: f64| {
                    let c3 = scenario.c1 * r.powi(3) + scenario.c2 * r / scenario.g.powi(2);
                    for s in 1..=n {
                        let w = problem.omega_row(s);
                        f.add_term(
                            vec![w.clone()],
                            Kernel::powers(vec![(scale * c3, 3.0), (scale * scenario.c2 / r, -1.0)]),
                        );
                        f.add_term(
                            vec![AffineRow::var(idx.alpha + s % n), w],
                            Kernel::QuadOverLin {
                                scale: scale * scenario.c2 * r / scenario.g.powi(2),
                            },
                        );
                    }
                };
                match objective {
                    Objective::MinRate => {
                        if let Some(limit) = scenario.prop_limit {
                            let mut f = SmoothFn::affine(vec![], -1.0);
                            add_power(&mut f, 1.0 / (n as f64 * limit));
                            sp.constrain("propulsion_limit", ConstraintKind::ConvexSmooth, f);
                        }
                    }
                    Objective::EnergyEfficiency { lambda } => {
                        let mut f = SmoothFn::affine(vec![(idx.obj, -1.0)], 0.0);
                        add_power(&mut f, lambda / (scenario.bandwidth * n as f64));
                        sp.objective = f;
                    }
                }
                for (k, gn) in state.gns.iter().enumerate() {
                    for s in 1..=n {
                        let si = idx.s + k * n + s - 1;
                        let b = AngleBound::with_curvature(scenario, *gn, r, state.theta[s], curvature);
                        let m = &b.minorant;
                        let sc = b.scale / g_ref;
                        let mut u = problem.theta_row(s);
                        u.offset -= b.b;
                        add_received_bounds(
                            &mut sp,
                            k,
                            s,
                            si,
                            g_ref,
                            u,
                            sc * m.curvature(),
                            sc * m.slope * m.anchor[0],
                            sc * m.offset,
                        );
                    }
                }
            }
        }

        // Average rate lower bounds.
        let inv_n = 1.0 / n as f64;
        for k in 0..k_count {
            let mut f = SmoothFn::affine(vec![(idx.obj, 1.0)], 0.0);
            for s in 1..=n {
                let total = AffineRow::new((0..k_count).map(|j| (idx.s + j * n + s - 1, 1.0)).collect(), 0.0);
                f.add_term(vec![total], Kernel::NegLog2 { scale: inv_n });
                let others: f64 = (0..k_count).filter(|&j| j != k).map(|j| state.s[j][s - 1]).sum();
                let maj = InterferenceMajorant::new(others);
                for j in (0..k_count).filter(|&j| j != k) {
                    f.add_linear(idx.s + j * n + s - 1, inv_n * maj.slope);
                }
                f.constant += inv_n * (maj.base_value - maj.slope * maj.base_sum);
            }
            sp.constrain(format!("rate[{k}]"), ConstraintKind::ConvexSmooth, f);
        }

        problem.sp = sp;
        problem.sp.start = problem.warm_start(scenario, state);
        Ok(problem)
    }

    /// `ω[n] = ω0 + δ Σ_{i<n} α[i]`.
    fn omega_row(&self, n: usize) -> AffineRow {
        let mut coefs = vec![(self.idx.omega0, 1.0)];
        coefs.extend((0..n).map(|i| (self.idx.alpha + i, self.dt)));
        AffineRow::new(coefs, 0.0)
    }

    /// `θ[n] = θ0 + nδ ω0 + δ² Σ_{i<n} (n − i − ½) α[i]`.
    fn theta_row(&self, n: usize) -> AffineRow {
        let dt2 = self.dt * self.dt;
        let mut coefs = vec![(self.idx.head, 1.0), (self.idx.omega0, n as f64 * self.dt)];
        coefs.extend((0..n).map(|i| (self.idx.alpha + i, dt2 * (n as f64 - i as f64 - 0.5))));
        AffineRow::new(coefs, 0.0)
    }

    pub fn point(&self, state: &CircularState, obj: f64) -> Vec<f64> {
        let n = self.slots;
        let mut x = vec![0.0; self.sp.dim()];
        match self.step {
            Step::Radius => x[self.idx.head] = state.radius,
            Step::Angle => {
                x[self.idx.head] = state.theta[0];
                x[self.idx.omega0] = state.omega[0];
                x[self.idx.alpha..self.idx.alpha + n].copy_from_slice(&state.alpha[..n]);
            }
        }
        for k in 0..self.gns {
            x[self.idx.s + k * n..self.idx.s + (k + 1) * n].copy_from_slice(&state.s[k]);
        }
        x[self.idx.obj] = obj;
        x
    }

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

    pub fn extract(&self, state: &CircularState, x: &[f64]) -> CircularState {
        let n = self.slots;
        let mut next = state.clone();
        match self.step {
            Step::Radius => next.radius = x[self.idx.head],
            Step::Angle => {
                let alpha = &x[self.idx.alpha..self.idx.alpha + n];
                let mut theta = vec![x[self.idx.head]];
                let mut omega = vec![x[self.idx.omega0]];
                for i in 1..=n {
                    omega.push(omega[i - 1] + alpha[i - 1] * self.dt);
                    theta.push(theta[i - 1] + omega[i - 1] * self.dt + 0.5 * alpha[i - 1] * self.dt * self.dt);
                }
                let mut a = alpha.to_vec();
                a.push(alpha[0]);
                next.theta = theta;
                next.omega = omega;
                next.alpha = a;
            }
        }
        next.s = (0..self.gns)
            .map(|k| x[self.idx.s + k * n..self.idx.s + (k + 1) * n].to_vec())
            .collect();
        next
    }

    fn warm_start(&self, scenario: &Scenario, state: &CircularState) -> Vec<f64> {
        let mut st = state.clone();
        for (k, row) in st.s.iter_mut().enumerate() {
            for (i, s) in row.iter_mut().enumerate() {
                let cap = smax(scenario, state.gns[k], state.radius, state.theta[i + 1]);
                *s = s.clamp(INTERIOR_MARGIN * cap, (1.0 - INTERIOR_MARGIN) * cap);
            }
        }
        let mut x = self.point(&st, 0.0);
        let lo = self
            .surrogate_rates(&x)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        x[self.idx.obj] = lo - INTERIOR_MARGIN * lo.abs().max(1.0);
        x
    }
}

fn obj_name(objective: Objective) -> &'static str {
    match objective {
        Objective::MinRate => "tau",
        Objective::EnergyEfficiency { .. } => "eta",
    }
}

/// `0 ≤ S` and `S ≤ scale·(−curv·u² + slope·u + offset)` for an affine `u`,
/// everything divided by `g_ref`.
#[allow(clippy::too_many_arguments)]
fn add_received_bounds(
    sp: &mut SubProblem,
    k: usize,
    s: usize,
    si: usize,
    g_ref: f64,
    u: AffineRow,
    curv: f64,
    slope: f64,
    offset: f64,
) {
    sp.constrain(
        format!("received_min[{k},{s}]"),
        ConstraintKind::Affine,
        SmoothFn::affine(vec![(si, -1.0 / g_ref)], 0.0),
    );
    sp.constrain(
        format!("received_max[{k},{s}]"),
        ConstraintKind::ConeRepresentable,
        SmoothFn::affine(vec![(si, 1.0 / g_ref)], -offset)
            .with_term(vec![u], Kernel::quadratic(vec![curv], vec![-slope], 0.0)),
    );
}

/// Radius interval admitted by the speed and acceleration limits for the
/// state's angular profile, intersected with the nominal radius range.
pub fn radius_limits(scenario: &Scenario, state: &CircularState) -> (f64, f64) {
    let n = scenario.slots;
    let mut lo = scenario.v_min * scenario.period / TAU;
    let mut hi = scenario.v_max * scenario.period / TAU;
    for i in 0..=n {
        let w = state.omega[i];
        let a = state.alpha[i];
        lo = lo.max(scenario.v_min / w);
        hi = hi.min(scenario.v_max / w).min(scenario.a_max / (w.powi(4) + a * a).sqrt());
    }
    (lo, hi)
}

/// Coefficients of `Σ_n P_prop[n]` as a function of the radius:
/// `c3·r³ + cm1/r + c1·r`.
pub fn radius_power_coefficients(scenario: &Scenario, state: &CircularState) -> (f64, f64, f64) {
    let g2 = scenario.g.powi(2);
    let mut c3 = 0.0;
    let mut cm1 = 0.0;
    let mut c1 = 0.0;
    for s in 1..=scenario.slots {
        let w = state.omega[s];
        let a = state.alpha[s];
        c3 += scenario.c1 * w.powi(3);
        cm1 += scenario.c2 / w;
        c1 += scenario.c2 * (w.powi(3) + a * a / w) / g2;
    }
    (c3, cm1, c1)
}
