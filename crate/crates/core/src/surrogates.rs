//! Convex majorants and concave minorants for the successive convex
//! approximation, together with a numerical checker for the three surrogate
//! conditions: equal value and equal gradient at the expansion point, and a
//! global one-sided bound.
//!
//! Every minorant of a received-power cap is built from one kernel,
//! [`ReciprocalMinorant`], a concave quadratic lying below
//! `u ↦ 1 / (ρ‖u‖² + z)` and touching it at an anchor `u_l`.

use rand::Rng;

use crate::model::{log2_slope, Scenario, Vec2};
use crate::oracle::finite_diff_gradient;

/// `1 / (ρ‖u‖² + z)`.
pub fn reciprocal(rho: f64, z: f64, u: &[f64]) -> f64 {
    1.0 / (rho * norm_sq(u) + z)
}

/// Gradient of [`reciprocal`]: `−2ρu / (ρ‖u‖² + z)²`.
pub fn reciprocal_gradient(rho: f64, z: f64, u: &[f64]) -> Vec<f64> {
    let den = rho * norm_sq(u) + z;
    u.iter().map(|ui| -2.0 * rho * ui / (den * den)).collect()
}

/// Closed-form Hessian of `reciprocal − minorant` for a 2-vector `u`. It
/// does not depend on the anchor and is positive semi-definite everywhere,
/// which is what makes the minorant a global lower bound.
pub fn reciprocal_gap_hessian(rho: f64, z: f64, u: [f64; 2]) -> [[f64; 2]; 2] {
    let s = u[0] * u[0] + u[1] * u[1];
    let den = rho * s + z;
    let d = 2.0 * rho / (z * z * den.powi(3));
    let e = rho.powi(3) * s.powi(3) + 3.0 * rho * rho * z * s * s + 2.0 * rho * z * z * s;
    let c = 4.0 * rho * z * z;
    [
        [d * (e + c * u[0] * u[0]), d * c * u[0] * u[1]],
        [d * c * u[0] * u[1], d * (e + c * u[1] * u[1])],
    ]
}

/// Curvature choice for [`ReciprocalMinorant`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Curvature {
    /// `ρ/z²`: the largest curvature of the kernel, valid for any anchor.
    Uniform,
    /// `ρ/(ρ‖u_l‖² + z)²`: tangent of the convex map `x ↦ 1/(ρx + z)` at
    /// `x = ‖u_l‖²`, composed with `x = ‖u‖²`. Dominates the uniform
    /// choice pointwise.
    #[default]
    Tangent,
}

/// Concave quadratic `−c‖u‖² + B uᵀu_l + C` touching `1/(ρ‖u‖² + z)`
/// at `u_l` with equal value and gradient and lying below it everywhere.
/// Scalars use `anchor[1] = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocalMinorant {
    pub rho: f64,
    pub z: f64,
    pub anchor: [f64; 2],
    /// Coefficient `c` of `−‖u‖²`.
    pub curv: f64,
    /// Coefficient `B` of the cross term `uᵀu_l`.
    pub slope: f64,
    /// Constant `C`.
    pub offset: f64,
}

impl ReciprocalMinorant {
    /// Uniform-curvature minorant.
    pub fn new(rho: f64, z: f64, anchor: [f64; 2]) -> Self {
        Self::with_curvature(rho, z, anchor, Curvature::Uniform)
    }

    pub fn with_curvature(rho: f64, z: f64, anchor: [f64; 2], kind: Curvature) -> Self {
        let s = rho * (anchor[0] * anchor[0] + anchor[1] * anchor[1]);
        let den = s + z;
        match kind {
            Curvature::Uniform => Self {
                rho,
                z,
                anchor,
                curv: rho / (z * z),
                slope: 2.0 * rho * (1.0 / (z * z) - 1.0 / (den * den)),
                offset: 1.0 / den + 2.0 * s / (den * den) - s / (z * z),
            },
            Curvature::Tangent => Self {
                rho,
                z,
                anchor,
                curv: rho / (den * den),
                slope: 0.0,
                offset: 1.0 / den + s / (den * den),
            },
        }
    }

    /// Coefficient of `−‖u‖²`.
    pub fn curvature(&self) -> f64 {
        self.curv
    }

    pub fn value(&self, u: [f64; 2]) -> f64 {
        -self.curvature() * (u[0] * u[0] + u[1] * u[1])
            + self.slope * (u[0] * self.anchor[0] + u[1] * self.anchor[1])
            + self.offset
    }

    pub fn gradient(&self, u: [f64; 2]) -> [f64; 2] {
        let c = self.curvature();
        [
            -2.0 * c * u[0] + self.slope * self.anchor[0],
            -2.0 * c * u[1] + self.slope * self.anchor[1],
        ]
    }
}

/// First-order majorant of `s ↦ log2(1 + s)` around the interference sum
/// `s_l`; `s` is the aggregate received power of the interferers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceMajorant {
    pub base_sum: f64,
    pub base_value: f64,
    /// `log2(e) / (1 + s_l)`.
    pub slope: f64,
}

impl InterferenceMajorant {
    pub fn new(base_sum: f64) -> Self {
        Self {
            base_sum,
            base_value: (1.0 + base_sum).log2(),
            slope: log2_slope(base_sum),
        }
    }

    pub fn value(&self, sum: f64) -> f64 {
        self.base_value + self.slope * (sum - self.base_sum)
    }
}

/// Affine upper bound on `log2(1 + Σ_{j≠k} G_j)` built at `g_prev`, evaluated
/// at `g_new`. Both slices list the interferers only.
pub fn rate_interference_ub(g_prev: &[f64], g_new: &[f64]) -> f64 {
    InterferenceMajorant::new(g_prev.iter().sum()).value(g_new.iter().sum())
}

/// Concave minorant of the received-power cap `P_peak h_k(q)` around `q_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmaxBound {
    pub gn: Vec2,
    /// `P_peak γ0`.
    pub scale: f64,
    pub minorant: ReciprocalMinorant,
}

impl GmaxBound {
    pub fn new(scenario: &Scenario, k: usize, q_prev: &Vec2) -> Self {
        Self::with_curvature(scenario, k, q_prev, Curvature::Uniform)
    }

    pub fn with_curvature(scenario: &Scenario, k: usize, q_prev: &Vec2, kind: Curvature) -> Self {
        let gn = scenario.gn_positions[k];
        let d = q_prev - gn;
        Self {
            gn,
            scale: scenario.peak_power * scenario.ref_snr,
            minorant: ReciprocalMinorant::with_curvature(1.0, scenario.altitude.powi(2), [d.x, d.y], kind),
        }
    }

    pub fn value(&self, q: &Vec2) -> f64 {
        let d = q - self.gn;
        self.scale * self.minorant.value([d.x, d.y])
    }
}

pub fn gmax(scenario: &Scenario, k: usize, q: &Vec2) -> f64 {
    let d = q - scenario.gn_positions[k];
    scenario.peak_power * scenario.ref_snr * reciprocal(1.0, scenario.altitude.powi(2), &[d.x, d.y])
}

/// Concave lower bound on `G_k,max` at `q_new`, expanded at `q_prev`.
pub fn gmax_lb(scenario: &Scenario, k: usize, q_prev: &Vec2, q_new: &Vec2) -> f64 {
    GmaxBound::new(scenario, k, q_prev).value(q_new)
}

/// Concave lower bound `−‖v‖² + 2v_lᵀ(2v − v_l)` on `‖v‖²`; the gap is
/// exactly `2‖v − v_l‖²`.
pub fn speed_sq_lb(v_prev: &Vec2, v_new: &Vec2) -> f64 {
    -v_new.norm_squared() + 2.0 * v_prev.dot(&(2.0 * v_new - v_prev))
}

/// Concave quadratic lower bound on `cos φ` touching it at `φ_l`.
pub fn cos_lb(phi_prev: f64, phi_new: f64) -> f64 {
    let s = phi_prev.sin();
    -(phi_new - phi_prev + s).powi(2) / 2.0 + phi_prev.cos() + s * s / 2.0
}

/// Ground-node position relative to the circle centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGn {
    pub zeta: f64,
    pub phi: f64,
}

impl PolarGn {
    pub fn new(centre: &Vec2, gn: &Vec2) -> Self {
        let d = gn - centre;
        let zeta = d.norm();
        let phi = if zeta > 0.0 { d.y.atan2(d.x) } else { 0.0 };
        Self { zeta, phi }
    }
}

/// Squared UAV–node distance for a UAV at polar `(r, θ)` around the centre.
pub fn polar_distance_sq(scenario: &Scenario, gn: PolarGn, r: f64, theta: f64) -> f64 {
    r * r + gn.zeta * gn.zeta + scenario.altitude.powi(2)
        - 2.0 * r * gn.zeta * (theta - gn.phi).cos()
}

/// Received-power cap `P_peak h` on the circle.
pub fn smax(scenario: &Scenario, gn: PolarGn, r: f64, theta: f64) -> f64 {
    scenario.peak_power * scenario.ref_snr / polar_distance_sq(scenario, gn, r, theta)
}

/// Minorant of the circular received-power cap in the radius at a fixed
/// angle. The distance is `(r − b)² + A` with `b = ζ cos(θ − φ)` and
/// `A = ζ² sin²(θ − φ) + H²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusBound {
    pub b: f64,
    pub a: f64,
    pub scale: f64,
    pub minorant: ReciprocalMinorant,
}

impl RadiusBound {
    pub fn new(scenario: &Scenario, gn: PolarGn, theta: f64, r_prev: f64) -> Self {
        Self::with_curvature(scenario, gn, theta, r_prev, Curvature::Uniform)
    }

    pub fn with_curvature(scenario: &Scenario, gn: PolarGn, theta: f64, r_prev: f64, kind: Curvature) -> Self {
        let x = theta - gn.phi;
        let b = gn.zeta * x.cos();
        let a = (gn.zeta * x.sin()).powi(2) + scenario.altitude.powi(2);
        Self {
            b,
            a,
            scale: scenario.peak_power * scenario.ref_snr,
            minorant: ReciprocalMinorant::with_curvature(1.0, a, [r_prev - b, 0.0], kind),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.scale * self.minorant.value([r - self.b, 0.0])
    }
}

pub fn smax_lb1(scenario: &Scenario, gn: PolarGn, theta: f64, r_prev: f64, r_new: f64) -> f64 {
    RadiusBound::new(scenario, gn, theta, r_prev).value(r_new)
}

/// Minorant of the circular received-power cap in the angle at a fixed
/// radius. The cosine in the distance is first replaced by its quadratic
/// minorant, which bounds the distance by `rζ(θ − b)² + A`; the reciprocal
/// kernel is then applied in `u = θ − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBound {
    pub b: f64,
    pub a: f64,
    pub rho: f64,
    pub scale: f64,
    pub minorant: ReciprocalMinorant,
}

impl AngleBound {
    pub fn new(scenario: &Scenario, gn: PolarGn, r: f64, theta_prev: f64) -> Self {
        Self::with_curvature(scenario, gn, r, theta_prev, Curvature::Uniform)
    }

    pub fn with_curvature(scenario: &Scenario, gn: PolarGn, r: f64, theta_prev: f64, kind: Curvature) -> Self {
        let x = theta_prev - gn.phi;
        let (sx, cx) = x.sin_cos();
        let rho = r * gn.zeta;
        let a = r * r + gn.zeta * gn.zeta + scenario.altitude.powi(2) - rho * (2.0 * cx + sx * sx);
        Self {
            b: theta_prev - sx,
            a,
            rho,
            scale: scenario.peak_power * scenario.ref_snr,
            minorant: ReciprocalMinorant::with_curvature(rho, a, [sx, 0.0], kind),
        }
    }

    /// The intermediate bound `scale / (rζ(θ − b)² + A)`.
    pub fn intermediate(&self, theta: f64) -> f64 {
        self.scale * reciprocal(self.rho, self.a, &[theta - self.b])
    }

    pub fn value(&self, theta: f64) -> f64 {
        self.scale * self.minorant.value([theta - self.b, 0.0])
    }
}

pub fn smax_lb2(scenario: &Scenario, gn: PolarGn, r: f64, theta_prev: f64, theta_new: f64) -> f64 {
    AngleBound::new(scenario, gn, r, theta_prev).value(theta_new)
}

/// Expansion constants of the trajectory subproblem, one entry per node and
/// slot (`[k][n-1]` for slot `n`).
#[derive(Debug, Clone)]
pub struct SurrogateCoeffs {
    pub interference: Vec<Vec<InterferenceMajorant>>,
    pub gmax: Vec<Vec<GmaxBound>>,
    /// Velocity expansion points `v_l[n]`, `n = 1..=N`.
    pub v_prev: Vec<Vec2>,
}

impl SurrogateCoeffs {
    /// `q_prev` and `v_prev` are indexed `0..=N`; `g_prev` is `[k][n-1]`.
    pub fn new(
        scenario: &Scenario,
        q_prev: &[Vec2],
        v_prev: &[Vec2],
        g_prev: &[Vec<f64>],
        kind: Curvature,
    ) -> Self {
        let k_count = scenario.num_gns();
        let n = scenario.slots;
        let totals: Vec<f64> = (0..n).map(|i| g_prev.iter().map(|row| row[i]).sum()).collect();
        let interference = (0..k_count)
            .map(|k| {
                (0..n)
                    .map(|i| InterferenceMajorant::new(totals[i] - g_prev[k][i]))
                    .collect()
            })
            .collect();
        let gmax = (0..k_count)
            .map(|k| (1..=n).map(|i| GmaxBound::with_curvature(scenario, k, &q_prev[i], kind)).collect())
            .collect();
        Self {
            interference,
            gmax,
            v_prev: v_prev[1..=n].to_vec(),
        }
    }
}

/// Which side of the true function a surrogate must stay on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    /// Concave minorant: `g ≤ f`.
    Lower,
    /// Convex majorant: `g ≥ f`.
    Upper,
}

/// Outcome of [`verify_surrogate`]. Gaps are relative to `max(1, |f|)` (values)
/// and `max(1, ‖∇f‖∞)` (gradients).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCheck {
    pub value_gap: f64,
    pub gradient_gap: f64,
    /// Largest bound violation over the samples (≤ 0 when the bound holds).
    pub max_violation: f64,
    /// Samples whose violation exceeds the bound tolerance.
    pub violations: usize,
    pub nonfinite: usize,
    pub samples: usize,
}

impl SurrogateCheck {
    pub fn passes(&self, value_tol: f64, grad_tol: f64) -> bool {
        self.value_gap <= value_tol
            && self.gradient_gap <= grad_tol
            && self.violations == 0
            && self.nonfinite == 0
    }
}

/// Tolerances applied by the surrogate suite.
pub const VALUE_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const BOUND_TOL: f64 = 1e-9;

/// Finite-difference step used for gradient matching.
pub fn fd_step(x: &[f64]) -> Vec<f64> {
    x.iter().map(|xi| 1e-5 * (1.0 + xi.abs())).collect()
}

/// Default sampling box: `x_l ± 10·max(1, |x_l|)` per coordinate.
pub fn default_box(x_l: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let half: Vec<f64> = x_l.iter().map(|x| 10.0 * x.abs().max(1.0)).collect();
    (
        x_l.iter().zip(&half).map(|(x, h)| x - h).collect(),
        x_l.iter().zip(&half).map(|(x, h)| x + h).collect(),
    )
}

/// Checks value match and gradient match at `x_l` (central differences for
/// both functions) and the one-sided bound on `samples` uniform draws from
/// the box `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_surrogate<F, G, R>(
    f: F,
    g: G,
    x_l: &[f64],
    lo: &[f64],
    hi: &[f64],
    side: BoundSide,
    samples: usize,
    rng: &mut R,
) -> SurrogateCheck
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
    R: Rng,
{
    let f0 = f(x_l);
    let g0 = g(x_l);
    let value_gap = (f0 - g0).abs() / f0.abs().max(1.0);
    let h = fd_step(x_l);
    let (df, bad_f) = finite_diff_gradient(&f, x_l, &h);
    let (dg, bad_g) = finite_diff_gradient(&g, x_l, &h);
    let scale = df.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let gradient_gap = df
        .iter()
        .zip(&dg)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    let mut nonfinite = usize::from(bad_f || bad_g || !f0.is_finite() || !g0.is_finite());
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut x = vec![0.0; x_l.len()];
    for _ in 0..samples {
        for ((xi, l), u) in x.iter_mut().zip(lo).zip(hi) {
            *xi = rng.gen_range(*l..=*u);
        }
        let fv = f(&x);
        let gv = g(&x);
        if !fv.is_finite() || !gv.is_finite() {
            nonfinite += 1;
            continue;
        }
        let excess = match side {
            BoundSide::Lower => gv - fv,
            BoundSide::Upper => fv - gv,
        } / fv.abs().max(1.0);
        max_violation = max_violation.max(excess);
        if excess > BOUND_TOL {
            violations += 1;
        }
    }
    SurrogateCheck {
        value_gap,
        gradient_gap,
        max_violation,
        violations,
        nonfinite,
        samples,
    }
}

/// Merges checks of one family taken at several expansion points.
fn merge(acc: Option<SurrogateCheck>, c: SurrogateCheck) -> SurrogateCheck {
    match acc {
        None => c,
        Some(a) => SurrogateCheck {
            value_gap: a.value_gap.max(c.value_gap),
            gradient_gap: a.gradient_gap.max(c.gradient_gap),
            max_violation: a.max_violation.max(c.max_violation),
            violations: a.violations + c.violations,
            nonfinite: a.nonfinite + c.nonfinite,
            samples: a.samples + c.samples,
        },
    }
}

/// Expansion points drawn per family by [`surrogate_suite`].
pub const SUITE_ANCHORS: usize = 20;

/// Runs every surrogate family through [`verify_surrogate`] with
/// [`SUITE_ANCHORS`] random expansion points sharing `samples` bound
/// samples. Families with a curvature choice are checked for both.
pub fn surrogate_suite(samples: usize, seed: u64) -> Vec<(String, SurrogateCheck)> {
    use rand::SeedableRng;
    use std::f64::consts::PI;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let per = samples.div_ceil(SUITE_ANCHORS);
    let scenario = Scenario::reference(vec![Vec2::new(120.0, -40.0)], 60.0, 30);
    let s = &scenario;
    let mut out = Vec::new();

    let mut acc = None;
    for _ in 0..SUITE_ANCHORS {
        let x_l: [f64; 2] = [rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)];
        let hi: Vec<f64> = x_l.iter().map(|x| 10.0 * x.max(1.0)).collect();
        let f = |x: &[f64]| (1.0 + x[0] + x[1]).log2();
        let g = |x: &[f64]| rate_interference_ub(&x_l, x);
        let c = verify_surrogate(f, g, &x_l, &[0.0, 0.0], &hi, BoundSide::Upper, per, &mut rng);
        acc = Some(merge(acc, c));
    }
    out.push(("interference_rate".to_string(), acc.unwrap()));

    let mut acc = None;
    for _ in 0..SUITE_ANCHORS {
        let x_l = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
        let v_l = Vec2::new(x_l[0], x_l[1]);
        let (lo, hi) = default_box(&x_l);
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let g = |x: &[f64]| speed_sq_lb(&v_l, &Vec2::new(x[0], x[1]));
        let c = verify_surrogate(f, g, &x_l, &lo, &hi, BoundSide::Lower, per, &mut rng);
        acc = Some(merge(acc, c));
    }
    out.push(("speed_squared".to_string(), acc.unwrap()));

    for kind in [Curvature::Uniform, Curvature::Tangent] {
        let tag = match kind {
            Curvature::Uniform => "uniform",
            Curvature::Tangent => "tangent",
        };

        let mut acc = None;
        for _ in 0..SUITE_ANCHORS {
            let x_l = [rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0)];
            let bound = GmaxBound::with_curvature(s, 0, &Vec2::new(x_l[0], x_l[1]), kind);
            let (lo, hi) = default_box(&x_l);
            let f = |x: &[f64]| gmax(s, 0, &Vec2::new(x[0], x[1]));
            let g = |x: &[f64]| bound.value(&Vec2::new(x[0], x[1]));
            let c = verify_surrogate(f, g, &x_l, &lo, &hi, BoundSide::Lower, per, &mut rng);
            acc = Some(merge(acc, c));
        }
        out.push((format!("received_power_cap/{tag}"), acc.unwrap()));

        let mut acc = None;
        for _ in 0..SUITE_ANCHORS {
            let gn = PolarGn { zeta: rng.gen_range(0.0..600.0), phi: rng.gen_range(-PI..PI) };
            let theta = rng.gen_range(-2.0 * PI..2.0 * PI);
            let x_l = [rng.gen_range(10.0..1500.0)];
            let bound = RadiusBound::with_curvature(s, gn, theta, x_l[0], kind);
            let (lo, hi) = default_box(&x_l);
            let f = |x: &[f64]| smax(s, gn, x[0], theta);
            let g = |x: &[f64]| bound.value(x[0]);
            let c = verify_surrogate(f, g, &x_l, &lo, &hi, BoundSide::Lower, per, &mut rng);
            acc = Some(merge(acc, c));
        }
        out.push((format!("circular_radius/{tag}"), acc.unwrap()));

        let mut acc = None;
        for _ in 0..SUITE_ANCHORS {
            let gn = PolarGn { zeta: rng.gen_range(0.0..600.0), phi: rng.gen_range(-PI..PI) };
            let r = rng.gen_range(10.0..1500.0);
            let x_l = [rng.gen_range(-2.0 * PI..2.0 * PI)];
            let bound = AngleBound::with_curvature(s, gn, r, x_l[0], kind);
            let (lo, hi) = default_box(&x_l);
            let f = |x: &[f64]| smax(s, gn, r, x[0]);
            let g = |x: &[f64]| bound.value(x[0]);
            let c = verify_surrogate(f, g, &x_l, &lo, &hi, BoundSide::Lower, per, &mut rng);
            acc = Some(merge(acc, c));
        }
        out.push((format!("circular_angle/{tag}"), acc.unwrap()));
    }
    out
}

/// Largest deviation of `‖v‖² − speed_sq_lb(v_l, v)` from `2‖v − v_l‖²`
/// over random pairs, relative to `1 + ‖v_l‖² + ‖v‖²`.
pub fn speed_gap_identity_error(samples: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = Vec2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let b = Vec2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let gap = b.norm_squared() - speed_sq_lb(&a, &b);
        let scale = 1.0 + a.norm_squared() + b.norm_squared();
        worst = worst.max((gap - 2.0 * (b - a).norm_squared()).abs() / scale);
    }
    worst
}

fn norm_sq(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, LOG2_E, PI};

    fn scenario() -> Scenario {
        Scenario::reference(vec![Vec2::new(0.0, 0.0)], 60.0, 30)
    }

    #[test]
    fn interference_bound_examples() {
        let prev = [3.0, 7.5];
        assert_relative_eq!(rate_interference_ub(&prev, &prev), 11.5f64.log2());
        let ub = rate_interference_ub(&[0.0], &[1.0]);
        assert_relative_eq!(ub, LOG2_E, max_relative = 1e-15);
        assert!(ub >= 1.0);
    }

    #[test]
    fn interference_bound_never_undershoots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let m = rng.gen_range(1..4);
            let prev: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..100.0)).collect();
            let new: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..100.0)).collect();
            let truth = (1.0 + new.iter().sum::<f64>()).log2();
            assert!(rate_interference_ub(&prev, &new) >= truth - 1e-12);
        }
    }

    #[test]
    fn gmax_bound_examples() {
        let s = scenario();
        let w = Vec2::zeros();
        // P_peak γ0 = 1e6 and H² = 1e4.
        assert_relative_eq!(gmax_lb(&s, 0, &w, &w), 100.0, max_relative = 1e-12);
        let far = Vec2::new(100.0, 0.0);
        let lb = gmax_lb(&s, 0, &w, &far);
        assert!(lb.abs() < 1e-9, "{lb}");
        assert_relative_eq!(gmax(&s, 0, &far), 50.0, max_relative = 1e-12);
        // Expanding directly overhead gives B = 0 and C = 1/H².
        let b = GmaxBound::new(&s, 0, &w);
        assert!(b.minorant.slope.abs() < 1e-20);
        assert_relative_eq!(b.minorant.offset, 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn gmax_bound_sampled() {
        let s = Scenario::reference(vec![Vec2::new(120.0, -40.0)], 60.0, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let qp = Vec2::new(rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
            let qn = Vec2::new(rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
            assert!(gmax_lb(&s, 0, &qp, &qn) <= gmax(&s, 0, &qn) + 1e-9);
        }
    }

    #[test]
    fn speed_bound_examples() {
        let v = Vec2::new(30.0, 0.0);
        assert_eq!(speed_sq_lb(&v, &v), 900.0);
        let lb = speed_sq_lb(&v, &Vec2::new(40.0, 0.0));
        assert_eq!(lb, 1400.0);
        assert_eq!(1600.0 - lb, 2.0 * 100.0);
    }

    #[test]
    fn speed_bound_gap_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let a = Vec2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let b = Vec2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let gap = b.norm_squared() - speed_sq_lb(&a, &b);
            let scale = 1.0 + a.norm_squared() + b.norm_squared();
            assert!((gap - 2.0 * (b - a).norm_squared()).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cos_bound_examples() {
        assert_relative_eq!(cos_lb(0.7, 0.7), 0.7f64.cos(), max_relative = 1e-15);
        let v = cos_lb(0.0, FRAC_PI_2);
        assert_relative_eq!(v, 1.0 - PI * PI / 8.0, max_relative = 1e-14);
        assert!(v <= 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = rng.gen_range(-4.0 * PI..4.0 * PI);
            let b = rng.gen_range(-4.0 * PI..4.0 * PI);
            assert!(cos_lb(a, b) <= b.cos() + 1e-9);
        }
    }

    #[test]
    fn radius_and_angle_bounds_are_tight() {
        let s = scenario();
        let gn = PolarGn { zeta: 250.0, phi: 0.4 };
        for (theta, r) in [(0.3, 180.0), (2.0, 600.0), (-1.1, 40.0)] {
            let truth = smax(&s, gn, r, theta);
            assert_relative_eq!(smax_lb1(&s, gn, theta, r, r), truth, max_relative = 1e-12);
            assert_relative_eq!(smax_lb2(&s, gn, r, theta, theta), truth, max_relative = 1e-12);
        }
    }

    #[test]
    fn angle_bound_chain_holds() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let gn = PolarGn { zeta: rng.gen_range(0.0..600.0), phi: rng.gen_range(-PI..PI) };
            let r = rng.gen_range(10.0..2000.0);
            let tp = rng.gen_range(-2.0 * PI..2.0 * PI);
            let tn = rng.gen_range(-2.0 * PI..2.0 * PI);
            let bound = AngleBound::new(&s, gn, r, tp);
            let mid = bound.intermediate(tn);
            let truth = smax(&s, gn, r, tn);
            assert!(bound.value(tn) <= mid + 1e-9 * mid.max(1.0));
            assert!(mid <= truth + 1e-9 * truth.max(1.0));
        }
    }

    #[test]
    fn polar_distance_matches_cartesian() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = Vec2::new(31.0, -12.0);
        for _ in 0..1000 {
            let gn_pos = c + Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
            let gn = PolarGn::new(&c, &gn_pos);
            let r = rng.gen_range(1.0..1500.0);
            let th: f64 = rng.gen_range(-10.0..10.0);
            let q = c + r * Vec2::new(th.cos(), th.sin());
            let cart = (q - gn_pos).norm_squared() + s.altitude.powi(2);
            let polar = polar_distance_sq(&s, gn, r, th);
            assert!((cart - polar).abs() <= 1e-9 * cart);
        }
    }

    #[test]
    fn gap_hessian_is_psd_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let rho = rng.gen_range(0.1..5.0);
            let z = rng.gen_range(0.5..3.0);
            let u = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let h = reciprocal_gap_hessian(rho, z, u);
            let tr = h[0][0] + h[1][1];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            assert!(tr / 2.0 - disc >= -1e-9);

            let anchor = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let m = ReciprocalMinorant::new(rho, z, anchor);
            let gap = |x: &[f64]| reciprocal(rho, z, x) - m.value([x[0], x[1]]);
            let step = 1e-4;
            for i in 0..2 {
                for j in 0..2 {
                    let e = |di: f64, dj: f64| {
                        let mut x = u;
                        x[i] += di;
                        x[j] += dj;
                        gap(&x)
                    };
                    let fd = (e(step, step) - e(step, -step) - e(-step, step) + e(-step, -step))
                        / (4.0 * step * step);
                    assert!((fd - h[i][j]).abs() < 1e-5 * (1.0 + h[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn full_suite_passes() {
        let checks = surrogate_suite(10_000, 7);
        assert_eq!(checks.len(), 8);
        for (name, c) in &checks {
            assert!(c.passes(VALUE_TOL, GRADIENT_TOL), "{name}: {c:?}");
            assert!(c.samples >= 10_000);
        }
        assert!(speed_gap_identity_error(10_000, 7) <= 1e-12);
    }

    #[test]
    fn verifier_identity_and_shifted_surrogates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = |x: &[f64]| -(x[0] * x[0]) + x[1];
        let x_l = [1.0, 2.0];
        let (lo, hi) = default_box(&x_l);
        let same = verify_surrogate(f, f, &x_l, &lo, &hi, BoundSide::Lower, 1000, &mut rng);
        assert!(same.passes(VALUE_TOL, GRADIENT_TOL));
        let shifted = verify_surrogate(
            f,
            |x: &[f64]| f(x) + 1.0,
            &x_l,
            &lo,
            &hi,
            BoundSide::Lower,
            1000,
            &mut rng,
        );
        assert!(!shifted.passes(VALUE_TOL, GRADIENT_TOL));
        assert_eq!(shifted.violations, 1000);
    }
}
