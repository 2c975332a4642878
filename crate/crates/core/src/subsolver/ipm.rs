use log::{debug, trace};
use nalgebra::{DMatrix, DVector};

use super::{
    AffineRow, Constraint, ConstraintKind, KktResiduals, SmoothFn, SolveError,
    SolveResult, SolveStatus, SubProblem,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target duality gap and scaled KKT residual.
    pub tol: f64,
    pub max_iters: usize,
    /// Factor by which the centering parameter shrinks per step.
    pub mu: f64,
    /// Largest diagonal shift tried when the Newton matrix is not positive
    /// definite.
    pub reg_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 200,
            mu: 10.0,
            reg_cap: 1e-2,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Solves from the subproblem's warm start, which must satisfy every
/// inequality strictly.
pub fn solve(sp: &SubProblem, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    check_shapes(sp, opts)?;
    let start = &sp.start;
    if let Some((label, value)) = sp.worst_constraint(start) {
        if !(value < 0.0) {
            return Err(SolveError::InfeasibleStart {
                label: label.to_string(),
                value,
            });
        }
    }
    if !sp.objective.value(start).is_finite() {
        return Err(SolveError::ObjectiveDomain);
    }
    let res = run(sp, start, opts, None);
    let start_obj = sp.objective_value(start);
    if res.objective < start_obj - opts.tol && sp.max_equality_residual(start) <= 1e-9 {
        debug!(
            "solver ended below its warm start ({} < {}); keeping the start",
            res.objective, start_obj
        );
        return Ok(SolveResult {
            x: start.clone(),
            objective: start_obj,
            ..res
        });
    }
    Ok(res)
}

/// Like [`solve`], but first searches for a strictly feasible point when the
/// warm start is not one.
pub fn solve_with_phase_one(sp: &SubProblem, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    check_shapes(sp, opts)?;
    match sp.worst_constraint(&sp.start) {
        Some((_, v)) if !(v < 0.0) => {
            let x = phase_one(sp, opts)?;
            let mut inner = sp.clone();
            inner.start = x;
            solve(&inner, opts)
        }
        _ => solve(sp, opts),
    }
}

fn check_shapes(sp: &SubProblem, opts: &SolverOptions) -> Result<(), SolveError> {
    if sp.start.len() != sp.dim() {
        return Err(SolveError::Dimension(format!(
            "warm start has {} entries, layout has {}",
            sp.start.len(),
            sp.dim()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(SolveError::Tolerance(opts.tol));
    }
    Ok(())
}

const PHASE_ONE_DEPTH: f64 = 1e-4;
const PHASE_ONE_BOX: f64 = 1e3;

/// Minimises a shared slack `s` over `f_i(x) ≤ s`, stopping as soon as the
/// iterate is strictly inside every original constraint.
fn phase_one(sp: &SubProblem, opts: &SolverOptions) -> Result<Vec<f64>, SolveError> {
    let n = sp.dim();
    let mut worst = ("", f64::NEG_INFINITY);
    for c in &sp.constraints {
        let v = c.f.value(&sp.start);
        if !v.is_finite() {
            return Err(SolveError::PhaseOneFailed {
                label: c.label.clone(),
                value: v,
            });
        }
        if v > worst.1 {
            worst = (c.label.as_str(), v);
        }
    }
    let mut layout = sp.layout.clone();
    let s_idx = layout.push("phase_one_slack", 1);
    let mut start = sp.start.clone();
    start.push(worst.1.max(0.0) + 1.0);
    let mut aux = SubProblem::new(layout, SmoothFn::affine(vec![(s_idx, 1.0)], 0.0), start);
    for c in &sp.constraints {
        let mut f = c.f.clone();
        f.add_linear(s_idx, -1.0);
        aux.constraints.push(Constraint {
            label: c.label.clone(),
            kind: c.kind,
            f,
        });
    }
    aux.constrain(
        "phase_one_floor",
        ConstraintKind::Affine,
        SmoothFn::from_row(AffineRow::new(vec![(s_idx, -1.0)], -1.0)),
    );
    // A loose box keeps the auxiliary barrier bounded in directions the
    // original constraints leave free.
    for (i, &x0) in sp.start.iter().enumerate() {
        let r = PHASE_ONE_BOX * (1.0 + x0.abs());
        aux.constrain(
            "phase_one_box",
            ConstraintKind::Affine,
            SmoothFn::affine(vec![(i, 1.0 / r)], -x0 / r - 1.0),
        );
        aux.constrain(
            "phase_one_box",
            ConstraintKind::Affine,
            SmoothFn::affine(vec![(i, -1.0 / r)], x0 / r - 1.0),
        );
    }
    aux.equalities = sp.equalities.clone();
    let done = |x: &[f64]| {
        sp.constraints
            .iter()
            .all(|c| c.f.value(&x[..n]) < -PHASE_ONE_DEPTH)
    };
    let res = run(&aux, &aux.start, opts, Some(&done));
    let x = res.x[..n].to_vec();
    match sp.worst_constraint(&x) {
        Some((label, value)) if !(value < 0.0) => Err(SolveError::PhaseOneFailed {
            label: label.to_string(),
            value,
        }),
        _ => {
            debug!("phase one found an interior point in {} iterations", res.iterations);
            Ok(x)
        }
    }
}

struct Workspace {
    supports: Vec<Vec<usize>>,
    scratch: Vec<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Constraint values and their gradients restricted to each support.
struct ConstraintEval {
    f: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(sp: &SubProblem) -> Self {
        let n = sp.dim();
        let p = sp.equalities.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (r, e) in sp.equalities.iter().enumerate() {
            for &(i, c) in &e.row.coefs {
                a[(r, i)] += c;
            }
            b[r] = -e.row.offset;
        }
        Self {
            supports: sp.constraints.iter().map(|c| c.f.support()).collect(),
            scratch: vec![0.0; n],
            a,
            b,
        }
    }

    fn constraints(&mut self, sp: &SubProblem, x: &[f64], with_grad: bool) -> ConstraintEval {
        let m = sp.constraints.len();
        let mut f = Vec::with_capacity(m);
        let mut grads = Vec::with_capacity(if with_grad { m } else { 0 });
        for (c, sup) in sp.constraints.iter().zip(&self.supports) {
            if with_grad {
                for &i in sup {
                    self.scratch[i] = 0.0;
                }
                f.push(c.f.eval(x, Some(&mut self.scratch), None));
                grads.push(sup.iter().map(|&i| self.scratch[i]).collect());
            } else {
                f.push(c.f.value(x));
            }
        }
        ConstraintEval { f, grads }
    }

    /// Dual residual `∇f0 + Σλ_i∇f_i + Aᵀν`.
    fn dual_residual(&self, g0: &[f64], ce: &ConstraintEval, lambda: &[f64], nu: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::from_column_slice(g0);
        for ((sup, g), l) in self.supports.iter().zip(&ce.grads).zip(lambda) {
            for (&i, gi) in sup.iter().zip(g) {
                r[i] += l * gi;
            }
        }
        if !nu.is_empty() {
            r += self.a.transpose() * nu;
        }
        r
    }
}

/// Cholesky factor of the Jacobi-scaled `D⁻¹hD⁻¹`, shifting its diagonal
/// when needed.
struct Factor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    d: DVector<f64>,
}

impl Factor {
    fn new(h: &DMatrix<f64>, cap: f64) -> Option<Self> {
        let n = h.nrows();
        let top = (0..n).fold(0.0f64, |m, i| m.max(h[(i, i)].abs()));
        let floor = (top * 1e-300).max(f64::MIN_POSITIVE);
        let d = DVector::from_iterator(n, (0..n).map(|i| h[(i, i)].max(floor).sqrt()));
        let scaled = |shift: f64| {
            let mut hs = h.clone();
            for (j, col) in hs.as_mut_slice().chunks_exact_mut(n).enumerate() {
                let dj = d[j];
                for (v, di) in col.iter_mut().zip(d.iter()) {
                    *v /= di * dj;
                }
                col[j] += shift;
            }
            hs
        };
        if let Some(chol) = scaled(0.0).cholesky() {
            return Some(Self { chol, d });
        }
        let mut shift = 1e-12;
        while shift <= cap {
            let ht = scaled(shift);
            if let Some(chol) = ht.cholesky() {
                trace!("Newton matrix regularised by {shift:.1e}");
                return Some(Self { chol, d });
            }
            shift *= 100.0;
        }
        None
    }

    fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.component_div(&self.d);
        self.chol.solve_mut(&mut y);
        y.component_div(&self.d)
    }

    fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = b.clone();
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                y[(i, j)] /= self.d[i];
            }
        }
        self.chol.solve_mut(&mut y);
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                y[(i, j)] /= self.d[i];
            }
        }
        y
    }
}

type EarlyStop<'a> = Option<&'a dyn Fn(&[f64]) -> bool>;

/// Fraction of the step to the multiplier boundary that is taken.
const BOUNDARY_FRACTION: f64 = 0.99;
/// Sufficient-decrease factor of the residual-norm line search.
const RESIDUAL_DECREASE: f64 = 0.01;
/// Newton decrement below which the starting point counts as centred.
const CENTRING_TOL: f64 = 0.5;
/// Upper bound on the initial barrier weight. Large starting weights leave
/// the centring phase in its damped regime for many steps.
const T0_MAX: f64 = 10.0;
const MAX_CENTRING: usize = 50;

/// Gradient `∇f0 + Σ c_i∇f_i` and matrix
/// `∇²f0 + Σ w_i∇²f_i + Σ o_i∇f_i∇f_iᵀ` at `x`.
fn assemble(
    sp: &SubProblem,
    ws: &Workspace,
    ce: &ConstraintEval,
    x: &[f64],
    grad_w: &[f64],
    hess_w: &[f64],
    outer_w: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let mut g = vec![0.0; n];
    sp.objective.eval(x, Some(&mut g), None);
    let mut h = DMatrix::zeros(n, n);
    sp.objective.eval(x, None, Some((1.0, &mut h)));
    for (i, c) in sp.constraints.iter().enumerate() {
        let sup = &ws.supports[i];
        let gr = &ce.grads[i];
        if !c.f.is_affine() && hess_w[i] != 0.0 {
            c.f.eval(x, None, Some((hess_w[i], &mut h)));
        }
        let w = outer_w[i];
        let hs = h.as_mut_slice();
        for (a, &ia) in sup.iter().enumerate() {
            let wa = w * gr[a];
            let col = &mut hs[ia * n..(ia + 1) * n];
            for (&ib, &gb) in sup[a..].iter().zip(&gr[a..]) {
                col[ib] += wa * gb;
            }
            g[ia] += gr[a] * grad_w[i];
        }
    }
    h.fill_upper_triangle_with_lower_triangle();
    (DVector::from_vec(g), h)
}

/// Factored reduced KKT matrix `[H Aᵀ; A 0]`, eliminating `dx` through the
/// Schur complement `AH⁻¹Aᵀ`.
struct Kkt {
    h: Factor,
    hinv_at: DMatrix<f64>,
    schur: Option<Factor>,
}

impl Kkt {
    fn new(ws: &Workspace, h: &DMatrix<f64>, reg_cap: f64) -> Option<Self> {
        let h = Factor::new(h, reg_cap)?;
        if ws.a.nrows() == 0 {
            return Some(Self { h, hinv_at: DMatrix::zeros(0, 0), schur: None });
        }
        let hinv_at = h.solve_mat(&ws.a.transpose());
        let schur = Factor::new(&(&ws.a * &hinv_at), reg_cap)?;
        Some(Self { h, hinv_at, schur: Some(schur) })
    }

    /// Solves `[H Aᵀ; A 0][dx; dν] = −[g; r]`.
    fn solve(&self, ws: &Workspace, g: &DVector<f64>, r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let hinv_g = self.h.solve_vec(g);
        match &self.schur {
            None => (-hinv_g, DVector::zeros(0)),
            Some(sc) => {
                let dnu = sc.solve_vec(&(r - &ws.a * &hinv_g));
                (-(&hinv_g + &self.hinv_at * &dnu), dnu)
            }
        }
    }
}

/// Primal, dual and centrality residuals of the perturbed KKT system.
struct Residuals {
    dual: DVector<f64>,
    cent: Vec<f64>,
    primal: DVector<f64>,
}

impl Residuals {
    fn new(sp: &SubProblem, ws: &mut Workspace, x: &[f64], lambda: &[f64], nu: &DVector<f64>, t: f64) -> Option<(Self, ConstraintEval)> {
        let mut g0 = vec![0.0; x.len()];
        if !sp.objective.eval(x, Some(&mut g0), None).is_finite() {
            return None;
        }
        let ce = ws.constraints(sp, x, true);
        if ce.f.iter().any(|f| !(*f < 0.0)) {
            return None;
        }
        let dual = ws.dual_residual(&g0, &ce, lambda, nu);
        let cent = ce.f.iter().zip(lambda).map(|(f, l)| -l * f - 1.0 / t).collect();
        let primal = if ws.a.nrows() > 0 {
            &ws.a * DVector::from_column_slice(x) - &ws.b
        } else {
            DVector::zeros(0)
        };
        Some((Self { dual, cent, primal }, ce))
    }

    fn norm(&self) -> f64 {
        (self.dual.norm_squared() + self.cent.iter().map(|c| c * c).sum::<f64>() + self.primal.norm_squared()).sqrt()
    }
}

/// Primal-dual interior-point method following the central path of the
/// log barrier: each iteration takes one Newton step on the perturbed KKT
/// conditions `∇f0 + Σλ_i∇f_i + Aᵀν = 0`, `−λ_i f_i = 1/t`, `Ax = b`, with
/// `t = mu·m / η` set from the surrogate duality gap `η = −Σλ_i f_i`.
fn barrier_gradient(ws: &Workspace, ce: &ConstraintEval, n: usize) -> DVector<f64> {
    let mut gb = DVector::zeros(n);
    for ((sup, g), f) in ws.supports.iter().zip(&ce.grads).zip(&ce.f) {
        for (&i, gi) in sup.iter().zip(g) {
            gb[i] += gi / (-f);
        }
    }
    gb
}

/// `f0 − Σ log(−f_i) / t`, infinite outside the domain.
fn barrier_merit(sp: &SubProblem, ws: &mut Workspace, x: &[f64], t: f64) -> f64 {
    let f0 = sp.objective.value(x);
    let ce = ws.constraints(sp, x, false);
    if !f0.is_finite() || ce.f.iter().any(|f| !(*f < 0.0)) {
        return f64::INFINITY;
    }
    f0 - ce.f.iter().map(|f| (-f).ln()).sum::<f64>() / t
}

fn directional(support: &[usize], grad: &[f64], d: &DVector<f64>) -> f64 {
    support.iter().zip(grad).map(|(&j, g)| g * d[j]).sum()
}

fn run(sp: &SubProblem, x0: &[f64], opts: &SolverOptions, early: EarlyStop<'_>) -> SolveResult {
    let n = sp.dim();
    let m = sp.constraints.len();
    let p = sp.equalities.len();
    let mut ws = Workspace::new(sp);
    let mut x = x0.to_vec();
    let mut nu = DVector::zeros(p);
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    // Initial multipliers on the central path of a t balancing the
    // objective and barrier gradients.
    let t0 = {
        let mut g0 = vec![0.0; n];
        sp.objective.eval(&x, Some(&mut g0), None);
        let ce = ws.constraints(sp, &x, true);
        let gb = barrier_gradient(&ws, &ce, n);
        let g0n: f64 = g0.iter().map(|v| v * v).sum();
        let cross: f64 = g0.iter().zip(gb.iter()).map(|(a, b)| a * b).sum();
        let ls = if g0n > 0.0 { -cross / g0n } else { 1.0 };
                if ls.is_finite() { ls.clamp(1.0, T0_MAX) } else { 1.0 }
    };

    // Damped Newton on the barrier at t0 so the multipliers start near the
    // central path.
    let mut centred = early.is_none_or(|stop| !stop(&x));
    let mut iters_centring = 0;
    while centred && iterations < opts.max_iters && iters_centring < MAX_CENTRING {
        let ce = ws.constraints(sp, &x, true);
        let lc: Vec<f64> = ce.f.iter().map(|f| 1.0 / (t0 * (-f))).collect();
        let outer_w: Vec<f64> = lc.iter().zip(&ce.f).map(|(l, f)| l / (-f)).collect();
        let (mut g, h) = assemble(sp, &ws, &ce, &x, &vec![0.0; m], &lc, &outer_w);
        g += barrier_gradient(&ws, &ce, n) / t0;
        let rp = if p > 0 { &ws.a * DVector::from_column_slice(&x) - &ws.b } else { DVector::zeros(0) };
        let Some(kkt) = Kkt::new(&ws, &h, opts.reg_cap) else {
            break;
        };
        let (dx, w) = kkt.solve(&ws, &g, &rp);
        nu = w;
        let decrement = t0 * dx.dot(&(&h * &dx));
        if decrement <= CENTRING_TOL && rp.amax() <= 1e-9 {
            break;
        }
        iterations += 1;
        iters_centring += 1;
        let psi0 = barrier_merit(sp, &mut ws, &x, t0);
        let slope = g.dot(&dx);
        let mut s = 1.0;
        let mut xt = vec![0.0; n];
        loop {
            for i in 0..n {
                xt[i] = x[i] + s * dx[i];
            }
            if barrier_merit(sp, &mut ws, &xt, t0) <= psi0 + 0.01 * s * slope.min(0.0) {
                break;
            }
            s *= 0.5;
            if s < 1e-14 {
                centred = false;
                break;
            }
        }
        trace!("centring at t {t0:.2e}: decrement {decrement:.3e} step {s:.2e}");
        if centred {
            x.copy_from_slice(&xt);
            if early.is_some_and(|stop| stop(&x)) {
                break;
            }
        }
    }
    let mut lambda: Vec<f64> = ws.constraints(sp, &x, false).f.iter().map(|f| 1.0 / (t0 * (-f))).collect();

    while iterations < opts.max_iters {
        if let Some(stop) = early {
            if stop(&x) {
                status = SolveStatus::Optimal;
                break;
            }
        }
        let ce = ws.constraints(sp, &x, true);
        let gap: f64 = ce.f.iter().zip(&lambda).map(|(f, l)| -f * l).sum();
        let Some((res, _)) = Residuals::new(sp, &mut ws, &x, &lambda, &nu, f64::INFINITY) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let mut g0 = vec![0.0; n];
        sp.objective.eval(&x, Some(&mut g0), None);
        let scale = g0.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if gap <= opts.tol && res.primal.amax() <= 1e-9 && res.dual.amax() <= opts.tol * scale {
            status = SolveStatus::Optimal;
            break;
        }
        iterations += 1;

        // The Newton matrix does not depend on t, so the step is affine in
        // 1/t: dx = dx_a + dx_b / t.
        let inv: Vec<f64> = ce.f.iter().map(|f| 1.0 / (-f)).collect();
        let outer_w: Vec<f64> = lambda.iter().zip(&inv).map(|(l, v)| l * v).collect();
        let (mut g, h) = assemble(sp, &ws, &ce, &x, &vec![0.0; m], &lambda, &outer_w);
        if p > 0 {
            g += ws.a.transpose() * &nu;
        }
        let gb = barrier_gradient(&ws, &ce, n);
        let Some(kkt) = Kkt::new(&ws, &h, opts.reg_cap) else {
            debug!("Newton matrix not factorisable after {iterations} iterations");
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (dx_a, dnu_a) = kkt.solve(&ws, &g, &res.primal);
        let (dx_b, dnu_b) = kkt.solve(&ws, &gb, &DVector::zeros(p));
        let gdx_a: Vec<f64> = (0..m).map(|i| directional(&ws.supports[i], &ce.grads[i], &dx_a)).collect();
        let gdx_b: Vec<f64> = (0..m).map(|i| directional(&ws.supports[i], &ce.grads[i], &dx_b)).collect();

        // Centring from the predicted gap of the pure Newton step.
        let dl_a: Vec<f64> = (0..m).map(|i| lambda[i] * (gdx_a[i] + ce.f[i]) / (-ce.f[i])).collect();
        let mut s_a = 1.0f64;
        for i in 0..m {
            if dl_a[i] < 0.0 {
                s_a = s_a.min(-lambda[i] / dl_a[i]);
            }
            if gdx_a[i] > 0.0 {
                s_a = s_a.min(-ce.f[i] / gdx_a[i]);
            }
        }
        let gap_a: f64 = (0..m)
            .map(|i| -(ce.f[i] + s_a * gdx_a[i]) * (lambda[i] + s_a * dl_a[i]))
            .sum::<f64>()
            .max(0.0);
        let sigma = (gap_a / gap).powi(3).clamp(1.0 / opts.mu, 1.0);
        let t = if m > 0 { m as f64 / (sigma * gap.max(f64::MIN_POSITIVE)) } else { 1.0 };
        let dx = &dx_a + &dx_b / t;
        let dnu = &dnu_a + &dnu_b / t;
        let dlambda: Vec<f64> = (0..m)
            .map(|i| {
                let gdx = gdx_a[i] + gdx_b[i] / t;
                (lambda[i] * gdx + lambda[i] * ce.f[i] + 1.0 / t) / (-ce.f[i])
            })
            .collect();
        let Some((res, _)) = Residuals::new(sp, &mut ws, &x, &lambda, &nu, t) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Largest step keeping λ positive, then backtracking until every
        // slack keeps a fraction of its size and the residual norm drops.
        let mut s = lambda
            .iter()
            .zip(&dlambda)
            .filter(|(_, d)| **d < 0.0)
            .map(|(l, d)| -l / d)
            .fold(1.0f64, f64::min);
        s = if s < 1.0 { BOUNDARY_FRACTION * s } else { 1.0 };
        let r0 = res.norm();
        let mut xt = vec![0.0; n];
        let mut lt = vec![0.0; m];
        let mut accepted = false;
        while s > 1e-14 {
            for i in 0..n {
                xt[i] = x[i] + s * dx[i];
            }
            for i in 0..m {
                lt[i] = lambda[i] + s * dlambda[i];
            }
            let nt = &nu + &dnu * s;
            if let Some((rt, ct)) = Residuals::new(sp, &mut ws, &xt, &lt, &nt, t) {
                let interior = ct.f.iter().zip(&ce.f).all(|(a, b)| *a <= (1.0 - BOUNDARY_FRACTION) * b);
                if interior && rt.norm() <= (1.0 - RESIDUAL_DECREASE * s) * r0 {
                    accepted = true;
                    nu = nt;
                    break;
                }
            }
            s *= 0.5;
        }
        trace!("t {t:.2e} gap {gap:.3e} residual {r0:.3e} step {s:.2e}");
        if !accepted {
            debug!("line search stalled (gap {gap:.3e}, residual {r0:.3e})");
            status = SolveStatus::NumericalFailure;
            break;
        }
        x.copy_from_slice(&xt);
        lambda.copy_from_slice(&lt);
    }
    finish(sp, &mut ws, x, lambda, nu, iterations, status)
}

fn finish(
    sp: &SubProblem,
    ws: &mut Workspace,
    x: Vec<f64>,
    lambda: Vec<f64>,
    nu: DVector<f64>,
    iterations: usize,
    status: SolveStatus,
) -> SolveResult {
    let n = x.len();
    let ce = ws.constraints(sp, &x, true);
    let mut g0 = vec![0.0; n];
    sp.objective.eval(&x, Some(&mut g0), None);
    let rd = ws.dual_residual(&g0, &ce, &lambda, &nu);
    let rp = if !sp.equalities.is_empty() {
        (&ws.a * DVector::from_column_slice(&x) - &ws.b).amax()
    } else {
        0.0
    };
    let kkt = KktResiduals {
        stationarity: rd.amax(),
        primal: rp.max(ce.f.iter().fold(0.0f64, |a, f| a.max(*f))),
        complementarity: ce.f.iter().zip(&lambda).map(|(f, l)| -f * l).sum(),
    };
    SolveResult {
        objective: sp.objective_value(&x),
        x,
        layout: sp.layout.clone(),
        kkt,
        iterations,
        status,
        multipliers: lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Kernel, Layout};
    use super::*;

    fn boxed_scalar() -> SubProblem {
        let mut layout = Layout::default();
        layout.push("x", 1);
        let obj = SmoothFn::default().with_term(vec![AffineRow::var(0)], Kernel::NegLog2 { scale: 1.0 });
        let mut sp = SubProblem::new(layout, obj, vec![50.0]);
        sp.constrain("lower", ConstraintKind::Affine, SmoothFn::affine(vec![(0, -1.0)], 0.0));
        sp.constrain("upper", ConstraintKind::Affine, SmoothFn::affine(vec![(0, 0.01)], -1.0));
        sp
    }

    #[test]
    fn monotone_objective_hits_box_edge() {
        let res = solve(&boxed_scalar(), &SolverOptions::with_tol(1e-9)).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.x[0] - 100.0).abs() < 1e-6, "{}", res.x[0]);
        assert!((res.objective - 101f64.log2()).abs() < 1e-8);
        assert!(res.kkt.complementarity <= 1e-9);
    }

    #[test]
    fn projection_onto_disk() {
        let mut layout = Layout::default();
        layout.push("x", 2);
        // minimise ‖x − (2, 0)‖²
        let obj = SmoothFn::default().with_term(
            vec![AffineRow::var(0), AffineRow::var(1)],
            Kernel::quadratic(vec![1.0, 0.0, 0.0, 1.0], vec![-4.0, 0.0], 4.0),
        );
        let mut sp = SubProblem::new(layout, obj, vec![0.1, 0.3]);
        sp.constrain(
            "disk",
            ConstraintKind::ConeRepresentable,
            SmoothFn::affine(vec![], -1.0).with_term(
                vec![AffineRow::var(0), AffineRow::var(1)],
                Kernel::quadratic(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 0.0),
            ),
        );
        let res = solve(&sp, &SolverOptions::with_tol(1e-10)).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal, "{:?} {:?} {}", res.kkt, res.x, res.iterations);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && res.x[1].abs() < 1e-6, "{:?}", res.x);
    }

    #[test]
    fn infeasible_start_names_constraint() {
        let mut sp = boxed_scalar();
        sp.start = vec![150.0];
        match solve(&sp, &SolverOptions::default()) {
            Err(SolveError::InfeasibleStart { label, value }) => {
                assert_eq!(label, "upper");
                assert!((value - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let res = solve_with_phase_one(&sp, &SolverOptions::with_tol(1e-9)).unwrap();
        assert!((res.x[0] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn equality_constrained_quadratic() {
        // minimise x² + y² s.t. x + y = 2, x ≤ 3
        let mut layout = Layout::default();
        layout.push("x", 2);
        let obj = SmoothFn::default().with_term(
            vec![AffineRow::var(0), AffineRow::var(1)],
            Kernel::quadratic(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 0.0),
        );
        let mut sp = SubProblem::new(layout, obj, vec![2.5, -0.5]);
        sp.constrain("cap", ConstraintKind::Affine, SmoothFn::affine(vec![(0, 1.0)], -3.0));
        sp.equate("sum", AffineRow::new(vec![(0, 1.0), (1, 1.0)], -2.0));
        let res = solve(&sp, &SolverOptions::with_tol(1e-10)).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.x[0] - 1.0).abs() < 1e-7 && (res.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn phase_one_reports_empty_set() {
        let mut sp = boxed_scalar();
        sp.constrain("impossible", ConstraintKind::Affine, SmoothFn::affine(vec![(0, 1.0)], 200.0));
        sp.start = vec![10.0];
        assert!(matches!(
            solve_with_phase_one(&sp, &SolverOptions::default()),
            Err(SolveError::PhaseOneFailed { .. })
        ));
    }
}
