//! Smooth convex functions assembled from affine maps and a handful of
//! convex kernels. Each kernel knows its value, gradient and Hessian in its
//! own small argument space; [`SmoothFn`] maps those back to the decision
//! vector.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

/// Affine scalar `Σ coef·x[idx] + offset`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineRow {
    pub coefs: Vec<(usize, f64)>,
    pub offset: f64,
}

impl AffineRow {
    pub fn new(coefs: Vec<(usize, f64)>, offset: f64) -> Self {
        Self { coefs, offset }
    }

    pub fn var(idx: usize) -> Self {
        Self::new(vec![(idx, 1.0)], 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.offset
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for c in &mut self.coefs {
            c.1 *= s;
        }
        self.offset *= s;
        self
    }
}

/// Convex function of a small argument vector `u`. Values outside the
/// domain are `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `uᵀQu + lᵀu + c` with `Q` symmetric positive semi-definite
    /// (row-major, `m × m`).
    Quadratic { q: Vec<f64>, l: Vec<f64>, c: f64 },
    /// `−scale·log2(1 + u)` for scalar `u > −1`, `scale ≥ 0`.
    NegLog2 { scale: f64 },
    /// `scale·‖u‖³`, `scale ≥ 0`.
    NormCube { scale: f64 },
    /// `scale·Σ_{i<m−1} u_i² / u_{m−1}` on `u_{m−1} > 0`, `scale ≥ 0`.
    QuadOverLin { scale: f64 },
    /// `Σ c·u^p` for scalar `u > 0`, each term convex (`c·p·(p−1) ≥ 0`).
    Powers { terms: Vec<(f64, f64)> },
}

impl Kernel {
    pub fn quadratic(q: Vec<f64>, l: Vec<f64>, c: f64) -> Self {
        debug_assert_eq!(q.len(), l.len() * l.len());
        Kernel::Quadratic { q, l, c }
    }

    pub fn powers(terms: Vec<(f64, f64)>) -> Self {
        debug_assert!(terms.iter().all(|(c, p)| c * p * (p - 1.0) >= 0.0));
        Kernel::Powers { terms }
    }

    /// Value, and optionally gradient and Hessian (row-major `m × m`).
    pub fn eval(&self, u: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let m = u.len();
        match self {
            Kernel::Quadratic { q, l, c } => {
                let mut val = *c;
                let mut qu = vec![0.0; m];
                for i in 0..m {
                    for j in 0..m {
                        qu[i] += q[i * m + j] * u[j];
                    }
                    val += u[i] * qu[i] + l[i] * u[i];
                }
                if let Some(g) = grad {
                    for i in 0..m {
                        g[i] = 2.0 * qu[i] + l[i];
                    }
                }
                if let Some(h) = hess {
                    for (hi, qi) in h.iter_mut().zip(q) {
                        *hi = 2.0 * qi;
                    }
                }
                val
            }
            Kernel::NegLog2 { scale } => {
                let y = 1.0 + u[0];
                if !(y > 0.0) {
                    return f64::INFINITY;
                }
                if let Some(g) = grad {
                    g[0] = -scale / (y * LN_2);
                }
                if let Some(h) = hess {
                    h[0] = scale / (y * y * LN_2);
                }
                -scale * y.log2()
            }
            Kernel::NormCube { scale } => {
                let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if let Some(g) = grad {
                    for i in 0..m {
                        g[i] = 3.0 * scale * r * u[i];
                    }
                }
                if let Some(h) = hess {
                    for i in 0..m {
                        for j in 0..m {
                            let mut v = if r > 0.0 { u[i] * u[j] / r } else { 0.0 };
                            if i == j {
                                v += r;
                            }
                            h[i * m + j] = 3.0 * scale * v;
                        }
                    }
                }
                scale * r.powi(3)
            }
            Kernel::QuadOverLin { scale } => {
                let y = u[m - 1];
                if !(y > 0.0) {
                    return f64::INFINITY;
                }
                let ss: f64 = u[..m - 1].iter().map(|x| x * x).sum();
                if let Some(g) = grad {
                    for i in 0..m - 1 {
                        g[i] = 2.0 * scale * u[i] / y;
                    }
                    g[m - 1] = -scale * ss / (y * y);
                }
                if let Some(h) = hess {
                    h.fill(0.0);
                    for i in 0..m - 1 {
                        h[i * m + i] = 2.0 * scale / y;
                        let off = -2.0 * scale * u[i] / (y * y);
                        h[i * m + m - 1] = off;
                        h[(m - 1) * m + i] = off;
                    }
                    h[m * m - 1] = 2.0 * scale * ss / (y * y * y);
                }
                scale * ss / y
            }
            Kernel::Powers { terms } => {
                let x = u[0];
                if !(x > 0.0) {
                    return f64::INFINITY;
                }
                let mut val = 0.0;
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for &(c, p) in terms {
                    let xp = x.powf(p);
                    val += c * xp;
                    d1 += c * p * xp / x;
                    d2 += c * p * (p - 1.0) * xp / (x * x);
                }
                if let Some(g) = grad {
                    g[0] = d1;
                }
                if let Some(h) = hess {
                    h[0] = d2;
                }
                val
            }
        }
    }
}

/// A kernel applied to affine images of the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub rows: Vec<AffineRow>,
    pub kernel: Kernel,
}

/// Convex function `Σ linear·x + constant + Σ terms`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SmoothFn {
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    pub terms: Vec<Term>,
}

impl SmoothFn {
    pub fn affine(linear: Vec<(usize, f64)>, constant: f64) -> Self {
        Self {
            linear,
            constant,
            terms: Vec::new(),
        }
    }

    pub fn from_row(row: AffineRow) -> Self {
        Self::affine(row.coefs, row.offset)
    }

    pub fn with_term(mut self, rows: Vec<AffineRow>, kernel: Kernel) -> Self {
        self.terms.push(Term { rows, kernel });
        self
    }

    pub fn add_term(&mut self, rows: Vec<AffineRow>, kernel: Kernel) {
        self.terms.push(Term { rows, kernel });
    }

    pub fn add_linear(&mut self, idx: usize, coef: f64) {
        self.linear.push((idx, coef));
    }

    pub fn is_affine(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sorted, de-duplicated indices the function depends on.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.linear.iter().map(|&(i, _)| i).collect();
        for t in &self.terms {
            for r in &t.rows {
                s.extend(r.coefs.iter().map(|&(i, _)| i));
            }
        }
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None, None)
    }

    /// Evaluates the function. When given, `grad` (length of `x`) is
    /// accumulated into and `hess` receives `weight × ∇²f` added in place.
    /// Only the lower triangle of `hess` is written.
    pub fn eval(
        &self,
        x: &[f64],
        mut grad: Option<&mut [f64]>,
        mut hess: Option<(f64, &mut DMatrix<f64>)>,
    ) -> f64 {
        let mut val = self.constant;
        for &(i, c) in &self.linear {
            val += c * x[i];
            if let Some(g) = grad.as_deref_mut() {
                g[i] += c;
            }
        }
        let mut u = Vec::new();
        let mut gu = Vec::new();
        let mut hu = Vec::new();
        for t in &self.terms {
            let m = t.rows.len();
            u.clear();
            u.extend(t.rows.iter().map(|r| r.eval(x)));
            gu.clear();
            gu.resize(m, 0.0);
            hu.clear();
            hu.resize(m * m, 0.0);
            let want_g = grad.is_some();
            let want_h = hess.is_some();
            let v = t.kernel.eval(
                &u,
                want_g.then_some(gu.as_mut_slice()),
                want_h.then_some(hu.as_mut_slice()),
            );
            if !v.is_finite() {
                return f64::INFINITY;
            }
            val += v;
            if let Some(g) = grad.as_deref_mut() {
                for (r, gr) in t.rows.iter().zip(&gu) {
                    for &(i, c) in &r.coefs {
                        g[i] += gr * c;
                    }
                }
            }
            if let Some((w, h)) = hess.as_mut() {
                let n = h.nrows();
                let hs = h.as_mut_slice();
                for a in 0..m {
                    for b in 0..m {
                        let k = *w * hu[a * m + b];
                        if k == 0.0 {
                            continue;
                        }
                        for &(i, ci) in &t.rows[a].coefs {
                            let kc = k * ci;
                            for &(j, cj) in &t.rows[b].coefs {
                                if i >= j {
                                    hs[j * n + i] += kc * cj;
                                }
                            }
                        }
                    }
                }
            }
        }
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_gradient;

    fn check_kernel(k: Kernel, u: &[f64]) {
        let m = u.len();
        let mut g = vec![0.0; m];
        let mut h = vec![0.0; m * m];
        k.eval(u, Some(&mut g), Some(&mut h));
        let (fd, bad) = finite_diff_gradient(&|x: &[f64]| k.eval(x, None, None), u, &vec![1e-6; m]);
        assert!(!bad);
        for i in 0..m {
            assert!((fd[i] - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{k:?} grad {i}");
        }
        for j in 0..m {
            let gj = |x: &[f64]| {
                let mut gg = vec![0.0; m];
                k.eval(x, Some(&mut gg), None);
                gg[j]
            };
            let (col, _) = finite_diff_gradient(&gj, u, &vec![1e-6; m]);
            for i in 0..m {
                let hv = h[i * m + j];
                assert!((col[i] - hv).abs() < 1e-5 * (1.0 + hv.abs()), "{k:?} hess {i},{j}");
            }
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        check_kernel(Kernel::quadratic(vec![2.0, 0.5, 0.5, 1.0], vec![1.0, -3.0], 4.0), &[0.3, -1.2]);
        check_kernel(Kernel::NegLog2 { scale: 2.5 }, &[3.0]);
        check_kernel(Kernel::NormCube { scale: 0.7 }, &[1.5, -2.0]);
        check_kernel(Kernel::QuadOverLin { scale: 1.3 }, &[0.4, -0.9, 2.0]);
        check_kernel(Kernel::powers(vec![(2.0, 3.0), (5.0, -1.0), (1.0, 1.0)]), &[1.7]);
    }

    #[test]
    fn kernels_report_domain_violations() {
        assert!(Kernel::NegLog2 { scale: 1.0 }.eval(&[-1.0], None, None).is_infinite());
        assert!(Kernel::QuadOverLin { scale: 1.0 }.eval(&[1.0, 0.0], None, None).is_infinite());
        assert!(Kernel::powers(vec![(1.0, -1.0)]).eval(&[-0.5], None, None).is_infinite());
    }

    #[test]
    fn smooth_fn_assembles_chain_rule() {
        // f(x) = x0 + 2 + ‖(x1 − x2, 3x2)‖³
        let f = SmoothFn::affine(vec![(0, 1.0)], 2.0).with_term(
            vec![
                AffineRow::new(vec![(1, 1.0), (2, -1.0)], 0.0),
                AffineRow::new(vec![(2, 3.0)], 0.0),
            ],
            Kernel::NormCube { scale: 1.0 },
        );
        let x = [0.5, 1.0, 0.25];
        let mut g = vec![0.0; 3];
        let mut h = DMatrix::zeros(3, 3);
        let v = f.eval(&x, Some(&mut g), Some((1.0, &mut h)));
        h.fill_upper_triangle_with_lower_triangle();
        let r = (0.75f64.powi(2) + 0.75f64.powi(2)).sqrt();
        assert!((v - (2.5 + r.powi(3))).abs() < 1e-12);
        let (fd, _) = finite_diff_gradient(&|y: &[f64]| f.value(y), &x, &[1e-6; 3]);
        for i in 0..3 {
            assert!((fd[i] - g[i]).abs() < 1e-6);
        }
        assert_eq!(f.support(), vec![0, 1, 2]);
        assert!((h[(1, 2)] - h[(2, 1)]).abs() < 1e-12);
    }
}
