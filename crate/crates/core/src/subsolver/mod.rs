//! Convex subproblem representation and a log-barrier interior-point solver.
//!
//! A [`SubProblem`] minimises a convex [`SmoothFn`] subject to convex
//! inequalities `f_i(x) ≤ 0` and affine equalities. Planners phrase their
//! concave maximisations as minimisation of the negated objective; results
//! report the objective back in the maximisation sense.

mod function;
mod ipm;

pub use function::{AffineRow, Kernel, SmoothFn, Term};
pub use ipm::{solve, solve_with_phase_one, SolverOptions};

use thiserror::Error;

/// Tag describing how a constraint function is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Affine,
    ConvexSmooth,
    /// Quadratic or norm constraints that a conic solver would treat as
    /// second-order cones.
    ConeRepresentable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
    /// Feasible iff `f(x) ≤ 0`.
    pub f: SmoothFn,
}

/// `row·x = 0` (the row's offset plays the role of `−b`).
#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub label: String,
    pub row: AffineRow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

/// Named contiguous blocks of the decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    /// Appends a block and returns its first index.
    pub fn push(&mut self, name: &'static str, len: usize) -> usize {
        let start = self.len();
        self.blocks.push(Block { name, start, len });
        start
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn slice<'a>(&self, x: &'a [f64], name: &str) -> &'a [f64] {
        let b = self
            .get(name)
            .unwrap_or_else(|| panic!("no block named {name}"));
        &x[b.start..b.start + b.len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubProblem {
    pub layout: Layout,
    /// Convex function to minimise (the negated concave objective).
    pub objective: SmoothFn,
    pub constraints: Vec<Constraint>,
    pub equalities: Vec<Equality>,
    pub start: Vec<f64>,
}

impl SubProblem {
    pub fn new(layout: Layout, objective: SmoothFn, start: Vec<f64>) -> Self {
        Self {
            layout,
            objective,
            constraints: Vec::new(),
            equalities: Vec::new(),
            start,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn constrain(&mut self, label: impl Into<String>, kind: ConstraintKind, f: SmoothFn) {
        self.constraints.push(Constraint {
            label: label.into(),
            kind,
            f,
        });
    }

    pub fn equate(&mut self, label: impl Into<String>, row: AffineRow) {
        self.equalities.push(Equality {
            label: label.into(),
            row,
        });
    }

    /// Objective in the maximisation sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        -self.objective.value(x)
    }

    /// Largest inequality value and its label (`None` without inequalities).
    pub fn worst_constraint(&self, x: &[f64]) -> Option<(&str, f64)> {
        self.constraints
            .iter()
            .map(|c| (c.label.as_str(), c.f.value(x)))
            .fold(None, |best, (l, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((l, v)),
            })
    }

    pub fn max_equality_residual(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| e.row.eval(x).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    /// Newton system could not be factorised even after regularisation, or
    /// the line search stalled.
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖∇f0 + Σλ∇f_i + Aᵀν‖∞`.
    pub stationarity: f64,
    /// Largest equality residual or positive inequality value.
    pub primal: f64,
    /// Surrogate duality gap `Σ λ_i (−f_i)`.
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub layout: Layout,
    /// Objective in the maximisation sense.
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub status: SolveStatus,
    pub multipliers: Vec<f64>,
}

impl SolveResult {
    pub fn block(&self, name: &str) -> &[f64] {
        self.layout.slice(&self.x, name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("warm start violates `{label}` (value {value:.3e})")]
    InfeasibleStart { label: String, value: f64 },
    #[error("objective is undefined at the warm start")]
    ObjectiveDomain,
    #[error("no strictly feasible point found; `{label}` stays at {value:.3e}")]
    PhaseOneFailed { label: String, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid tolerance {0}")]
    Tolerance(f64),
}
