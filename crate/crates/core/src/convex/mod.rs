//! Smooth convex programs with a linear objective and constraints built from
//! linear, square, `x²/r` and `1/r` terms, solved by a primal log-barrier
//! method with Newton steps.
//!
//! Programs are assembled term by term; convexity holds by construction
//! because every nonlinear term must carry a nonnegative coefficient and
//! equality rows must be linear.

mod derivatives;
mod phase1;
mod solver;

use thiserror::Error;

pub use derivatives::ratio_term_derivatives;
pub use phase1::{feasibility_phase, Feasibility};
pub use solver::{solve, solve_with, SolveOptions, SolveResult, SolveStatus};

/// Lower bound given to rate variables appearing as denominators.
pub const RATE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexError {
    #[error("variable {0} needs a finite lower bound")]
    UnboundedBelow(usize),
    #[error("variable {0} has an empty box")]
    EmptyBox(usize),
    #[error("denominator variable {0} must have a positive lower bound")]
    DenominatorBound(usize),
    #[error("term coefficient in constraint {0} makes it nonconvex")]
    Nonconvex(usize),
    #[error("equality constraint {0} must be linear")]
    NonlinearEquality(usize),
    #[error("term in constraint {0} references an unknown variable")]
    UnknownVariable(usize),
    #[error("x²/r is undefined for r = {0}")]
    Domain(f64),
    #[error("equality constraints admit no point strictly inside the bounds")]
    NoInteriorStart,
    #[error("start point has length {got}, program has {expected} variables")]
    StartLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// `coef · x`
    Linear { var: usize, coef: f64 },
    /// `coef · x²`
    Square { var: usize, coef: f64 },
    /// `coef · x² / r`
    Ratio { num: usize, den: usize, coef: f64 },
    /// `coef / r`
    Inverse { den: usize, coef: f64 },
}

impl Term {
    fn is_linear(&self) -> bool {
        matches!(self, Term::Linear { .. })
    }

    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Linear { var, coef } => coef * x[var],
            Term::Square { var, coef } => coef * x[var] * x[var],
            Term::Ratio { num, den, coef } => coef * x[num] * x[num] / x[den],
            Term::Inverse { den, coef } => coef / x[den],
        }
    }

    fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        match *self {
            Term::Linear { var, coef } => grad[var] += scale * coef,
            Term::Square { var, coef } => grad[var] += scale * 2.0 * coef * x[var],
            Term::Ratio { num, den, coef } => {
                let q = x[num] / x[den];
                grad[num] += scale * coef * 2.0 * q;
                grad[den] -= scale * coef * q * q;
            }
            Term::Inverse { den, coef } => grad[den] -= scale * coef / (x[den] * x[den]),
        }
    }

    fn vars(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Term::Linear { var, .. } | Term::Square { var, .. } => (var, None),
            Term::Ratio { num, den, .. } => (num, Some(den)),
            Term::Inverse { den, .. } => (den, None),
        };
        std::iter::once(a).chain(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Left-hand side at `x`.
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// Gradient of the left-hand side, dense.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.terms {
            t.add_gradient(x, 1.0, &mut g);
        }
        g
    }

    /// Amount by which the row is violated at `x`, zero if satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let d = self.lhs(x) - self.rhs;
        match self.sense {
            Sense::Le => d.max(0.0),
            Sense::Eq => d.abs(),
        }
    }

    fn is_linear(&self) -> bool {
        self.terms.iter().all(Term::is_linear)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lb: f64,
    pub ub: f64,
}

/// Minimise `cᵀx` subject to the rows and variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexProgram {
    bounds: Vec<Bounds>,
    cost: Vec<f64>,
    constraints: Vec<Constraint>,
    start: Option<Vec<f64>>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lb, ub]` (`ub` may be infinite) and
    /// objective coefficient `cost`; returns its index.
    pub fn add_var(&mut self, lb: f64, ub: f64, cost: f64) -> usize {
        self.bounds.push(Bounds { lb, ub });
        self.cost.push(cost);
        self.bounds.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<Term>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn add_le(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.add_constraint(terms, Sense::Le, rhs)
    }

    pub fn add_eq(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.add_constraint(terms, Sense::Eq, rhs)
    }

    /// Suggested starting point; used when it lies strictly inside the
    /// bounds and on the equality rows.
    pub fn set_start(&mut self, x: Vec<f64>) {
        self.start = Some(x);
    }

    pub fn start(&self) -> Option<&[f64]> {
        self.start.as_deref()
    }

    pub fn n_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation over rows and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let boxes = self
            .bounds
            .iter()
            .zip(x)
            .map(|(b, v)| (b.lb - v).max(v - b.ub).max(0.0));
        rows.chain(boxes).fold(0.0, f64::max)
    }

    /// Checks the structural requirements the solver relies on.
    pub fn check(&self) -> Result<(), ConvexError> {
        for (j, b) in self.bounds.iter().enumerate() {
            if !b.lb.is_finite() {
                return Err(ConvexError::UnboundedBelow(j));
            }
            if b.ub < b.lb || b.ub.is_nan() {
                return Err(ConvexError::EmptyBox(j));
            }
        }
        let n = self.n_vars();
        for (i, c) in self.constraints.iter().enumerate() {
            if c.sense == Sense::Eq && !c.is_linear() {
                return Err(ConvexError::NonlinearEquality(i));
            }
            for t in &c.terms {
                if t.vars().any(|v| v >= n) {
                    return Err(ConvexError::UnknownVariable(i));
                }
                match *t {
                    Term::Square { coef, .. }
                    | Term::Ratio { coef, .. }
                    | Term::Inverse { coef, .. }
                        if coef < 0.0 =>
                    {
                        return Err(ConvexError::Nonconvex(i))
                    }
                    _ => {}
                }
                if let Term::Ratio { den, .. } | Term::Inverse { den, .. } = *t {
                    if !(self.bounds[den].lb > 0.0) {
                        return Err(ConvexError::DenominatorBound(den));
                    }
                }
            }
        }
        if let Some(s) = &self.start {
            if s.len() != n {
                return Err(ConvexError::StartLength {
                    got: s.len(),
                    expected: n,
                });
            }
        }
        Ok(())
    }
}
