#![allow(dead_code)]

use fogopt::ffbd::Subproblem;
use fogopt::harness::{generate, Range, ScenarioSpec};
use fogopt::model::{RelativeSize, Solution, SystemInstance};
use rand::Rng;

/// Relative tolerance for energies of exact methods to agree.
pub const ENERGY_AGREEMENT: f64 = 1e-6;

/// Small instance that mixes easy, tight and infeasible deadlines.
pub fn small_instance(seed: u64) -> SystemInstance {
    let n = 2 + (seed % 3) as usize;
    let m = 1 + (seed / 3 % 2) as usize;
    let mut spec = ScenarioSpec::custom(n, m, seed);
    spec.alpha = Range::new(0.1, 6.0);
    spec.deadline = 2.0 + (seed % 7) as f64;
    generate(&spec, 0).unwrap()
}

pub fn energy(s: &Option<Solution>) -> Option<f64> {
    s.as_ref().map(|s| s.total_energy)
}

pub fn same_energy(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= ENERGY_AGREEMENT * x.abs().max(y.abs()).max(1e-12),
        _ => false,
    }
}

/// Node with one to five tasks whose total load is spread around the
/// capacity, so both fast tests fire and many cases fall between them.
pub fn random_subproblem(rng: &mut impl Rng) -> Subproblem {
    let caps = [72.0, 72.0, 10.0];
    let k = rng.gen_range(1..=5);
    let load = rng.gen_range(0.3..1.6);
    let mut fog_tasks = Vec::new();
    let mut cloud_tasks = Vec::new();
    for i in 0..k {
        let share = |rng: &mut dyn rand::RngCore, cap: f64| {
            rng.gen_range(0.05..2.0) * cap * load / k as f64
        };
        let input = share(rng, caps[0]);
        let output = share(rng, caps[1]) * 0.2;
        if rng.gen_bool(0.3) {
            cloud_tasks.push((
                i,
                RelativeSize {
                    input,
                    output,
                    cpu: 0.0,
                },
            ));
        } else {
            let cpu = share(rng, caps[2]);
            fog_tasks.push((i, RelativeSize { input, output, cpu }));
        }
    }
    Subproblem {
        node: 0,
        caps,
        fog_tasks,
        cloud_tasks,
    }
}

use fogopt::convex::{Constraint, ConvexProgram, Term};
use nalgebra::{DMatrix, DVector};

/// Gradient agreement demanded of analytic row derivatives, relative to the
/// largest gradient component.
pub const GRADIENT_TOL: f64 = 1e-5;

/// Point strictly inside the variable box; unbounded variables stay within
/// ten units of their lower bound.
pub fn interior_point(p: &ConvexProgram, rng: &mut impl Rng) -> Vec<f64> {
    p.bounds()
        .iter()
        .map(|b| {
            let hi = b.ub.min(b.lb + 10.0);
            b.lb + (hi - b.lb) * rng.gen_range(0.05..0.95)
        })
        .collect()
}

/// Largest deviation between the analytic gradient of a row and a central
/// difference, over the largest analytic component.
pub fn gradient_error(row: &Constraint, x: &[f64]) -> f64 {
    let g = row.gradient(x);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut worst = 0.0f64;
    let mut y = x.to_vec();
    for k in 0..x.len() {
        if g[k] == 0.0 && !row_uses(row, k) {
            continue;
        }
        let h = 1e-6 * x[k].abs().max(1e-3);
        y[k] = x[k] + h;
        let up = row.lhs(&y);
        y[k] = x[k] - h;
        let down = row.lhs(&y);
        y[k] = x[k];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g[k] - fd).abs() / scale);
    }
    worst
}

fn row_uses(row: &Constraint, k: usize) -> bool {
    row.terms.iter().any(|t| match *t {
        Term::Linear { var, .. } | Term::Square { var, .. } => var == k,
        Term::Ratio { num, den, .. } => num == k || den == k,
        Term::Inverse { den, .. } => den == k,
    })
}

/// Dense LP `min cᵀx, Ax ≤ b, lb ≤ x ≤ ub` with a strictly feasible point.
pub struct RandomLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl RandomLp {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=4);
        let lb: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let ub: Vec<f64> = lb.iter().map(|l| l + rng.gen_range(1.0..4.0)).collect();
        let x0: Vec<f64> = (0..n)
            .map(|k| lb[k] + (ub[k] - lb[k]) * rng.gen_range(0.2..0.8))
            .collect();
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let b = a
            .iter()
            .map(|row| {
                row.iter().zip(&x0).map(|(r, x)| r * x).sum::<f64>() + rng.gen_range(0.1..1.0)
            })
            .collect();
        let c = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        Self { c, a, b, lb, ub }
    }

    pub fn program(&self) -> ConvexProgram {
        let mut p = ConvexProgram::new();
        for k in 0..self.c.len() {
            p.add_var(self.lb[k], self.ub[k], self.c[k]);
        }
        for (row, rhs) in self.a.iter().zip(&self.b) {
            let terms = row
                .iter()
                .enumerate()
                .map(|(var, &coef)| Term::Linear { var, coef })
                .collect();
            p.add_le(terms, *rhs);
        }
        p
    }

    /// Optimum over every basic feasible point.
    pub fn vertex_optimum(&self) -> f64 {
        let n = self.c.len();
        let mut rows: Vec<(Vec<f64>, f64)> =
            self.a.iter().cloned().zip(self.b.iter().copied()).collect();
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            rows.push((e.clone(), self.ub[k]));
            e[k] = -1.0;
            rows.push((e, -self.lb[k]));
        }
        let mut best = f64::INFINITY;
        let mut pick = Vec::new();
        subsets(rows.len(), n, 0, &mut pick, &mut |set| {
            let m = DMatrix::from_fn(n, n, |r, c| rows[set[r]].0[c]);
            let rhs = DVector::from_iterator(n, set.iter().map(|&s| rows[s].1));
            let Some(x) = m.lu().solve(&rhs) else { return };
            let feasible = rows
                .iter()
                .all(|(r, b)| r.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() <= b + 1e-9);
            if feasible && x.iter().all(|v| v.is_finite()) {
                best = best.min(self.c.iter().zip(x.iter()).map(|(c, v)| c * v).sum());
            }
        });
        best
    }
}

fn subsets(n: usize, k: usize, from: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for s in from..n {
        pick.push(s);
        subsets(n, k, s + 1, pick, f);
        pick.pop();
    }
}
