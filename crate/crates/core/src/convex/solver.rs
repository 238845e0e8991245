//! Primal log-barrier method.
//!
//! The program is presolved (fixed variables substituted, singleton rows
//! turned into bounds), split into independent blocks joined by nonlinear
//! and equality rows, and linear rows that straddle blocks are handled as a
//! low-rank update of the block-diagonal Newton system.

use nalgebra::{DMatrix, DVector};

use super::phase1::{phase_one, PhaseOne};
use super::{ConvexError, ConvexProgram, Sense, Term};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target bound on the duality gap.
    pub tol: f64,
    /// Initial barrier weight.
    pub mu0: f64,
    /// Divisor applied to the barrier weight after each centering.
    pub mu_factor: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            mu0: 10.0,
            mu_factor: 10.0,
            max_outer: 200,
            max_inner: 100,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub objective_value: f64,
    pub newton_iterations: usize,
    pub outer_iterations: usize,
    /// Bound on the gap between `objective_value` and the optimum.
    pub kkt_residual: f64,
    /// Largest row or bound violation of `point` in the original program.
    /// Nonzero only when the feasible set has no interior and the rows had
    /// to be relaxed slightly.
    pub max_violation: f64,
    /// Objective at the end of every centering step.
    pub objective_trace: Vec<f64>,
    /// Optimal total slack of the feasibility phase when infeasible.
    pub infeasibility: f64,
    /// Barrier weight `t` of the last centering. Row multipliers
    /// `1 / (t * slack)` taken at `point` are dual feasible for linear rows.
    pub barrier_weight: f64,
}

impl SolveResult {
    /// Valid lower bound on the optimum when the status is optimal.
    pub fn lower_bound(&self) -> f64 {
        self.objective_value - self.kkt_residual
    }

    fn infeasible(n: usize, slack: f64, newton: usize) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            point: vec![f64::NAN; n],
            objective_value: f64::INFINITY,
            newton_iterations: newton,
            outer_iterations: 0,
            kkt_residual: f64::INFINITY,
            max_violation: f64::INFINITY,
            objective_trace: Vec::new(),
            infeasibility: slack,
            barrier_weight: 0.0,
        }
    }
}

pub fn solve(program: &ConvexProgram, tol: f64) -> Result<SolveResult, ConvexError> {
    solve_with(program, &SolveOptions::with_tol(tol))
}

pub fn solve_with(
    program: &ConvexProgram,
    opts: &SolveOptions,
) -> Result<SolveResult, ConvexError> {
    program.check()?;
    let n_orig = program.n_vars();
    let mut cp = match Compiled::build(program) {
        Some(cp) => cp,
        None => return Ok(SolveResult::infeasible(n_orig, f64::INFINITY, 0)),
    };
    let x0 = cp.start_point(program.start())?;
    let (x, newton0) = match phase_one(&cp, x0, opts) {
        PhaseOne::Interior { point, newton } => (point, newton),
        PhaseOne::Borderline {
            point,
            relax,
            newton,
        } => {
            for (row, amount) in relax {
                cp.rows[row].rhs += amount;
            }
            (point, newton)
        }
        PhaseOne::Infeasible { slack, newton } => {
            return Ok(SolveResult::infeasible(n_orig, slack, newton))
        }
    };
    let blocks = Blocks::build(&cp);
    let run = barrier(&cp, &blocks, x, opts, &mut NoMonitor);
    let point = cp.expand(&run.x);
    Ok(SolveResult {
        status: if run.converged {
            SolveStatus::Optimal
        } else {
            SolveStatus::IterationLimit
        },
        objective_value: program.objective(&point),
        max_violation: program.max_violation(&point),
        point,
        newton_iterations: newton0 + run.newton,
        outer_iterations: run.outer,
        kkt_residual: run.gap,
        objective_trace: run.trace,
        infeasibility: 0.0,
        barrier_weight: run.t,
    })
}

/// A `≤` row over free variables: `Σ terms ≤ rhs`.
#[derive(Debug, Clone)]
pub(super) struct Row {
    pub terms: Vec<Term>,
    pub rhs: f64,
    pub linear: bool,
}

impl Row {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum::<f64>() - self.rhs
    }
}

#[derive(Debug, Clone)]
pub(super) struct EqRow {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Presolved program over the free variables only.
#[derive(Debug, Clone)]
pub(super) struct Compiled {
    pub n: usize,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
    pub eqs: Vec<EqRow>,
    free: Vec<usize>,
    fixed: Vec<Option<f64>>,
}

fn scale_of(v: f64) -> f64 {
    v.abs().max(1.0)
}

impl Compiled {
    /// Presolve. `None` means the program was found infeasible on the way.
    pub fn build(p: &ConvexProgram) -> Option<Self> {
        let n = p.n_vars();
        let mut lb: Vec<f64> = p.bounds().iter().map(|b| b.lb).collect();
        let mut ub: Vec<f64> = p.bounds().iter().map(|b| b.ub).collect();
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for j in 0..n {
            if lb[j] == ub[j] {
                fixed[j] = Some(lb[j]);
            }
        }

        // singleton rows become bounds until nothing changes
        for _ in 0..=p.constraints().len() {
            let mut changed = false;
            for c in p.constraints() {
                let (terms, constant) = fold(&c.terms, &fixed);
                let [Term::Linear { var, coef }] = terms[..] else {
                    continue;
                };
                if coef == 0.0 || fixed[var].is_some() {
                    continue;
                }
                let bound = (c.rhs - constant) / coef;
                let slack = 1e-12 * scale_of(bound);
                match c.sense {
                    Sense::Eq => {
                        if bound < lb[var] - slack || bound > ub[var] + slack {
                            return None;
                        }
                        fixed[var] = Some(bound.clamp(lb[var], ub[var]));
                        changed = true;
                        continue;
                    }
                    Sense::Le if coef > 0.0 => {
                        if bound < ub[var] {
                            ub[var] = bound;
                            changed = true;
                        }
                    }
                    Sense::Le => {
                        if bound > lb[var] {
                            lb[var] = bound;
                            changed = true;
                        }
                    }
                }
                if lb[var] > ub[var] + slack {
                    return None;
                }
                if ub[var] - lb[var] <= slack {
                    fixed[var] = Some(0.5 * (lb[var] + ub[var]));
                }
            }
            if !changed {
                break;
            }
        }

        let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
        let mut index = vec![usize::MAX; n];
        for (k, &j) in free.iter().enumerate() {
            index[j] = k;
        }
        let remap = |t: &Term| match *t {
            Term::Linear { var, coef } => Term::Linear {
                var: index[var],
                coef,
            },
            Term::Square { var, coef } => Term::Square {
                var: index[var],
                coef,
            },
            Term::Ratio { num, den, coef } => Term::Ratio {
                num: index[num],
                den: index[den],
                coef,
            },
            Term::Inverse { den, coef } => Term::Inverse {
                den: index[den],
                coef,
            },
        };

        let mut rows = Vec::new();
        let mut eqs = Vec::new();
        for c in p.constraints() {
            let (terms, constant) = fold(&c.terms, &fixed);
            let rhs = c.rhs - constant;
            let singleton_linear = terms.len() == 1 && terms[0].is_linear();
            if terms.is_empty() || singleton_linear {
                // constant rows are checked here; singleton rows live in the bounds
                if terms.is_empty() {
                    let bad = match c.sense {
                        Sense::Le => 0.0 > rhs + 1e-9 * scale_of(c.rhs),
                        Sense::Eq => rhs.abs() > 1e-9 * scale_of(c.rhs),
                    };
                    if bad {
                        return None;
                    }
                }
                continue;
            }
            let terms: Vec<Term> = terms.iter().map(remap).collect();
            match c.sense {
                Sense::Le => {
                    let linear = terms.iter().all(Term::is_linear);
                    rows.push(Row { terms, rhs, linear });
                }
                Sense::Eq => {
                    let coefs = terms
                        .iter()
                        .map(|t| match *t {
                            Term::Linear { var, coef } => (var, coef),
                            _ => unreachable!("checked linear"),
                        })
                        .collect();
                    eqs.push(EqRow { coefs, rhs });
                }
            }
        }

        Some(Self {
            n: free.len(),
            lb: free.iter().map(|&j| lb[j]).collect(),
            ub: free.iter().map(|&j| ub[j]).collect(),
            cost: free.iter().map(|&j| p.cost()[j]).collect(),
            rows,
            eqs,
            free,
            fixed,
        })
    }

    /// Full-length point from free values.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &j) in self.free.iter().enumerate() {
            full[j] = x[k];
        }
        full
    }

    /// Number of barrier terms.
    pub fn barrier_terms(&self) -> usize {
        self.n + self.ub.iter().filter(|u| u.is_finite()).count() + self.rows.len()
    }

    pub fn inside_box(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(j, v)| *v > self.lb[j] && *v < self.ub[j])
    }

    /// A point strictly inside the bounds that satisfies the equality rows.
    pub fn start_point(&self, hint: Option<&[f64]>) -> Result<Vec<f64>, ConvexError> {
        let default: Vec<f64> = (0..self.n)
            .map(|j| {
                if self.ub[j].is_finite() {
                    0.5 * (self.lb[j] + self.ub[j])
                } else {
                    self.lb[j] + scale_of(self.lb[j])
                }
            })
            .collect();
        let mut candidates = Vec::new();
        if let Some(h) = hint {
            let x: Vec<f64> = self.free.iter().map(|&j| h[j]).collect();
            if x.iter().all(|v| v.is_finite()) {
                // pull the hint strictly inside the box
                let x = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let mid = default[j];
                        if v > self.lb[j] && v < self.ub[j] {
                            v
                        } else {
                            0.9 * v.clamp(self.lb[j], self.ub[j].min(f64::MAX)) + 0.1 * mid
                        }
                    })
                    .collect();
                candidates.push(x);
            }
        }
        candidates.push(default);
        for x in candidates {
            if let Some(p) = self.project(x) {
                if self.inside_box(&p) {
                    return Ok(p);
                }
            }
        }
        Err(ConvexError::NoInteriorStart)
    }

    /// Least-squares projection onto the equality rows.
    fn project(&self, mut x: Vec<f64>) -> Option<Vec<f64>> {
        if self.eqs.is_empty() {
            return Some(x);
        }
        let m = self.eqs.len();
        let mut a = DMatrix::<f64>::zeros(m, self.n);
        let mut r = DVector::<f64>::zeros(m);
        for (i, e) in self.eqs.iter().enumerate() {
            let mut lhs = 0.0;
            for &(v, c) in &e.coefs {
                a[(i, v)] += c;
                lhs += c * x[v];
            }
            r[i] = lhs - e.rhs;
        }
        if r.amax() <= 1e-13 {
            return Some(x);
        }
        let aat = &a * a.transpose();
        let y = match aat.clone().lu().solve(&r) {
            Some(y) => y,
            None => aat.svd(true, true).solve(&r, 1e-12).ok()?,
        };
        let step = a.transpose() * y;
        for j in 0..self.n {
            x[j] -= step[j];
        }
        Some(x)
    }
}

/// Splits terms into those on free variables and the constant part.
fn fold(terms: &[Term], fixed: &[Option<f64>]) -> (Vec<Term>, f64) {
    let mut out = Vec::with_capacity(terms.len());
    let mut constant = 0.0;
    for t in terms {
        match *t {
            Term::Linear { var, coef } => match fixed[var] {
                Some(v) => constant += coef * v,
                None => out.push(*t),
            },
            Term::Square { var, coef } => match fixed[var] {
                Some(v) => constant += coef * v * v,
                None => out.push(*t),
            },
            Term::Ratio { num, den, coef } => match (fixed[num], fixed[den]) {
                (Some(x), Some(r)) => constant += coef * x * x / r,
                (Some(x), None) => {
                    if x != 0.0 {
                        out.push(Term::Inverse {
                            den,
                            coef: coef * x * x,
                        });
                    }
                }
                (None, Some(r)) => out.push(Term::Square {
                    var: num,
                    coef: coef / r,
                }),
                (None, None) => out.push(*t),
            },
            Term::Inverse { den, coef } => match fixed[den] {
                Some(r) => constant += coef / r,
                None => out.push(*t),
            },
        }
    }
    // merge repeated linear entries so singleton detection sees through them
    if out.len() > 1 && out.iter().all(Term::is_linear) {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for t in &out {
            if let Term::Linear { var, coef } = *t {
                match merged.iter_mut().find(|(v, _)| *v == var) {
                    Some(e) => e.1 += coef,
                    None => merged.push((var, coef)),
                }
            }
        }
        out = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(var, coef)| Term::Linear { var, coef })
            .collect();
    }
    (out, constant)
}

fn add_hessian(t: &Term, x: &[f64], w: f64, k: &mut DMatrix<f64>) {
    match *t {
        Term::Linear { .. } => {}
        Term::Square { var, coef } => k[(var, var)] += w * 2.0 * coef,
        Term::Ratio { num, den, coef } => {
            let r = x[den];
            let q = x[num] / r;
            let s = w * coef * 2.0 / r;
            k[(num, num)] += s;
            k[(num, den)] -= s * q;
            k[(den, num)] -= s * q;
            k[(den, den)] += s * q * q;
        }
        Term::Inverse { den, coef } => {
            let r = x[den];
            k[(den, den)] += w * 2.0 * coef / (r * r * r);
        }
    }
}

fn localize(t: &Term, local: &[usize]) -> Term {
    match *t {
        Term::Linear { var, coef } => Term::Linear {
            var: local[var],
            coef,
        },
        Term::Square { var, coef } => Term::Square {
            var: local[var],
            coef,
        },
        Term::Ratio { num, den, coef } => Term::Ratio {
            num: local[num],
            den: local[den],
            coef,
        },
        Term::Inverse { den, coef } => Term::Inverse {
            den: local[den],
            coef,
        },
    }
}

struct Comp {
    vars: Vec<usize>,
    rows: Vec<usize>,
    local_terms: Vec<Vec<Term>>,
    eqs: Vec<Vec<(usize, f64)>>,
}

struct Spanning {
    row: usize,
    /// (component, local coefficients)
    parts: Vec<(usize, Vec<(usize, f64)>)>,
}

pub(super) struct Blocks {
    comps: Vec<Comp>,
    spanning: Vec<Spanning>,
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

impl Blocks {
    pub fn build(cp: &Compiled) -> Self {
        let n = cp.n;
        let mut parent: Vec<usize> = (0..n).collect();
        let union = |parent: &mut Vec<usize>, vars: &mut dyn Iterator<Item = usize>| {
            if let Some(first) = vars.next() {
                let ra = find(parent, first);
                for v in vars {
                    let rb = find(parent, v);
                    if rb != ra {
                        parent[rb] = ra;
                    }
                }
            }
        };
        for row in cp.rows.iter().filter(|r| !r.linear) {
            union(&mut parent, &mut row.terms.iter().flat_map(|t| t.vars()));
        }
        for e in &cp.eqs {
            union(&mut parent, &mut e.coefs.iter().map(|(v, _)| *v));
        }

        let mut comp_of_root = vec![usize::MAX; n];
        let mut comp_of = vec![0; n];
        let mut local = vec![0; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let r = find(&mut parent, v);
            if comp_of_root[r] == usize::MAX {
                comp_of_root[r] = groups.len();
                groups.push(Vec::new());
            }
            let c = comp_of_root[r];
            comp_of[v] = c;
            local[v] = groups[c].len();
            groups[c].push(v);
        }

        let row_comps = |row: &Row| {
            let mut cs: Vec<usize> = row
                .terms
                .iter()
                .flat_map(|t| t.vars())
                .map(|v| comp_of[v])
                .collect();
            cs.sort_unstable();
            cs.dedup();
            cs
        };
        let n_spanning = cp.rows.iter().filter(|r| row_comps(r).len() > 1).count();

        // many straddling rows make the low-rank update more expensive than
        // a single dense block
        if groups.len() > 1 && n_spanning * 2 > n {
            return Self::dense(cp);
        }

        let mut comps: Vec<Comp> = groups
            .into_iter()
            .map(|vars| Comp {
                vars,
                rows: Vec::new(),
                local_terms: Vec::new(),
                eqs: Vec::new(),
            })
            .collect();
        let mut spanning = Vec::new();
        for (i, row) in cp.rows.iter().enumerate() {
            let cs = row_comps(row);
            if cs.len() == 1 {
                let c = &mut comps[cs[0]];
                c.rows.push(i);
                c.local_terms
                    .push(row.terms.iter().map(|t| localize(t, &local)).collect());
            } else {
                let parts = cs
                    .iter()
                    .map(|&c| {
                        let coefs = row
                            .terms
                            .iter()
                            .filter_map(|t| match *t {
                                Term::Linear { var, coef } if comp_of[var] == c => {
                                    Some((local[var], coef))
                                }
                                _ => None,
                            })
                            .collect();
                        (c, coefs)
                    })
                    .collect();
                spanning.push(Spanning { row: i, parts });
            }
        }
        for e in &cp.eqs {
            let c = comp_of[e.coefs[0].0];
            comps[c]
                .eqs
                .push(e.coefs.iter().map(|&(v, a)| (local[v], a)).collect());
        }
        Self { comps, spanning }
    }

    fn dense(cp: &Compiled) -> Self {
        let comp = Comp {
            vars: (0..cp.n).collect(),
            rows: (0..cp.rows.len()).collect(),
            local_terms: cp.rows.iter().map(|r| r.terms.clone()).collect(),
            eqs: cp.eqs.iter().map(|e| e.coefs.clone()).collect(),
        };
        Self {
            comps: vec![comp],
            spanning: Vec::new(),
        }
    }

    /// Newton direction of the barrier function with gradient `g`, or `None`
    /// when a linear system is singular.
    ///
    /// Rows straddling blocks keep explicit multipliers: with `K` the
    /// block-diagonal part and `U` the straddling rows, the step solves
    /// `K dx + U λ = -g_rest`, `Uᵀdx - diag(f²) λ = f`, which is the Newton
    /// system with the rank-one barrier terms of those rows eliminated but
    /// stays well scaled as the rows become active. Two rounds of iterative
    /// refinement clean up the cancellation left in the block solves.
    fn newton(&self, cp: &Compiled, x: &[f64], f: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let p = self.spanning.len();
        let mut g_rest = g.to_vec();
        for s in &self.spanning {
            let w = -1.0 / f[s.row];
            for t in &cp.rows[s.row].terms {
                t.add_gradient(x, -w, &mut g_rest);
            }
        }

        let mut facts = Vec::with_capacity(self.comps.len());
        for comp in &self.comps {
            facts.push(self.factor(comp, cp, x, f)?);
        }
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.comps.len()];
        for (k, s) in self.spanning.iter().enumerate() {
            for (pi, (c, _)) in s.parts.iter().enumerate() {
                cols[*c].push((k, pi));
            }
        }
        let mut s_mat = DMatrix::<f64>::zeros(p, p);
        for k in 0..p {
            let fk = f[self.spanning[k].row];
            s_mat[(k, k)] = fk * fk;
        }
        let mut us = Vec::with_capacity(self.comps.len());
        let mut ws = Vec::with_capacity(self.comps.len());
        for (ci, fact) in facts.iter().enumerate() {
            let dim = fact.k.nrows();
            let mut u = DMatrix::<f64>::zeros(dim, cols[ci].len());
            for (j, &(k, pi)) in cols[ci].iter().enumerate() {
                for &(a, c) in &self.spanning[k].parts[pi].1 {
                    u[(a, j)] += c;
                }
            }
            let w = fact.lu.solve(&u)?;
            let utw = u.transpose() * &w;
            for (a, &(ka, _)) in cols[ci].iter().enumerate() {
                for (b, &(kb, _)) in cols[ci].iter().enumerate() {
                    s_mat[(ka, kb)] += utw[(a, b)];
                }
            }
            us.push(u);
            ws.push(w);
        }
        let s_lu = s_mat.lu();

        let solve =
            |b1: &[DVector<f64>], b2: &DVector<f64>| -> Option<(Vec<DVector<f64>>, DVector<f64>)> {
                let mut y0 = Vec::with_capacity(facts.len());
                let mut rhs = -b2.clone();
                for (ci, fact) in facts.iter().enumerate() {
                    let y = fact.lu.solve(&b1[ci])?;
                    let uty = us[ci].transpose() * &y;
                    for (a, &(k, _)) in cols[ci].iter().enumerate() {
                        rhs[k] += uty[a];
                    }
                    y0.push(y);
                }
                let lambda = if p > 0 { s_lu.solve(&rhs)? } else { rhs };
                for (ci, y) in y0.iter_mut().enumerate() {
                    if !cols[ci].is_empty() {
                        let lc = DVector::from_iterator(
                            cols[ci].len(),
                            cols[ci].iter().map(|&(k, _)| lambda[k]),
                        );
                        *y -= &ws[ci] * lc;
                    }
                }
                Some((y0, lambda))
            };

        let b1: Vec<DVector<f64>> = self
            .comps
            .iter()
            .zip(&facts)
            .map(|(comp, fact)| {
                let mut b = DVector::<f64>::zeros(fact.k.nrows());
                for (a, &v) in comp.vars.iter().enumerate() {
                    b[a] = -g_rest[v];
                }
                b
            })
            .collect();
        let b2 = DVector::from_iterator(p, self.spanning.iter().map(|s| f[s.row]));
        let (mut y, mut lambda) = solve(&b1, &b2)?;

        for _ in 0..2 {
            let mut r2 = b2.clone();
            for k in 0..p {
                let fk = f[self.spanning[k].row];
                r2[k] += fk * fk * lambda[k];
            }
            let mut r1 = Vec::with_capacity(facts.len());
            for (ci, fact) in facts.iter().enumerate() {
                let mut r = &b1[ci] - &fact.k * &y[ci];
                if !cols[ci].is_empty() {
                    let lc = DVector::from_iterator(
                        cols[ci].len(),
                        cols[ci].iter().map(|&(k, _)| lambda[k]),
                    );
                    r -= &us[ci] * lc;
                    let uty = us[ci].transpose() * &y[ci];
                    for (a, &(k, _)) in cols[ci].iter().enumerate() {
                        r2[k] -= uty[a];
                    }
                }
                r1.push(r);
            }
            let (dy, dl) = solve(&r1, &r2)?;
            for (yc, d) in y.iter_mut().zip(dy) {
                *yc += d;
            }
            lambda += dl;
        }

        let mut dx = vec![0.0; cp.n];
        for (comp, yc) in self.comps.iter().zip(&y) {
            for (a, &v) in comp.vars.iter().enumerate() {
                dx[v] = yc[a];
            }
        }
        dx.iter().all(|v| v.is_finite()).then_some(dx)
    }

    /// Assembles and factors the KKT block of one component.
    fn factor(&self, comp: &Comp, cp: &Compiled, x: &[f64], f: &[f64]) -> Option<Factored> {
        let nc = comp.vars.len();
        let dim = nc + comp.eqs.len();
        let xl: Vec<f64> = comp.vars.iter().map(|&v| x[v]).collect();
        let mut k = DMatrix::<f64>::zeros(dim, dim);
        for (a, &v) in comp.vars.iter().enumerate() {
            let dl = xl[a] - cp.lb[v];
            let mut d = 1.0 / (dl * dl);
            if cp.ub[v].is_finite() {
                let du = cp.ub[v] - xl[a];
                d += 1.0 / (du * du);
            }
            k[(a, a)] += d;
        }
        let mut gr = vec![0.0; nc];
        let mut nz = Vec::new();
        for (ri, terms) in comp.rows.iter().zip(&comp.local_terms) {
            let w = -1.0 / f[*ri];
            nz.clear();
            for t in terms {
                for v in t.vars() {
                    if !nz.contains(&v) {
                        nz.push(v);
                        gr[v] = 0.0;
                    }
                }
            }
            for t in terms {
                t.add_gradient(&xl, 1.0, &mut gr);
            }
            for &a in &nz {
                for &b in &nz {
                    k[(a, b)] += gr[a] * gr[b] * w * w;
                }
            }
            for t in terms {
                add_hessian(t, &xl, w, &mut k);
            }
        }
        for (e, coefs) in comp.eqs.iter().enumerate() {
            for &(a, c) in coefs {
                k[(nc + e, a)] += c;
                k[(a, nc + e)] += c;
            }
        }
        let lu = k.clone().lu();
        lu.is_invertible().then_some(Factored { k, lu })
    }
}

struct Factored {
    k: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Hooks into the barrier loop, used by the feasibility phase.
pub(super) trait Monitor {
    /// Called after every accepted step; `true` stops the run.
    fn after_step(&mut self, _x: &[f64]) -> bool {
        false
    }
    /// Called after every centering with the objective and gap bound.
    fn after_centering(&mut self, _objective: f64, _gap: f64) -> bool {
        false
    }
}

pub(super) struct NoMonitor;
impl Monitor for NoMonitor {}

pub(super) struct BarrierRun {
    pub x: Vec<f64>,
    pub converged: bool,
    pub stopped: bool,
    pub newton: usize,
    pub outer: usize,
    pub gap: f64,
    pub t: f64,
    pub objective: f64,
    pub trace: Vec<f64>,
}

fn barrier_value(cp: &Compiled, x: &[f64], t: f64, f: &[f64]) -> f64 {
    let mut v = t * dot(&cp.cost, x);
    for j in 0..cp.n {
        v -= (x[j] - cp.lb[j]).ln();
        if cp.ub[j].is_finite() {
            v -= (cp.ub[j] - x[j]).ln();
        }
    }
    v - f.iter().map(|fi| (-fi).ln()).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_values(cp: &Compiled, x: &[f64]) -> Vec<f64> {
    cp.rows.iter().map(|r| r.value(x)).collect()
}

fn gradient(cp: &Compiled, x: &[f64], t: f64, f: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = cp.cost.iter().map(|c| t * c).collect();
    for j in 0..cp.n {
        g[j] -= 1.0 / (x[j] - cp.lb[j]);
        if cp.ub[j].is_finite() {
            g[j] += 1.0 / (cp.ub[j] - x[j]);
        }
    }
    for (row, fi) in cp.rows.iter().zip(f) {
        let w = -1.0 / fi;
        for term in &row.terms {
            term.add_gradient(x, w, &mut g);
        }
    }
    g
}

/// Steepest descent projected onto the equality rows; used when the
/// Newton system cannot be solved.
fn projected_gradient(cp: &Compiled, g: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    if cp.eqs.is_empty() {
        return d;
    }
    let m = cp.eqs.len();
    let mut a = DMatrix::<f64>::zeros(m, cp.n);
    for (i, e) in cp.eqs.iter().enumerate() {
        for &(v, c) in &e.coefs {
            a[(i, v)] += c;
        }
    }
    let ad = &a * DVector::from_column_slice(&d);
    let aat = &a * a.transpose();
    if let Ok(y) = aat.svd(true, true).solve(&ad, 1e-12) {
        let corr = a.transpose() * y;
        for j in 0..cp.n {
            d[j] -= corr[j];
        }
    }
    d
}

const ARMIJO: f64 = 0.3;
const BACKTRACK: f64 = 0.5;
const CENTERED: f64 = 1e-10;
/// Largest squared Newton decrement at which the gap estimate still holds.
const CERTIFIED: f64 = 0.25;

pub(super) fn barrier(
    cp: &Compiled,
    blocks: &Blocks,
    mut x: Vec<f64>,
    opts: &SolveOptions,
    monitor: &mut dyn Monitor,
) -> BarrierRun {
    let m = cp.barrier_terms() as f64;
    let mut t = 1.0 / opts.mu0;
    let mut run = BarrierRun {
        x: Vec::new(),
        converged: false,
        stopped: false,
        newton: 0,
        outer: 0,
        gap: f64::INFINITY,
        t: 0.0,
        objective: dot(&cp.cost, &x),
        trace: Vec::new(),
    };
    if cp.n == 0 {
        run.x = x;
        run.converged = true;
        run.gap = 0.0;
        run.t = f64::INFINITY;
        return run;
    }
    let mut f = row_values(cp, &x);

    'outer: for _ in 0..opts.max_outer {
        run.outer += 1;
        let mut lambda2 = f64::INFINITY;
        for _ in 0..opts.max_inner {
            let g = gradient(cp, &x, t, &f);
            let mut dx = blocks.newton(cp, &x, &f, &g);
            let mut slope = dx.as_ref().map(|d| dot(&g, d)).unwrap_or(f64::NAN);
            if !(slope < 0.0) {
                if dx.is_some() && slope.abs() <= 1e-14 * (1.0 + t) {
                    lambda2 = 0.0;
                    break;
                }
                let d = projected_gradient(cp, &g);
                slope = dot(&g, &d);
                if !(slope < 0.0) {
                    lambda2 = 0.0;
                    break;
                }
                dx = Some(d);
            }
            let dx = dx.unwrap();
            lambda2 = -slope;
            if lambda2 / 2.0 <= CENTERED {
                break;
            }

            let mut s_max = f64::INFINITY;
            for j in 0..cp.n {
                if dx[j] < 0.0 {
                    s_max = s_max.min((x[j] - cp.lb[j]) / -dx[j]);
                } else if dx[j] > 0.0 && cp.ub[j].is_finite() {
                    s_max = s_max.min((cp.ub[j] - x[j]) / dx[j]);
                }
            }
            let mut s = if s_max.is_finite() {
                (0.99 * s_max).min(1.0)
            } else {
                1.0
            };
            let f0 = barrier_value(cp, &x, t, &f);
            let slack = 1e-13 * f0.abs().max(1.0);
            let mut accepted = None;
            while s > 1e-16 {
                let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + s * b).collect();
                if cp.inside_box(&xn) {
                    let fnew = row_values(cp, &xn);
                    if fnew.iter().all(|v| *v < 0.0) {
                        let val = barrier_value(cp, &xn, t, &fnew);
                        if val <= f0 + ARMIJO * s * slope + slack {
                            accepted = Some((xn, fnew));
                            break;
                        }
                    }
                }
                s *= BACKTRACK;
            }
            run.newton += 1;
            match accepted {
                Some((xn, fnew)) => {
                    x = xn;
                    f = fnew;
                }
                None => break,
            }
            if x.iter().any(|v| v.abs() > 1e15) {
                break 'outer;
            }
            if monitor.after_step(&x) {
                run.stopped = true;
                break 'outer;
            }
        }
        if lambda2 > CERTIFIED {
            // centering stalled, raising t further would only fake a small gap
            break;
        }
        let obj = dot(&cp.cost, &x);
        run.trace.push(obj);
        run.gap = (m + m.sqrt() * lambda2.max(0.0).sqrt()) / t;
        run.t = t;
        if monitor.after_centering(obj, run.gap) {
            run.stopped = true;
            break;
        }
        if run.gap < opts.tol {
            run.converged = true;
            break;
        }
        t *= opts.mu_factor;
    }
    run.objective = dot(&cp.cost, &x);
    run.x = x;
    run
}
