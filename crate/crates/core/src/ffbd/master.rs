//! Binary master problem: minimum-energy one-hot assignment under the
//! current cut set, by depth-first branch and bound over LP relaxations.

use super::cuts::{CutSet, CUT_TOL};
use crate::branching::{twins, BranchOrder};
use crate::convex::{solve, ConvexProgram, SolveStatus, Term};
use crate::error::Result;
use crate::model::{option_energy, Placement, SystemInstance};

/// Relative tolerance for comparing energies against the incumbent.
pub const ENERGY_TOL: f64 = 1e-9;

pub(crate) fn tol_of(v: f64) -> f64 {
    ENERGY_TOL * v.abs().max(1.0)
}

/// True when `bound` cannot beat `incumbent` by more than the tolerance.
pub(crate) fn dominated(bound: f64, incumbent: f64) -> bool {
    incumbent.is_finite() && bound >= incumbent - tol_of(incumbent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub placements: Vec<Placement>,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MasterStats {
    pub nodes: usize,
    pub lp_solves: usize,
}

struct Compiled {
    terms: Vec<(usize, usize, f64)>,
    rhs: f64,
    limit: f64,
}

#[derive(Clone)]
struct State {
    fixed: Vec<Option<usize>>,
    allowed: Vec<Vec<bool>>,
}

struct Search<'a> {
    order: &'a BranchOrder,
    /// Node of each option, `None` for local.
    node_of: Vec<Option<usize>>,
    twin_of: Vec<Option<usize>>,
    energy: Vec<Vec<f64>>,
    cuts: Vec<Compiled>,
}

impl Search<'_> {
    fn base(&self, cut: &Compiled, s: &State) -> f64 {
        cut.terms
            .iter()
            .filter(|(t, o, _)| s.fixed[*t] == Some(*o))
            .map(|(_, _, c)| c)
            .sum()
    }

    /// Fixes forced choices and drops options that would break a cut on
    /// their own. False when the node is infeasible.
    fn propagate(&self, s: &mut State) -> bool {
        loop {
            let mut changed = false;
            for cut in &self.cuts {
                let base = self.base(cut, s);
                if base > cut.limit {
                    return false;
                }
                for &(t, o, c) in &cut.terms {
                    if s.fixed[t].is_none() && s.allowed[t][o] && base + c > cut.limit {
                        s.allowed[t][o] = false;
                        changed = true;
                    }
                }
            }
            for t in 0..s.fixed.len() {
                if s.fixed[t].is_some() {
                    continue;
                }
                let mut open = s.allowed[t]
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a)
                    .map(|(o, _)| o);
                match (open.next(), open.next()) {
                    (None, _) => return false,
                    (Some(o), None) => {
                        s.fixed[t] = Some(o);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn fixed_energy(&self, s: &State) -> f64 {
        s.fixed
            .iter()
            .enumerate()
            .filter_map(|(t, o)| o.map(|o| self.energy[t][o]))
            .sum()
    }

    /// Cheapest open option per unfixed task, first in visit order on ties.
    fn greedy(&self, s: &State) -> Vec<usize> {
        (0..s.fixed.len())
            .map(|t| {
                s.fixed[t].unwrap_or_else(|| {
                    let mut best = usize::MAX;
                    for o in (0..self.energy[t].len()).filter(|&o| s.allowed[t][o]) {
                        if best == usize::MAX || self.energy[t][o] < self.energy[t][best] {
                            best = o;
                        }
                    }
                    best
                })
            })
            .collect()
    }

    fn satisfies(&self, choice: &[usize]) -> bool {
        self.cuts.iter().all(|c| {
            let lhs: f64 = c
                .terms
                .iter()
                .filter(|(t, o, _)| choice[*t] == *o)
                .map(|(_, _, v)| v)
                .sum();
            lhs <= c.limit
        })
    }

    /// Lower bound from the LP relaxation over the open options, `None`
    /// when the relaxation is infeasible.
    ///
    /// The barrier's own gap estimate is not a certificate when centering
    /// stalls, so the bound is the Lagrangian value at the multipliers read
    /// off its final point. Any nonnegative multipliers give a valid bound
    /// because each task's options form a simplex.
    fn lp_bound(&self, s: &State, stats: &mut MasterStats) -> Result<Option<f64>> {
        let mut p = ConvexProgram::new();
        let mut var = vec![vec![None; self.order.processor_order.len()]; s.fixed.len()];
        let mut start = Vec::new();
        for t in (0..s.fixed.len()).filter(|&t| s.fixed[t].is_none()) {
            let open: Vec<usize> = (0..s.allowed[t].len())
                .filter(|&o| s.allowed[t][o])
                .collect();
            let mut row = Vec::new();
            for &o in &open {
                let v = p.add_var(0.0, 1.0, self.energy[t][o]);
                var[t][o] = Some(v);
                start.push(1.0 / open.len() as f64);
                row.push(Term::Linear { var: v, coef: 1.0 });
            }
            p.add_eq(row, 1.0);
        }
        // (cut, residual) of every row handed to the solver
        let mut rows = Vec::new();
        for cut in &self.cuts {
            let residual = cut.rhs - self.base(cut, s);
            let mut worst = vec![0.0f64; s.fixed.len()];
            let mut row = Vec::new();
            for &(t, o, c) in &cut.terms {
                if let Some(v) = var[t][o] {
                    worst[t] = worst[t].max(c);
                    row.push(Term::Linear { var: v, coef: c });
                }
            }
            if worst.iter().sum::<f64>() > residual + CUT_TOL {
                p.add_le(row, residual);
                rows.push((cut, residual));
            }
        }
        p.set_start(start);
        stats.lp_solves += 1;
        let r = solve(&p, 1e-9)?;
        if r.status == SolveStatus::Infeasible {
            return Ok(None);
        }
        let weight = r.barrier_weight;
        let mu: Vec<f64> = rows
            .iter()
            .map(|(cut, residual)| {
                if !(weight > 0.0) || !weight.is_finite() {
                    return 0.0;
                }
                let used: f64 = cut
                    .terms
                    .iter()
                    .filter_map(|&(t, o, c)| var[t][o].map(|v| c * r.point[v]))
                    .sum();
                let slack = residual - used;
                if slack > 0.0 {
                    1.0 / (weight * slack)
                } else {
                    0.0
                }
            })
            .collect();
        let mut priced: Vec<Vec<f64>> = self.energy.clone();
        for ((cut, _), m) in rows.iter().zip(&mu) {
            for &(t, o, c) in &cut.terms {
                if var[t][o].is_some() {
                    priced[t][o] += m * c;
                }
            }
        }
        let mut bound: f64 = -rows
            .iter()
            .zip(&mu)
            .map(|((_, res), m)| m * res)
            .sum::<f64>();
        for t in (0..s.fixed.len()).filter(|&t| s.fixed[t].is_none()) {
            bound += (0..priced[t].len())
                .filter(|&o| s.allowed[t][o])
                .map(|o| priced[t][o])
                .fold(f64::INFINITY, f64::min);
        }
        Ok(Some(bound))
    }
}

/// Minimum-energy assignment satisfying every cut, or `None` if none
/// exists. Among optima the first in depth-first visit order is returned.
///
/// `lower_bound` (a value no assignment can beat) stops the search as soon
/// as it is reached; `cutoff` prunes everything not strictly below it.
pub fn solve_master(
    instance: &SystemInstance,
    cuts: &CutSet,
    order: &BranchOrder,
    lower_bound: f64,
    cutoff: f64,
    stats: &mut MasterStats,
) -> Result<Option<MasterSolution>> {
    let n = instance.n_tasks();
    let opts = &order.processor_order;
    let energy: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            opts.iter()
                .map(|p| option_energy(instance, i, *p))
                .collect()
        })
        .collect();
    let compiled = cuts
        .cuts()
        .iter()
        .map(|c| Compiled {
            terms: c
                .terms
                .iter()
                .map(|(i, p, v)| (*i, order.rank(*p), *v))
                .collect(),
            rhs: c.rhs,
            limit: c.rhs + CUT_TOL * c.rhs.abs().max(1.0),
        })
        .collect();
    let search = Search {
        order,
        node_of: opts.iter().map(|p| p.node()).collect(),
        twin_of: twins(instance),
        energy,
        cuts: compiled,
    };

    let mut best: Option<Vec<usize>> = None;
    let mut best_val = cutoff;
    let mut stack = vec![State {
        fixed: vec![None; n],
        allowed: vec![vec![true; opts.len()]; n],
    }];

    while let Some(mut s) = stack.pop() {
        stats.nodes += 1;
        if !search.propagate(&mut s) {
            continue;
        }
        let fixed_e = search.fixed_energy(&s);
        let choice = search.greedy(&s);
        let bound: f64 = (0..n).map(|t| search.energy[t][choice[t]]).sum();
        if dominated(bound, best_val) {
            continue;
        }
        if search.satisfies(&choice) {
            // the cheapest completion is admissible, nothing below can do better
            best_val = bound;
            best = Some(choice);
            if lower_bound.is_finite() && best_val <= lower_bound + tol_of(lower_bound) {
                break;
            }
            continue;
        }
        let Some(next) = order
            .task_order
            .iter()
            .copied()
            .find(|&t| s.fixed[t].is_none())
        else {
            continue;
        };
        if let Some(lp) = search.lp_bound(&s, stats)? {
            if dominated(fixed_e + lp, best_val) {
                continue;
            }
        } else {
            continue;
        }
        // interchangeable nodes are opened in index order
        let mut used = vec![false; instance.n_nodes()];
        for o in s.fixed.iter().flatten() {
            if let Some(j) = search.node_of[*o] {
                used[j] = true;
            }
        }
        let canonical = |o: usize| match search.node_of[o] {
            Some(k) => used[k] || search.twin_of[k].is_none_or(|j| used[j]),
            None => true,
        };
        for o in (0..opts.len())
            .rev()
            .filter(|&o| s.allowed[next][o] && canonical(o))
        {
            let mut child = s.clone();
            child.fixed[next] = Some(o);
            stack.push(child);
        }
    }

    Ok(best.map(|choice| MasterSolution {
        placements: choice.iter().map(|&o| opts[o]).collect(),
        energy: best_val,
    }))
}
