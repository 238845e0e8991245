//! Feasibility-finding Benders decomposition.
//!
//! The master picks the cheapest assignment allowed by the cuts collected so
//! far; every fog node then checks whether it can serve the tasks it was
//! given. A node that cannot shrinks its task set to an infeasible core and
//! contributes cuts excluding that core on every node no larger than itself;
//! the loop repeats until every node is feasible (the assignment is then
//! optimal) or the master runs dry (the instance is infeasible).

mod cuts;
mod master;
pub mod subproblem;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cuts::{init_cuts, Cut, CutKind, CutSet, CUT_TOL};
pub(crate) use master::{dominated, tol_of};
pub use master::{solve_master, MasterSolution, MasterStats, ENERGY_TOL};
pub use subproblem::{
    balanced_allocation, check_node, fast_feasible, fast_infeasible, solve_sp2, Dimension, Mode,
    NodeAllocation, NodeCheck, SubStatus, Subproblem, SP2_ZERO,
};

use crate::branching::BranchOrder;
use crate::error::{Error, Result};
use crate::model::{validate_solution, Rates, Solution, SystemInstance, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FfbdStats {
    pub mp_iterations: usize,
    /// Slack subproblems handed to the convex solver.
    pub standard_solver_calls: usize,
    /// Non-empty subproblems decided in closed form.
    pub fast_detections: usize,
    /// Non-empty subproblems checked, fast or not.
    pub subproblems: usize,
    pub cuts_by_kind: BTreeMap<String, usize>,
    pub master_nodes: usize,
    pub master_lp_solves: usize,
    /// Master optimum per iteration.
    pub master_values: Vec<f64>,
}

impl FfbdStats {
    pub fn fast_detection_fraction(&self) -> f64 {
        if self.subproblems == 0 {
            0.0
        } else {
            self.fast_detections as f64 / self.subproblems as f64
        }
    }

    /// Master problems plus node subproblems examined.
    pub fn intermediate_problems(&self) -> usize {
        self.mp_iterations + self.subproblems
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfbdResult {
    /// `None` when the instance is infeasible.
    pub solution: Option<Solution>,
    pub stats: FfbdStats,
}

#[derive(Debug, Clone)]
pub struct FfbdOptions {
    pub mode: Mode,
    /// Safety valve on master iterations.
    pub max_iterations: usize,
    /// Evaluate node subproblems on the rayon pool.
    pub parallel: bool,
}

impl FfbdOptions {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            max_iterations: 100_000,
            parallel: true,
        }
    }
}

pub fn run(
    instance: &SystemInstance,
    mode: Mode,
    warm_start: Option<&Solution>,
) -> Result<FfbdResult> {
    run_with(instance, &FfbdOptions::new(mode), warm_start)
}

/// A warm start that is itself feasible caps the master search at its
/// energy; its rates seed the slack solves. Neither changes the result.
pub fn run_with(
    instance: &SystemInstance,
    opts: &FfbdOptions,
    warm_start: Option<&Solution>,
) -> Result<FfbdResult> {
    let order = BranchOrder::lfc(instance);
    let n_nodes = instance.n_nodes();
    let mut cuts = init_cuts(instance);
    let mut stats = FfbdStats::default();

    let mut cutoff = f64::INFINITY;
    let mut fallback: Option<&Solution> = None;
    let mut hints: HashMap<usize, Rates> = HashMap::new();
    if let Some(w) = warm_start {
        if let Some(placements) = w.placements(n_nodes) {
            if validate_solution(w, instance, DEFAULT_TOLERANCE).is_feasible() {
                // wide enough that assignments tying with the warm start survive
                cutoff = w.total_energy + 2.0 * tol_of(w.total_energy);
                fallback = Some(w);
            }
            for (i, p) in placements.iter().enumerate() {
                if let Some(j) = p.node() {
                    hints.insert(i, w.allocation.get(i, j));
                }
            }
        }
    }

    let mut previous = f64::NEG_INFINITY;
    loop {
        if stats.mp_iterations >= opts.max_iterations {
            return Err(Error::SolverFailure(format!(
                "no convergence after {} master iterations",
                opts.max_iterations
            )));
        }
        stats.mp_iterations += 1;
        let mut ms = MasterStats::default();
        let master = solve_master(instance, &cuts, &order, previous, cutoff, &mut ms)?;
        stats.master_nodes += ms.nodes;
        stats.master_lp_solves += ms.lp_solves;
        let Some(master) = master else {
            // everything below the cutoff is excluded, so a feasible warm
            // start is optimal
            finish_counts(&mut stats, &cuts);
            return Ok(FfbdResult {
                solution: fallback.cloned(),
                stats,
            });
        };
        if master.energy < previous - tol_of(previous) {
            return Err(Error::SolverFailure(format!(
                "master value fell from {previous} to {}",
                master.energy
            )));
        }
        previous = master.energy;
        stats.master_values.push(master.energy);

        let subs = Subproblem::split(instance, &master.placements)?;
        let work: Vec<&Subproblem> = subs.iter().filter(|s| !s.is_empty()).collect();
        let check = |s: &&Subproblem| -> Result<NodeOutcome> {
            let hint: NodeAllocation = s
                .fog_tasks
                .iter()
                .chain(&s.cloud_tasks)
                .filter_map(|(i, _)| hints.get(i).map(|r| (*i, *r)))
                .collect();
            let check = check_node(s, opts.mode, (!hint.is_empty()).then_some(&hint))?;
            let mut out = NodeOutcome::default();
            out.record(&check);
            if !check.is_feasible() {
                out.core = Some(infeasible_core(s, opts.mode, &mut out)?);
            }
            out.allocation = check.allocation;
            Ok(out)
        };
        let outcomes: Vec<Result<NodeOutcome>> = if opts.parallel {
            work.par_iter().map(check).collect()
        } else {
            work.iter().map(check).collect()
        };

        let mut rates = vec![Rates::default(); instance.n_tasks()];
        let mut all_feasible = true;
        for outcome in outcomes {
            let outcome = outcome?;
            stats.subproblems += outcome.subproblems;
            stats.standard_solver_calls += outcome.solver_calls;
            stats.fast_detections += outcome.fast;
            match (outcome.allocation, outcome.core) {
                (Some(a), _) => {
                    for (i, r) in a {
                        rates[i] = r;
                        hints.insert(i, r);
                    }
                }
                (None, core) => {
                    all_feasible = false;
                    let core = core.expect("infeasible node has a core");
                    for cut in lifted_cuts(instance, &core) {
                        if !cuts.cuts().contains(&cut) {
                            cuts.push(cut);
                        }
                    }
                }
            }
        }
        if all_feasible {
            finish_counts(&mut stats, &cuts);
            let solution = Solution::assemble(instance, &master.placements, &rates);
            return Ok(FfbdResult {
                solution: Some(solution),
                stats,
            });
        }
    }
}

#[derive(Default)]
struct NodeOutcome {
    allocation: Option<NodeAllocation>,
    /// Irreducible infeasible part of the node's task set.
    core: Option<Subproblem>,
    subproblems: usize,
    solver_calls: usize,
    fast: usize,
}

impl NodeOutcome {
    fn record(&mut self, check: &NodeCheck) {
        self.subproblems += 1;
        self.solver_calls += check.solver_calls;
        if check.is_fast() {
            self.fast += 1;
        }
    }
}

fn weight(sub: &Subproblem, r: &crate::model::RelativeSize) -> f64 {
    (0..3).map(|d| r.as_array()[d] / sub.caps[d]).sum()
}

/// Deletion filter: drops tasks, lightest first, as long as the rest stays
/// infeasible. Any superset of the result is infeasible too, so its cut
/// excludes more assignments than the full set would.
fn infeasible_core(sub: &Subproblem, mode: Mode, out: &mut NodeOutcome) -> Result<Subproblem> {
    let mut order: Vec<(bool, usize, f64)> = sub
        .fog_tasks
        .iter()
        .map(|(i, r)| (true, *i, weight(sub, r)))
        .chain(
            sub.cloud_tasks
                .iter()
                .map(|(i, r)| (false, *i, weight(sub, r))),
        )
        .collect();
    order.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut core = sub.clone();
    for (fog, i, _) in order {
        if core.task_count() == 1 {
            break;
        }
        let mut trial = core.clone();
        if fog {
            trial.fog_tasks.retain(|(t, _)| *t != i);
        } else {
            trial.cloud_tasks.retain(|(t, _)| *t != i);
        }
        let check = check_node(&trial, mode, None)?;
        out.record(&check);
        if !check.is_feasible() {
            core = trial;
        }
    }
    Ok(core)
}

/// Relative sizes do not depend on the node, so an infeasible set stays
/// infeasible on every node with no more capacity. Forwarded tasks need a
/// real node.
fn lifted_cuts(instance: &SystemInstance, core: &Subproblem) -> Vec<Cut> {
    let n_nodes = instance.n_nodes();
    (0..n_nodes)
        .filter(|&k| {
            let caps = instance.node(k).caps();
            (0..3).all(|d| caps[d] <= core.caps[d])
                && (core.cloud_tasks.is_empty() || k + 1 < n_nodes)
        })
        .map(|k| {
            Cut::subproblem(&Subproblem {
                node: k,
                caps: instance.node(k).caps(),
                ..core.clone()
            })
        })
        .collect()
}

fn finish_counts(stats: &mut FfbdStats, cuts: &CutSet) {
    stats.cuts_by_kind = cuts
        .count_by_kind()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate, ScenarioSpec};

    fn tight() -> SystemInstance {
        let mut spec = ScenarioSpec::scenario2(1);
        spec.n_tasks = 6;
        spec.n_fog = 2;
        generate(&spec, 2).unwrap()
    }

    #[test]
    fn master_values_never_decrease() {
        let r = run(&tight(), Mode::F, None).unwrap();
        assert!(r
            .stats
            .master_values
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9));
        // an exhausted master adds no value on its last iteration
        let recorded = r.stats.mp_iterations - usize::from(r.solution.is_none());
        assert_eq!(r.stats.master_values.len(), recorded);
        assert_eq!(r.stats.cuts_by_kind["resource_up"], 3);
        if let Some(s) = &r.solution {
            let last = *r.stats.master_values.last().unwrap();
            assert!((s.total_energy - last).abs() <= 1e-9 * last.max(1.0));
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let inst = tight();
        let par = run(&inst, Mode::S, None).unwrap();
        let mut opts = FfbdOptions::new(Mode::S);
        opts.parallel = false;
        let seq = run_with(&inst, &opts, None).unwrap();
        assert_eq!(par.stats.master_values, seq.stats.master_values);
        assert_eq!(
            par.stats.standard_solver_calls,
            seq.stats.standard_solver_calls
        );
    }

    #[test]
    fn iteration_cap_is_reported() {
        let inst = tight();
        let full = run(&inst, Mode::S, None).unwrap();
        if full.stats.mp_iterations > 1 {
            let mut opts = FfbdOptions::new(Mode::S);
            opts.max_iterations = 1;
            assert!(matches!(
                run_with(&inst, &opts, None),
                Err(Error::SolverFailure(_))
            ));
        }
    }

    #[test]
    fn fast_mode_never_needs_more_solver_calls() {
        let inst = tight();
        let s = run(&inst, Mode::S, None).unwrap();
        let f = run(&inst, Mode::F, None).unwrap();
        assert!(f.stats.standard_solver_calls <= s.stats.standard_solver_calls);
        assert_eq!(
            s.solution.map(|x| x.total_energy),
            f.solution.map(|x| x.total_energy)
        );
    }
}
