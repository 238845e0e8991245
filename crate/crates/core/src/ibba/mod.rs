//! Depth-first branch and bound over whole-task placements.
//!
//! Each tree level fixes the placement of one task. A node is bounded by the
//! convex relaxation of its open tasks, after cheaper tests: fixed
//! placements that cannot work on their own, a node that cannot serve the
//! tasks fixed there, and the cheapest completion (which, when it turns out
//! feasible, settles the whole subtree). Children are visited in the
//! processor order of the chosen preset, skipping nodes interchangeable with
//! an unused lower one, and ties are kept in favour of the first optimum
//! found, which is what makes the preset select among equal-energy optima.

mod relax;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use relax::Relaxation;

use crate::branching::{twins, BranchOrder, Preset, TaskOrder};
use crate::convex::{solve_with as solve_convex, SolveOptions, SolveStatus};
use crate::error::{Error, Result};
use crate::ffbd::subproblem::{allocate, check_node, Mode, Subproblem};
use crate::ffbd::tol_of;
use crate::model::{
    local_delay, option_energy, relative_size, Placement, Rates, Solution, SystemInstance, Tier,
};

/// Componentwise distance from 0/1 under which a relaxed choice is integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct IbbaOptions {
    pub order: BranchOrder,
    /// Cheapest-completion bound and check before each relaxation.
    pub quick_bound: bool,
    pub solver: SolveOptions,
}

impl IbbaOptions {
    pub fn new(instance: &SystemInstance, preset: Preset) -> Self {
        Self {
            order: BranchOrder::new(instance, preset, TaskOrder::Input),
            quick_bound: true,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub relaxed_solves: usize,
    /// Nodes discarded by their bound or an infeasible relaxation.
    pub prunes: usize,
    /// Nodes discarded before any relaxation was built.
    pub quick_prunes: usize,
    pub max_stack_depth: usize,
    /// Slack subproblems solved to verify candidates.
    pub verification_solves: usize,
    /// Subtrees settled by their cheapest completion.
    pub greedy_hits: usize,
    pub incumbent_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbbaResult {
    pub solution: Option<Solution>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchNode {
    pub fixed: Vec<Option<Placement>>,
    /// Position in the task order of the next task to branch on.
    pub active_from: usize,
}

impl SearchNode {
    pub fn root(n_tasks: usize) -> Self {
        Self {
            fixed: vec![None; n_tasks],
            active_from: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.active_from == self.fixed.len()
    }
}

/// One child per placement of the next task, in visit order.
pub fn branch(order: &BranchOrder, node: &SearchNode) -> Vec<SearchNode> {
    if node.is_leaf() {
        return Vec::new();
    }
    let task = order.task_order[node.active_from];
    order
        .processor_order
        .iter()
        .map(|p| {
            let mut fixed = node.fixed.clone();
            fixed[task] = Some(*p);
            SearchNode {
                fixed,
                active_from: node.active_from + 1,
            }
        })
        .collect()
}

/// Relaxation of a node with only the fixed choices eliminated.
pub fn simplify(instance: &SystemInstance, node: &SearchNode) -> Option<Relaxation> {
    Relaxation::full(instance, &node.fixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Prune,
    Descend,
    NewIncumbent,
}

/// Decision for a node from its relaxation: `relaxed` is the bound (`None`
/// if the relaxation is infeasible), `integral` whether the relaxed point is
/// an assignment. Ties with the incumbent prune.
pub fn classify(relaxed: Option<f64>, integral: bool, incumbent: f64) -> Verdict {
    match relaxed {
        None => Verdict::Prune,
        Some(v) if crate::ffbd::dominated(v, incumbent) => Verdict::Prune,
        Some(_) if integral => Verdict::NewIncumbent,
        Some(_) => Verdict::Descend,
    }
}

struct Incumbent {
    energy: f64,
    /// Ranks of the placements in task order; the lexicographic key of the
    /// leaf in visit order.
    key: Vec<usize>,
    placements: Vec<Placement>,
    rates: Vec<Rates>,
}

struct Search<'a> {
    instance: &'a SystemInstance,
    opts: &'a IbbaOptions,
    energy: Vec<Vec<f64>>,
    admissible: Vec<Placement>,
    twin_of: Vec<Option<usize>>,
    node_memo: HashMap<(usize, Vec<usize>, Vec<usize>), bool>,
    best: Option<Incumbent>,
    stats: SearchStats,
}

impl Search<'_> {
    fn key(&self, fixed: &[Option<Placement>], depth: usize) -> Vec<usize> {
        self.opts.order.task_order[..depth]
            .iter()
            .map(|&t| self.opts.order.rank(fixed[t].expect("fixed prefix")))
            .collect()
    }

    /// True when nothing in a subtree with this bound and key prefix can
    /// replace the incumbent.
    fn prunable(&self, bound: f64, prefix: &[usize]) -> bool {
        let Some(b) = &self.best else { return false };
        let tol = tol_of(b.energy);
        bound > b.energy + tol || (bound >= b.energy - tol && prefix > &b.key[..prefix.len()])
    }

    fn offer(&mut self, placements: Vec<Placement>, rates: Vec<Rates>) {
        let energy: f64 = placements
            .iter()
            .enumerate()
            .map(|(i, p)| self.energy[i][self.slot(*p)])
            .sum();
        let key: Vec<usize> = self
            .opts
            .order
            .task_order
            .iter()
            .map(|&t| self.opts.order.rank(placements[t]))
            .collect();
        let better = match &self.best {
            None => true,
            Some(b) => {
                let tol = tol_of(b.energy);
                energy < b.energy - tol || (energy <= b.energy + tol && key < b.key)
            }
        };
        if better {
            self.stats.incumbent_updates += 1;
            self.best = Some(Incumbent {
                energy,
                key,
                placements,
                rates,
            });
        }
    }

    fn slot(&self, p: Placement) -> usize {
        self.admissible
            .iter()
            .position(|q| *q == p)
            .expect("admissible")
    }

    fn verify(&mut self, placements: &[Placement]) -> Result<Option<Vec<Rates>>> {
        allocate(
            self.instance,
            placements,
            Mode::F,
            &mut self.stats.verification_solves,
        )
    }

    /// Whether a node can serve exactly these tasks, memoised.
    fn node_ok(&mut self, j: usize, fog: &[usize], cloud: &[usize]) -> Result<bool> {
        if fog.is_empty() && cloud.is_empty() {
            return Ok(true);
        }
        let key = (j, fog.to_vec(), cloud.to_vec());
        if let Some(&ok) = self.node_memo.get(&key) {
            return Ok(ok);
        }
        let ok = match Subproblem::new(self.instance, j, fog, cloud) {
            Ok(sub) => {
                let c = check_node(&sub, Mode::F, None)?;
                self.stats.verification_solves += c.solver_calls;
                c.is_feasible()
            }
            Err(Error::CloudInfeasible { .. }) => false,
            Err(e) => return Err(e),
        };
        self.node_memo.insert(key, ok);
        Ok(ok)
    }

    /// Placements of open tasks that can still work given the fixed ones:
    /// each alone must fit its deadline, and the node must be able to serve
    /// it together with the tasks already fixed there. `None` if the fixed
    /// tasks alone already fail.
    fn open_options(&mut self, fixed: &[Option<Placement>]) -> Result<Option<Vec<Vec<bool>>>> {
        let inst = self.instance;
        let cl = inst.cloud();
        let n_nodes = inst.n_nodes();
        let mut load = vec![[0.0f64; 3]; n_nodes];
        let mut fog_at = vec![Vec::new(); n_nodes];
        let mut cloud_at = vec![Vec::new(); n_nodes];
        for (i, f) in fixed.iter().enumerate() {
            let task = inst.task(i);
            match *f {
                Some(Placement::Local) => {
                    if local_delay(task, inst.profile(i)) > task.deadline {
                        return Ok(None);
                    }
                }
                Some(Placement::Fog(j)) => {
                    let Ok(r) = relative_size(task, Tier::Fog, cl) else {
                        return Ok(None);
                    };
                    (0..3).for_each(|d| load[j][d] += r.as_array()[d]);
                    fog_at[j].push(i);
                }
                Some(Placement::Cloud(j)) => {
                    let Ok(r) = relative_size(task, Tier::Cloud, cl) else {
                        return Ok(None);
                    };
                    (0..2).for_each(|d| load[j][d] += r.as_array()[d]);
                    cloud_at[j].push(i);
                }
                None => {}
            }
        }
        let fits = |load: &[[f64; 3]], j: usize, add: [f64; 3]| {
            let caps = inst.node(j).caps();
            (0..3).all(|d| load[j][d] + add[d] <= caps[d])
        };
        for j in 0..n_nodes {
            if !fits(&load, j, [0.0; 3]) || !self.node_ok(j, &fog_at[j], &cloud_at[j])? {
                return Ok(None);
            }
        }
        let mut allowed = vec![Vec::new(); fixed.len()];
        for i in 0..fixed.len() {
            if fixed[i].is_some() {
                continue;
            }
            let task = inst.task(i);
            let fog = relative_size(task, Tier::Fog, cl).ok();
            let cloud = relative_size(task, Tier::Cloud, cl).ok();
            let mut row = Vec::with_capacity(self.admissible.len());
            for k in 0..self.admissible.len() {
                let ok = match self.admissible[k] {
                    Placement::Local => local_delay(task, inst.profile(i)) <= task.deadline,
                    Placement::Fog(j) => match fog {
                        Some(r) if fits(&load, j, r.as_array()) => {
                            let with: Vec<usize> = fog_at[j].iter().copied().chain([i]).collect();
                            self.node_ok(j, &with, &cloud_at[j])?
                        }
                        _ => false,
                    },
                    Placement::Cloud(j) => match cloud {
                        Some(r) if fits(&load, j, [r.input, r.output, 0.0]) => {
                            let with: Vec<usize> = cloud_at[j].iter().copied().chain([i]).collect();
                            self.node_ok(j, &fog_at[j], &with)?
                        }
                        _ => false,
                    },
                };
                row.push(ok);
            }
            if !row.iter().any(|a| *a) {
                return Ok(None);
            }
            allowed[i] = row;
        }
        Ok(Some(allowed))
    }

    /// Cheapest open placement of each open task, earliest in visit order
    /// among equal energies.
    fn cheapest(&self, fixed: &[Option<Placement>], allowed: &[Vec<bool>]) -> Vec<Placement> {
        fixed
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.unwrap_or_else(|| {
                    let mut best: Option<Placement> = None;
                    for p in &self.opts.order.processor_order {
                        if !allowed[i][self.slot(*p)] {
                            continue;
                        }
                        let e = self.energy[i][self.slot(*p)];
                        if best.is_none_or(|b| e < self.energy[i][self.slot(b)]) {
                            best = Some(*p);
                        }
                    }
                    best.expect("open task keeps an option")
                })
            })
            .collect()
    }

    fn run(&mut self) -> Result<()> {
        let n = self.instance.n_tasks();
        let mut stack = vec![SearchNode::root(n)];
        while let Some(node) = stack.pop() {
            self.stats.nodes += 1;
            let prefix = self.key(&node.fixed, node.active_from);
            let Some(allowed) = self.open_options(&node.fixed)? else {
                self.stats.quick_prunes += 1;
                continue;
            };
            if node.is_leaf() {
                let placements: Vec<Placement> = node.fixed.iter().map(|f| f.unwrap()).collect();
                if let Some(rates) = self.verify(&placements)? {
                    self.offer(placements, rates);
                }
                continue;
            }

            if self.opts.quick_bound {
                let greedy = self.cheapest(&node.fixed, &allowed);
                let bound: f64 = greedy
                    .iter()
                    .enumerate()
                    .map(|(i, p)| self.energy[i][self.slot(*p)])
                    .sum();
                if self.prunable(bound, &prefix) {
                    self.stats.prunes += 1;
                    continue;
                }
                if let Some(rates) = self.verify(&greedy)? {
                    self.stats.greedy_hits += 1;
                    self.offer(greedy, rates);
                    continue;
                }
            }

            let relaxation =
                Relaxation::build(self.instance, &node.fixed, &allowed).expect("checked above");
            self.stats.relaxed_solves += 1;
            let res = solve_convex(&relaxation.program, &self.opts.solver)?;
            match res.status {
                SolveStatus::Infeasible => {
                    self.stats.prunes += 1;
                    continue;
                }
                SolveStatus::Optimal => {
                    let bound = relaxation.fixed_energy + res.lower_bound();
                    if self.prunable(bound, &prefix) {
                        self.stats.prunes += 1;
                        continue;
                    }
                    if let Some(assign) =
                        relaxation.integral(&res.point, INTEGRALITY_TOL, &node.fixed)
                    {
                        if let Some(rates) = self.verify(&assign)? {
                            self.offer(assign, rates);
                        }
                    }
                }
                SolveStatus::IterationLimit => {}
            }

            // interchangeable nodes are opened in index order
            let mut used = vec![false; self.instance.n_nodes()];
            for j in node.fixed.iter().flatten().filter_map(|p| p.node()) {
                used[j] = true;
            }
            let canonical = |p: Placement| match p.node() {
                Some(k) => used[k] || self.twin_of[k].is_none_or(|j| used[j]),
                None => true,
            };
            let next = self.opts.order.task_order[node.active_from];
            for child in branch(&self.opts.order, &node).into_iter().rev() {
                let p = child.fixed[next].unwrap();
                if allowed[next][self.slot(p)] && canonical(p) {
                    stack.push(child);
                } else {
                    self.stats.quick_prunes += 1;
                }
            }
            self.stats.max_stack_depth = self.stats.max_stack_depth.max(stack.len());
        }
        Ok(())
    }
}

pub fn solve(instance: &SystemInstance, preset: Preset) -> Result<IbbaResult> {
    solve_with(instance, &IbbaOptions::new(instance, preset))
}

pub fn solve_with(instance: &SystemInstance, opts: &IbbaOptions) -> Result<IbbaResult> {
    let admissible = instance.placements();
    let energy = (0..instance.n_tasks())
        .map(|i| {
            admissible
                .iter()
                .map(|p| option_energy(instance, i, *p))
                .collect()
        })
        .collect();
    let mut search = Search {
        instance,
        opts,
        energy,
        admissible,
        twin_of: twins(instance),
        node_memo: HashMap::new(),
        best: None,
        stats: SearchStats::default(),
    };
    search.run()?;
    let solution = search
        .best
        .map(|b| Solution::assemble(instance, &b.placements, &b.rates));
    Ok(IbbaResult {
        solution,
        stats: search.stats,
    })
}
