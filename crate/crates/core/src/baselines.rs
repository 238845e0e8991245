//! Comparison policies: everything local, everything offloaded at minimum
//! mean delay, and relax-then-round.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::branching::{twins, BranchOrder};
use crate::convex::{
    solve, solve_with as solve_convex, ConvexProgram, SolveOptions, SolveStatus, Term, RATE_FLOOR,
};
use crate::error::{Error, Result};
use crate::ffbd::dominated;
use crate::ffbd::subproblem::{check_node, fast_infeasible, Mode, NodeAllocation, Subproblem};
use crate::ibba::Relaxation;
use crate::model::{
    option_delay, relative_size, validate_solution, Placement, Rates, Solution, SystemInstance,
    Tier, DEFAULT_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// `None` when the policy finds no assignment at all.
    pub solution: Option<Solution>,
    /// Fraction of tasks missing their deadline.
    pub error_rate: f64,
}

impl BaselineResult {
    fn from_solution(instance: &SystemInstance, s: Solution) -> Self {
        let error_rate = validate_solution(&s, instance, DEFAULT_TOLERANCE).error_rate();
        Self {
            solution: Some(s),
            error_rate,
        }
    }

    fn infeasible() -> Self {
        Self {
            solution: None,
            error_rate: 1.0,
        }
    }
}

/// Every task on its own device.
pub fn wop(instance: &SystemInstance) -> BaselineResult {
    let n = instance.n_tasks();
    let s = Solution::assemble(
        instance,
        &vec![Placement::Local; n],
        &vec![Rates::default(); n],
    );
    BaselineResult::from_solution(instance, s)
}

// ---------------------------------------------------------------- ROP

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RopStats {
    pub relaxed_solves: usize,
    pub solver_calls: usize,
    /// Nodes whose rounded task set admits no allocation.
    pub infeasible_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RopResult {
    pub result: BaselineResult,
    pub stats: RopStats,
}

/// Largest relaxed component per task, first in local-fog-cloud order on
/// ties.
pub fn round_choices(x: &[(Placement, f64)], order: &BranchOrder) -> Placement {
    let mut best: Option<(Placement, f64)> = None;
    for p in &order.processor_order {
        if let Some(&(_, v)) = x.iter().find(|(q, _)| q == p) {
            if best.is_none_or(|(_, b)| v > b + 1e-9) {
                best = Some((*p, v));
            }
        }
    }
    best.expect("at least one choice").0
}

/// Solves the full relaxation, rounds every task to its dominant choice and
/// looks for a feasible allocation node by node. Nodes without one get a
/// demand-proportional split, so their tasks show up as deadline misses.
pub fn rop(instance: &SystemInstance) -> Result<RopResult> {
    let n = instance.n_tasks();
    let mut stats = RopStats::default();
    let relax = Relaxation::full(instance, &vec![None; n]).expect("nothing fixed");
    stats.relaxed_solves += 1;
    let res = solve(&relax.program, 1e-8)?;
    if res.status == SolveStatus::Infeasible {
        return Ok(RopResult {
            result: BaselineResult::infeasible(),
            stats,
        });
    }
    let order = BranchOrder::lfc(instance);
    let placements: Vec<Placement> = (0..n)
        .map(|i| {
            let x: Vec<(Placement, f64)> = relax
                .choices
                .iter()
                .filter(|c| c.0 == i)
                .map(|&(_, p, v)| (p, res.point[v]))
                .collect();
            round_choices(&x, &order)
        })
        .collect();
    let rates = repair(instance, &placements, &mut stats)?;
    let s = Solution::assemble(instance, &placements, &rates);
    Ok(RopResult {
        result: BaselineResult::from_solution(instance, s),
        stats,
    })
}

/// Allocation for fixed placements; feasible nodes keep a feasible split.
pub fn repair(
    instance: &SystemInstance,
    placements: &[Placement],
    stats: &mut RopStats,
) -> Result<Vec<Rates>> {
    let mut rates = vec![Rates::default(); instance.n_tasks()];
    for j in 0..instance.n_nodes() {
        let fog: Vec<usize> = (0..placements.len())
            .filter(|&i| placements[i] == Placement::Fog(j))
            .collect();
        let cloud: Vec<usize> = (0..placements.len())
            .filter(|&i| placements[i] == Placement::Cloud(j))
            .collect();
        if fog.is_empty() && cloud.is_empty() {
            continue;
        }
        let alloc = match Subproblem::new(instance, j, &fog, &cloud) {
            Ok(sub) => {
                let c = check_node(&sub, Mode::S, None)?;
                stats.solver_calls += c.solver_calls;
                c.allocation
            }
            Err(Error::CloudInfeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        let alloc = alloc.unwrap_or_else(|| {
            stats.infeasible_nodes += 1;
            proportional(instance, j, &fog, &cloud)
        });
        for (i, r) in alloc {
            rates[i] = r;
        }
    }
    Ok(rates)
}

fn proportional(
    instance: &SystemInstance,
    j: usize,
    fog: &[usize],
    cloud: &[usize],
) -> NodeAllocation {
    let caps = instance.node(j).caps();
    let demand = |i: usize, is_fog: bool| {
        let t = instance.task(i);
        [
            t.input_size,
            t.output_size,
            if is_fog { t.cpu_cycles } else { 0.0 },
        ]
    };
    let all: Vec<(usize, [f64; 3])> = fog
        .iter()
        .map(|&i| (i, demand(i, true)))
        .chain(cloud.iter().map(|&i| (i, demand(i, false))))
        .collect();
    let mut total = [0.0; 3];
    for (_, d) in &all {
        (0..3).for_each(|k| total[k] += d[k]);
    }
    let share = |v: f64, k: usize| {
        if total[k] > 0.0 {
            caps[k] * v / total[k]
        } else {
            0.0
        }
    };
    all.iter()
        .map(|(i, d)| {
            (
                *i,
                Rates::new(share(d[0], 0), share(d[1], 1), share(d[2], 2)),
            )
        })
        .collect()
}

// ---------------------------------------------------------------- AOP

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AopStats {
    pub nodes: usize,
    pub leaves: usize,
    pub convex_solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AopResult {
    pub result: BaselineResult,
    /// Mean task delay of the returned assignment.
    pub mean_delay: f64,
    pub stats: AopStats,
}

/// Raw demands a placement puts on its node, and its fixed delay part.
fn demands(instance: &SystemInstance, i: usize, p: Placement) -> ([f64; 3], f64) {
    let t = instance.task(i);
    let cl = instance.cloud();
    match p {
        Placement::Fog(_) => ([t.input_size, t.output_size, t.cpu_cycles], 0.0),
        Placement::Cloud(_) => (
            [t.input_size, t.output_size, 0.0],
            (t.input_size + t.output_size) / cl.backhaul_rate + t.cpu_cycles / cl.cpu_rate_per_task,
        ),
        Placement::Local => unreachable!("offloaded placements only"),
    }
}

struct Aop<'a> {
    instance: &'a SystemInstance,
    options: Vec<Placement>,
    /// sqrt of raw demands per task and option, plus constant delay.
    roots: Vec<Vec<([f64; 3], f64)>>,
    /// Nearest lower node interchangeable with each node for this objective.
    twin_of: Vec<Option<usize>>,
    best: f64,
    best_assign: Option<(Vec<Placement>, Vec<Rates>, f64)>,
    /// Per-node optimum keyed by node and its fog and cloud task lists.
    memo: HashMap<(usize, Vec<usize>, Vec<usize>), Option<(f64, NodeAllocation)>>,
    stats: AopStats,
}

impl Aop<'_> {
    fn slot(&self, p: Placement) -> usize {
        self.options
            .iter()
            .position(|q| *q == p)
            .expect("offload option")
    }

    /// Closed-form lower bound: fixed tasks at their square-root split, each
    /// open task at its cheapest marginal increase.
    fn bound(&self, fixed: &[Option<Placement>], allowed: &[Vec<bool>]) -> f64 {
        let n_nodes = self.instance.n_nodes();
        let mut s = vec![[0.0f64; 3]; n_nodes];
        let mut constant = 0.0;
        for (i, f) in fixed.iter().enumerate() {
            if let Some(p) = f {
                let (r, c) = self.roots[i][self.slot(*p)];
                let j = p.node().unwrap();
                (0..3).for_each(|d| s[j][d] += r[d]);
                constant += c;
            }
        }
        let mut total = constant;
        for j in 0..n_nodes {
            let caps = self.instance.node(j).caps();
            total += (0..3).map(|d| s[j][d] * s[j][d] / caps[d]).sum::<f64>();
        }
        for (i, f) in fixed.iter().enumerate() {
            if f.is_some() {
                continue;
            }
            let mut inc = f64::INFINITY;
            for (o, p) in self.options.iter().enumerate() {
                if !allowed[i][o] {
                    continue;
                }
                let (r, c) = self.roots[i][o];
                let j = p.node().unwrap();
                let caps = self.instance.node(j).caps();
                let v: f64 = (0..3)
                    .map(|d| (2.0 * s[j][d] * r[d] + r[d] * r[d]) / caps[d])
                    .sum::<f64>()
                    + c;
                inc = inc.min(v);
            }
            total += inc;
        }
        total
    }

    fn open_options(&self, fixed: &[Option<Placement>]) -> Option<Vec<Vec<bool>>> {
        let inst = self.instance;
        let cl = inst.cloud();
        let mut load = vec![[0.0f64; 3]; inst.n_nodes()];
        for (i, f) in fixed.iter().enumerate() {
            if let Some(p) = f {
                let tier = if matches!(p, Placement::Fog(_)) {
                    Tier::Fog
                } else {
                    Tier::Cloud
                };
                let r = relative_size(inst.task(i), tier, cl).ok()?;
                let j = p.node().unwrap();
                (0..3).for_each(|d| load[j][d] += r.as_array()[d]);
            }
        }
        let fits = |j: usize, add: [f64; 3]| {
            let caps = inst.node(j).caps();
            (0..3).all(|d| load[j][d] + add[d] <= caps[d])
        };
        if (0..inst.n_nodes()).any(|j| !fits(j, [0.0; 3])) {
            return None;
        }
        let used: Vec<bool> = (0..inst.n_nodes())
            .map(|j| fixed.iter().any(|f| f.and_then(|p| p.node()) == Some(j)))
            .collect();
        let mut allowed = vec![Vec::new(); fixed.len()];
        for (i, f) in fixed.iter().enumerate() {
            if f.is_some() {
                continue;
            }
            let task = inst.task(i);
            let fog = relative_size(task, Tier::Fog, cl).ok();
            let cloud = relative_size(task, Tier::Cloud, cl).ok();
            allowed[i] = self
                .options
                .iter()
                .map(|p| {
                    let j = p.node().unwrap();
                    // an empty node whose empty twin comes first adds nothing new
                    if !used[j] && self.twin_of[j].is_some_and(|k| !used[k]) {
                        return false;
                    }
                    match *p {
                        Placement::Fog(_) => fog.is_some_and(|r| fits(j, r.as_array())),
                        _ => cloud.is_some_and(|r| fits(j, [r.input, r.output, 0.0])),
                    }
                })
                .collect();
            if !allowed[i].iter().any(|a| *a) {
                return None;
            }
        }
        Some(allowed)
    }

    fn leaf(&mut self, placements: &[Placement]) -> Result<()> {
        self.stats.leaves += 1;
        let n_nodes = self.instance.n_nodes();
        let mut groups = Vec::with_capacity(n_nodes);
        let mut floors = Vec::with_capacity(n_nodes);
        for j in 0..n_nodes {
            let fog: Vec<usize> = (0..placements.len())
                .filter(|&i| placements[i] == Placement::Fog(j))
                .collect();
            let cloud: Vec<usize> = (0..placements.len())
                .filter(|&i| placements[i] == Placement::Cloud(j))
                .collect();
            // unconstrained square-root split never beats the deadline-aware optimum
            let caps = self.instance.node(j).caps();
            let mut s = [0.0f64; 3];
            let mut constant = 0.0;
            for (&i, p) in fog
                .iter()
                .map(|i| (i, Placement::Fog(j)))
                .chain(cloud.iter().map(|i| (i, Placement::Cloud(j))))
            {
                let (r, c) = self.roots[i][self.slot(p)];
                (0..3).for_each(|d| s[d] += r[d]);
                constant += c;
            }
            floors.push(constant + (0..3).map(|d| s[d] * s[d] / caps[d]).sum::<f64>());
            groups.push((fog, cloud));
        }
        let mut rates = vec![Rates::default(); placements.len()];
        let mut total = 0.0;
        let mut rest: f64 = floors.iter().sum();
        for (j, (fog, cloud)) in groups.into_iter().enumerate() {
            rest -= floors[j];
            if fog.is_empty() && cloud.is_empty() {
                continue;
            }
            let key = (j, fog, cloud);
            let node = match self.memo.get(&key) {
                Some(v) => v.clone(),
                None => {
                    let v = min_delay_node(self.instance, j, &key.1, &key.2, &mut self.stats)?;
                    self.memo.insert(key, v.clone());
                    v
                }
            };
            let Some((d, alloc)) = node else {
                return Ok(());
            };
            total += d;
            if dominated(total + rest, self.best) {
                return Ok(());
            }
            for (i, r) in alloc {
                rates[i] = r;
            }
        }
        if !dominated(total, self.best) {
            self.best = total;
            self.best_assign = Some((placements.to_vec(), rates, total));
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        let n = self.instance.n_tasks();
        let mut stack = vec![vec![None; n]];
        while let Some(fixed) = stack.pop() {
            self.stats.nodes += 1;
            let Some(allowed) = self.open_options(&fixed) else {
                continue;
            };
            if dominated(self.bound(&fixed, &allowed), self.best) {
                continue;
            }
            let Some(next) = fixed.iter().position(Option::is_none) else {
                let placements: Vec<Placement> = fixed.iter().map(|f| f.unwrap()).collect();
                self.leaf(&placements)?;
                continue;
            };
            // most promising child on top of the stack, ties in option order
            let mut children: Vec<(f64, Vec<Option<Placement>>)> = (0..self.options.len())
                .rev()
                .filter(|&o| allowed[next][o])
                .map(|o| {
                    let mut c = fixed.clone();
                    c[next] = Some(self.options[o]);
                    let mut a = allowed.clone();
                    a[next] = Vec::new();
                    (self.bound(&c, &a), c)
                })
                .collect();
            children.sort_by(|a, b| b.0.total_cmp(&a.0));
            stack.extend(children.into_iter().map(|(_, c)| c));
        }
        Ok(())
    }
}

/// Minimum total delay of one node's tasks meeting every deadline, with the
/// rates achieving it. `None` if the node cannot serve them.
fn min_delay_node(
    instance: &SystemInstance,
    j: usize,
    fog: &[usize],
    cloud: &[usize],
    stats: &mut AopStats,
) -> Result<Option<(f64, NodeAllocation)>> {
    let sub = match Subproblem::new(instance, j, fog, cloud) {
        Ok(s) => s,
        Err(Error::CloudInfeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if fast_infeasible(&sub).is_some() {
        return Ok(None);
    }
    let caps = instance.node(j).caps();
    let tasks: Vec<(usize, Placement)> = fog
        .iter()
        .map(|&i| (i, Placement::Fog(j)))
        .chain(cloud.iter().map(|&i| (i, Placement::Cloud(j))))
        .collect();
    let dem: Vec<([f64; 3], f64)> = tasks
        .iter()
        .map(|&(i, p)| demands(instance, i, p))
        .collect();
    let delays = |alloc: &NodeAllocation| -> Vec<f64> {
        tasks
            .iter()
            .zip(alloc)
            .map(|(&(i, p), (_, r))| option_delay(instance, i, p, r))
            .collect()
    };
    let meets = |d: &[f64]| {
        tasks.iter().zip(d).all(|(&(i, _), v)| {
            let t = instance.task(i).deadline;
            *v <= t + DEFAULT_TOLERANCE * t.max(1.0)
        })
    };

    // square-root split, optimal when no deadline binds
    let mut sums = [0.0; 3];
    for (a, _) in &dem {
        (0..3).for_each(|d| sums[d] += a[d].sqrt());
    }
    let closed: NodeAllocation = tasks
        .iter()
        .zip(&dem)
        .map(|(&(i, _), (a, _))| {
            let r = |d: usize| {
                if sums[d] > 0.0 {
                    caps[d] * a[d].sqrt() / sums[d]
                } else {
                    0.0
                }
            };
            (i, Rates::new(r(0), r(1), r(2)))
        })
        .collect();
    let d = delays(&closed);
    if meets(&d) {
        return Ok(Some((d.iter().sum(), closed)));
    }

    let check = check_node(&sub, Mode::F, None)?;
    let Some(feasible) = check.allocation else {
        return Ok(None);
    };
    let mut best = (delays(&feasible).iter().sum::<f64>(), feasible.clone());

    // epigraph form: minimise Σ τ with each task's variable delay ≤ τ
    let mut p = ConvexProgram::new();
    let mut rate_vars: Vec<[Option<usize>; 3]> = Vec::new();
    let mut per_dim: [Vec<usize>; 3] = Default::default();
    let mut start = Vec::new();
    for (k, &(i, _)) in tasks.iter().enumerate() {
        let (a, c) = dem[k];
        let t = instance.task(i).deadline - c;
        let guess = feasible[k].1.as_array();
        let mut ids = [None; 3];
        let mut row = Vec::new();
        for d in 0..3 {
            if a[d] > 0.0 {
                let v = p.add_var(RATE_FLOOR, caps[d], 0.0);
                start.push((guess[d] * (1.0 - 1e-6)).max(2.0 * RATE_FLOOR));
                ids[d] = Some(v);
                per_dim[d].push(v);
                row.push(Term::Inverse { den: v, coef: a[d] });
            }
        }
        let tau = p.add_var(0.0, t, 1.0);
        start.push(t * (1.0 - 1e-9));
        row.push(Term::Linear {
            var: tau,
            coef: -1.0,
        });
        p.add_le(row, 0.0);
        rate_vars.push(ids);
    }
    for d in 0..3 {
        if !per_dim[d].is_empty() {
            p.add_le(
                per_dim[d]
                    .iter()
                    .map(|&v| Term::Linear { var: v, coef: 1.0 })
                    .collect(),
                caps[d],
            );
        }
    }
    p.set_start(start);
    stats.convex_solves += 1;
    let res = solve_convex(&p, &SolveOptions::default())?;
    if res.status == SolveStatus::Optimal {
        let mut used = [0.0; 3];
        for ids in &rate_vars {
            (0..3).for_each(|d| used[d] += ids[d].map_or(0.0, |v| res.point[v]));
        }
        let alloc: NodeAllocation = tasks
            .iter()
            .zip(&rate_vars)
            .map(|(&(i, _), ids)| {
                let r =
                    |d: usize| ids[d].map_or(0.0, |v| res.point[v] * (caps[d] / used[d]).min(1.0));
                (i, Rates::new(r(0), r(1), r(2)))
            })
            .collect();
        let d = delays(&alloc);
        let total: f64 = d.iter().sum();
        if meets(&d) && total < best.0 {
            best = (total, alloc);
        }
    }
    Ok(Some(best))
}

/// All tasks offloaded, placements and rates chosen for the lowest mean
/// delay; energy is whatever that costs.
pub fn aop(instance: &SystemInstance) -> Result<AopResult> {
    let n = instance.n_tasks();
    let options: Vec<Placement> = instance
        .placements()
        .into_iter()
        .filter(|p| p.is_offloaded())
        .collect();
    let roots = (0..n)
        .map(|i| {
            options
                .iter()
                .map(|&p| {
                    let (a, c) = demands(instance, i, p);
                    ([a[0].sqrt(), a[1].sqrt(), a[2].sqrt()], c)
                })
                .collect()
        })
        .collect();
    let twin_of = twins(instance);
    let mut search = Aop {
        instance,
        options,
        roots,
        twin_of,
        best: f64::INFINITY,
        best_assign: None,
        memo: HashMap::new(),
        stats: AopStats::default(),
    };
    search.run()?;
    let stats = search.stats;
    Ok(match search.best_assign {
        Some((placements, rates, total)) => AopResult {
            result: BaselineResult::from_solution(
                instance,
                Solution::assemble(instance, &placements, &rates),
            ),
            mean_delay: if n == 0 { 0.0 } else { total / n as f64 },
            stats,
        },
        None => AopResult {
            result: BaselineResult::infeasible(),
            mean_delay: f64::NAN,
            stats,
        },
    })
}
