//! Per-node resource feasibility: given the tasks a node processes and the
//! tasks it forwards to the cloud, can uplink, downlink and CPU be split so
//! that every deadline holds?

use serde::{Deserialize, Serialize};

use crate::convex::{solve_with, ConvexProgram, SolveOptions, SolveStatus, Term, RATE_FLOOR};
use crate::error::{Error, Result};
use crate::model::{relative_size, Placement, Rates, RelativeSize, SystemInstance, Tier};

/// Total normalised slack below which SP2 certifies feasibility.
pub const SP2_ZERO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub node: usize,
    /// (uplink, downlink, cpu) capacities.
    pub caps: [f64; 3],
    /// Tasks processed at the node with their relative sizes.
    pub fog_tasks: Vec<(usize, RelativeSize)>,
    /// Tasks forwarded to the cloud; their CPU component is zero.
    pub cloud_tasks: Vec<(usize, RelativeSize)>,
}

impl Subproblem {
    /// Builds the subproblem of `node` from task indices. Fails with
    /// [`Error::CloudInfeasible`] when a forwarded task cannot meet its
    /// deadline whatever the radio rates.
    pub fn new(
        instance: &SystemInstance,
        node: usize,
        fog: &[usize],
        cloud: &[usize],
    ) -> Result<Self> {
        let cl = instance.cloud();
        let fog_tasks = fog
            .iter()
            .map(|&i| relative_size(instance.task(i), Tier::Fog, cl).map(|r| (i, r)))
            .collect::<Result<_>>()?;
        let cloud_tasks = cloud
            .iter()
            .map(|&i| relative_size(instance.task(i), Tier::Cloud, cl).map(|r| (i, r)))
            .collect::<Result<_>>()?;
        Ok(Self {
            node,
            caps: instance.node(node).caps(),
            fog_tasks,
            cloud_tasks,
        })
    }

    /// Groups a full assignment into one subproblem per node.
    pub fn split(instance: &SystemInstance, placements: &[Placement]) -> Result<Vec<Self>> {
        let n_nodes = instance.n_nodes();
        let mut fog = vec![Vec::new(); n_nodes];
        let mut cloud = vec![Vec::new(); n_nodes];
        for (i, p) in placements.iter().enumerate() {
            match *p {
                Placement::Local => {}
                Placement::Fog(j) => fog[j].push(i),
                Placement::Cloud(j) => cloud[j].push(i),
            }
        }
        (0..n_nodes)
            .map(|j| Self::new(instance, j, &fog[j], &cloud[j]))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.fog_tasks.is_empty() && self.cloud_tasks.is_empty()
    }

    pub fn task_count(&self) -> usize {
        self.fog_tasks.len() + self.cloud_tasks.len()
    }

    fn all(&self) -> impl Iterator<Item = &(usize, RelativeSize)> {
        self.fog_tasks.iter().chain(&self.cloud_tasks)
    }

    /// Sums of relative uplink, downlink and CPU demand.
    pub fn demand(&self) -> [f64; 3] {
        let up = self.all().map(|(_, r)| r.input).sum();
        let down = self.all().map(|(_, r)| r.output).sum();
        let cpu = self.fog_tasks.iter().map(|(_, r)| r.cpu).sum();
        [up, down, cpu]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Up,
    Down,
    Cpu,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Up, Dimension::Down, Dimension::Cpu];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-task rates at the subproblem's node.
pub type NodeAllocation = Vec<(usize, Rates)>;

/// Aggregate demand test: if any resource is asked for more than its
/// capacity even before splitting, no allocation can work.
pub fn fast_infeasible(sub: &Subproblem) -> Option<Dimension> {
    let d = sub.demand();
    Dimension::ALL
        .into_iter()
        .find(|dim| d[dim.index()] > sub.caps[dim.index()])
}

/// Every rate proportional to the task's relative demand. Succeeds when the
/// balanced load `ΣD'/Ru + ΣD'ᵒ/Rd + ΣC'/Rf` is at most one; each task then
/// has satisfaction rate equal to that load.
pub fn balanced_allocation(sub: &Subproblem) -> Option<NodeAllocation> {
    let d = sub.demand();
    let load: f64 = (0..3).map(|k| d[k] / sub.caps[k]).sum();
    if load > 1.0 {
        return None;
    }
    let share = |x: f64, k: usize| {
        if d[k] > 0.0 {
            x * sub.caps[k] / d[k]
        } else {
            0.0
        }
    };
    Some(
        sub.all()
            .map(|(i, r)| {
                (
                    *i,
                    Rates::new(share(r.input, 0), share(r.output, 1), share(r.cpu, 2)),
                )
            })
            .collect(),
    )
}

/// Closed-form sufficient test: CPU goes first, proportionally, then the
/// radio budgets of fog tasks are scaled by the time CPU leaves them.
/// Returns an allocation meeting every deadline, or `None` when the test
/// is inconclusive.
pub fn fast_feasible(sub: &Subproblem) -> Option<NodeAllocation> {
    if sub.is_empty() {
        return Some(Vec::new());
    }
    let [ru, rd, rf] = sub.caps;
    let cpu: f64 = sub.fog_tasks.iter().map(|(_, r)| r.cpu).sum();
    let beta = cpu / rf;
    if beta >= 1.0 {
        return None;
    }
    let scale = 1.0 / (1.0 - beta);
    let scaled: Vec<(usize, f64, f64, f64)> = sub
        .fog_tasks
        .iter()
        .map(|(i, r)| (*i, r.input * scale, r.output * scale, r.cpu))
        .chain(
            sub.cloud_tasks
                .iter()
                .map(|(i, r)| (*i, r.input, r.output, 0.0)),
        )
        .collect();
    let gamma_u = scaled.iter().map(|s| s.1).sum::<f64>() / ru;
    let gamma_d = scaled.iter().map(|s| s.2).sum::<f64>() / rd;
    if gamma_u + gamma_d > 1.0 {
        return None;
    }
    let per = |x: f64, g: f64| if g > 0.0 { x / g } else { 0.0 };
    Some(
        scaled
            .iter()
            .map(|&(i, u, d, c)| {
                (
                    i,
                    Rates::new(per(u, gamma_u), per(d, gamma_d), per(c, beta)),
                )
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sp2Result {
    /// Optimal total normalised capacity excess `z₁ + z₂ + z₃`.
    pub objective: f64,
    /// Rates scaled back within capacity, when feasible.
    pub allocation: Option<NodeAllocation>,
    pub newton_iterations: usize,
}

/// Slack formulation: capacities may be exceeded by `z` (as a fraction of
/// capacity) at unit cost. Feasible iff the optimum is (numerically) zero.
pub fn solve_sp2(sub: &Subproblem, hint: Option<&NodeAllocation>) -> Result<Sp2Result> {
    if sub.is_empty() {
        return Ok(Sp2Result {
            objective: 0.0,
            allocation: Some(Vec::new()),
            newton_iterations: 0,
        });
    }
    let mut p = ConvexProgram::new();
    let mut vars: Vec<(usize, [Option<usize>; 3])> = Vec::new();
    let mut start = Vec::new();
    for (k, (i, r)) in sub.all().enumerate() {
        let fog = k < sub.fog_tasks.len();
        let demands = [r.input, r.output, if fog { r.cpu } else { 0.0 }];
        let active = demands.iter().filter(|d| **d > 0.0).count() as f64;
        let guess = hint
            .and_then(|h| h.iter().find(|(t, _)| t == i))
            .map(|(_, rates)| rates.as_array());
        let mut ids = [None; 3];
        let mut terms = Vec::new();
        for dim in 0..3 {
            if demands[dim] > 0.0 {
                let v = p.add_var(RATE_FLOOR, f64::INFINITY, 0.0);
                ids[dim] = Some(v);
                terms.push(Term::Inverse {
                    den: v,
                    coef: demands[dim],
                });
                // strictly inside the task's own deadline row
                let s = demands[dim] * (active + 1.0);
                start.push(guess.map(|g| g[dim]).filter(|g| *g > s).unwrap_or(s));
            }
        }
        p.add_le(terms, 1.0);
        vars.push((*i, ids));
    }
    let mut zs = [0; 3];
    for dim in 0..3 {
        let used: f64 = vars
            .iter()
            .filter_map(|(_, ids)| ids[dim])
            .map(|v| start[v])
            .sum();
        zs[dim] = p.add_var(0.0, f64::INFINITY, 1.0);
        start.push((used / sub.caps[dim] - 1.0).max(0.0) + 1.0);
        let mut row: Vec<Term> = vars
            .iter()
            .filter_map(|(_, ids)| ids[dim])
            .map(|v| Term::Linear {
                var: v,
                coef: 1.0 / sub.caps[dim],
            })
            .collect();
        row.push(Term::Linear {
            var: zs[dim],
            coef: -1.0,
        });
        p.add_le(row, 1.0);
    }
    p.set_start(start);
    let res = solve_with(&p, &SolveOptions::with_tol(1e-9))?;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::SolverFailure(
                "slack subproblem reported infeasible".into(),
            ))
        }
        SolveStatus::IterationLimit => {
            return Err(Error::SolverFailure(format!(
                "slack subproblem at node {} hit the iteration limit",
                sub.node + 1
            )))
        }
    }
    let objective = res.objective_value.max(0.0);
    let allocation = (objective <= SP2_ZERO).then(|| {
        let x = &res.point;
        let mut used = [0.0; 3];
        for (_, ids) in &vars {
            for dim in 0..3 {
                if let Some(v) = ids[dim] {
                    used[dim] += x[v];
                }
            }
        }
        let shrink: Vec<f64> = (0..3).map(|d| (sub.caps[d] / used[d]).min(1.0)).collect();
        vars.iter()
            .map(|(i, ids)| {
                let rate = |d: usize| ids[d].map(|v| x[v] * shrink[d]).unwrap_or(0.0);
                (*i, Rates::new(rate(0), rate(1), rate(2)))
            })
            .collect()
    });
    Ok(Sp2Result {
        objective,
        allocation,
        newton_iterations: res.newton_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Always solve the slack problem.
    S,
    /// Try the closed-form tests first.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStatus {
    FeasibleFast,
    FeasibleSolver,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCheck {
    pub status: SubStatus,
    pub allocation: Option<NodeAllocation>,
    /// Set when the aggregate-demand test decided infeasibility.
    pub fast_infeasible: Option<Dimension>,
    pub solver_calls: usize,
}

impl NodeCheck {
    pub fn is_feasible(&self) -> bool {
        self.status != SubStatus::Infeasible
    }

    /// Decided without the solver.
    pub fn is_fast(&self) -> bool {
        self.solver_calls == 0
    }
}

pub fn check_node(
    sub: &Subproblem,
    mode: Mode,
    hint: Option<&NodeAllocation>,
) -> Result<NodeCheck> {
    if mode == Mode::F {
        if let Some(dim) = fast_infeasible(sub) {
            return Ok(NodeCheck {
                status: SubStatus::Infeasible,
                allocation: None,
                fast_infeasible: Some(dim),
                solver_calls: 0,
            });
        }
        if let Some(a) = fast_feasible(sub) {
            return Ok(NodeCheck {
                status: SubStatus::FeasibleFast,
                allocation: Some(a),
                fast_infeasible: None,
                solver_calls: 0,
            });
        }
    }
    let r = solve_sp2(sub, hint)?;
    Ok(NodeCheck {
        status: if r.allocation.is_some() {
            SubStatus::FeasibleSolver
        } else {
            SubStatus::Infeasible
        },
        allocation: r.allocation,
        fast_infeasible: None,
        solver_calls: 1,
    })
}

/// Checks a full assignment node by node and returns the per-task rates if
/// every node is feasible. Calls made are added to `solver_calls`.
pub fn allocate(
    instance: &SystemInstance,
    placements: &[Placement],
    mode: Mode,
    solver_calls: &mut usize,
) -> Result<Option<Vec<Rates>>> {
    let subs = match Subproblem::split(instance, placements) {
        Ok(s) => s,
        Err(Error::CloudInfeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut rates = vec![Rates::default(); instance.n_tasks()];
    for sub in subs.iter().filter(|s| !s.is_empty()) {
        let check = check_node(sub, mode, None)?;
        *solver_calls += check.solver_calls;
        match check.allocation {
            Some(a) => {
                for (i, r) in a {
                    rates[i] = r;
                }
            }
            None => return Ok(None),
        }
    }
    // local tasks meet their deadline on their own or not at all
    for (i, p) in placements.iter().enumerate() {
        if *p == Placement::Local
            && instance.task(i).cpu_cycles / instance.profile(i).cpu_rate
                > instance.task(i).deadline
        {
            return Ok(None);
        }
    }
    Ok(Some(rates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::satisfaction_rate;

    fn rel(u: f64, d: f64, c: f64) -> RelativeSize {
        RelativeSize {
            input: u,
            output: d,
            cpu: c,
        }
    }

    fn sub(fog: &[RelativeSize], cloud: &[RelativeSize], caps: [f64; 3]) -> Subproblem {
        Subproblem {
            node: 0,
            caps,
            fog_tasks: fog.iter().copied().enumerate().collect(),
            cloud_tasks: cloud
                .iter()
                .copied()
                .enumerate()
                .map(|(k, r)| (k + fog.len(), r))
                .collect(),
        }
    }

    fn betas(s: &Subproblem, a: &NodeAllocation) -> Vec<f64> {
        s.fog_tasks
            .iter()
            .chain(&s.cloud_tasks)
            .map(|(i, r)| satisfaction_rate(r, &a.iter().find(|(t, _)| t == i).unwrap().1))
            .collect()
    }

    const CAPS: [f64; 3] = [72.0, 72.0, 10.0];

    #[test]
    fn balanced_two_fog_tasks() {
        let s = sub(&[rel(10.0, 3.6, 2.0), rel(10.0, 3.6, 2.0)], &[], CAPS);
        let a = balanced_allocation(&s).unwrap();
        for (_, r) in &a {
            assert!((r.uplink - 36.0).abs() < 1e-12);
            assert!((r.downlink - 36.0).abs() < 1e-12);
            assert!((r.cpu - 5.0).abs() < 1e-12);
        }
        for b in betas(&s, &a) {
            assert!((b - (20.0 / 72.0 + 7.2 / 72.0 + 0.4)).abs() < 1e-12);
            assert!((b - 0.778).abs() < 1e-3);
        }
        assert_eq!(fast_feasible(&s).unwrap(), a);
    }

    #[test]
    fn empty_subproblem_is_trivially_feasible() {
        let s = sub(&[], &[], CAPS);
        assert_eq!(fast_feasible(&s), Some(Vec::new()));
        assert_eq!(fast_infeasible(&s), None);
    }

    #[test]
    fn cpu_first_rescue_where_balanced_fails() {
        let s = sub(
            &[rel(10.0, 3.6, 2.0), rel(10.0, 3.6, 2.0)],
            &[rel(20.0, 2.0, 0.0)],
            CAPS,
        );
        assert!(balanced_allocation(&s).is_none());
        let a = fast_feasible(&s).expect("balanced allocation");
        for b in betas(&s, &a) {
            assert!(b <= 1.0 + 1e-12, "{b}");
        }
        let cpu: f64 = a.iter().map(|(_, r)| r.cpu).sum();
        let up: f64 = a.iter().map(|(_, r)| r.uplink).sum();
        assert!((cpu - 10.0).abs() < 1e-9 && (up - 72.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_demand_tests() {
        assert_eq!(
            fast_infeasible(&sub(&[rel(40.0, 1.0, 1.0), rel(40.0, 1.0, 1.0)], &[], CAPS)),
            Some(Dimension::Up)
        );
        assert_eq!(
            fast_infeasible(&sub(&[rel(1.0, 1.0, 5.0), rel(1.0, 1.0, 5.1)], &[], CAPS)),
            Some(Dimension::Cpu)
        );
        assert_eq!(
            fast_infeasible(&sub(&[rel(1.0, 1.0, 1.0)], &[], CAPS)),
            None
        );
    }

    #[test]
    fn sp2_agrees_with_fast_paths() {
        let feasible = sub(&[rel(10.0, 3.6, 2.0), rel(10.0, 3.6, 2.0)], &[], CAPS);
        let r = solve_sp2(&feasible, None).unwrap();
        assert!(r.objective <= SP2_ZERO);
        let a = r.allocation.unwrap();
        for b in betas(&feasible, &a) {
            assert!(b <= 1.0 + 1e-6);
        }
        let infeasible = sub(&[rel(40.0, 1.0, 1.0), rel(40.0, 1.0, 1.0)], &[], CAPS);
        let r = solve_sp2(&infeasible, None).unwrap();
        assert!(r.objective > SP2_ZERO, "{}", r.objective);
        assert!(r.allocation.is_none());
    }

    #[test]
    fn mode_s_uses_solver_mode_f_does_not() {
        let s = sub(&[rel(10.0, 3.6, 2.0), rel(10.0, 3.6, 2.0)], &[], CAPS);
        let f = check_node(&s, Mode::F, None).unwrap();
        assert_eq!((f.status, f.solver_calls), (SubStatus::FeasibleFast, 0));
        let sv = check_node(&s, Mode::S, None).unwrap();
        assert_eq!((sv.status, sv.solver_calls), (SubStatus::FeasibleSolver, 1));
    }
}
