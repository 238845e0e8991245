use serde::{Deserialize, Serialize};

use super::{Placement, Solution, SystemInstance};

/// Relative slack allowed on every constraint.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// Task delay exceeds its deadline.
    Deadline {
        task: usize,
        delay: f64,
        deadline: f64,
    },
    /// Granted uplink at a node exceeds its capacity.
    Uplink {
        node: usize,
        used: f64,
        cap: f64,
    },
    Downlink {
        node: usize,
        used: f64,
        cap: f64,
    },
    Cpu {
        node: usize,
        used: f64,
        cap: f64,
    },
    /// Decision row is not one-hot, or selects the excluded slot.
    NotOneHot {
        task: usize,
    },
    /// Negative rate, a rate on an unselected pair, or CPU granted to a
    /// cloud-forwarded task.
    BadAllocation {
        task: usize,
        node: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub n_tasks: usize,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    /// Tasks missing their deadline (or without a valid decision), as a
    /// fraction of all tasks.
    pub fn error_rate(&self) -> f64 {
        if self.n_tasks == 0 {
            return 0.0;
        }
        let mut late: Vec<usize> = self
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::Deadline { task, .. } | Violation::NotOneHot { task } => Some(*task),
                _ => None,
            })
            .collect();
        late.sort_unstable();
        late.dedup();
        late.len() as f64 / self.n_tasks as f64
    }
}

fn exceeds(value: f64, limit: f64, tol: f64) -> bool {
    !(value <= limit + tol * limit.abs().max(1.0))
}

pub fn validate_solution(
    solution: &Solution,
    instance: &SystemInstance,
    tol: f64,
) -> ValidationReport {
    let n_nodes = instance.n_nodes();
    let mut violations = Vec::new();

    for i in 0..instance.n_tasks() {
        let placement = solution.decision.placement(i, n_nodes);
        if placement.is_none() {
            violations.push(Violation::NotOneHot { task: i });
        }
        let deadline = instance.task(i).deadline;
        let delay = solution
            .per_task_delay
            .get(i)
            .copied()
            .unwrap_or(f64::INFINITY);
        if placement.is_some() && exceeds(delay, deadline, tol) {
            violations.push(Violation::Deadline {
                task: i,
                delay,
                deadline,
            });
        }
        for j in 0..n_nodes {
            let r = solution.allocation.get(i, j);
            let selected = placement.and_then(Placement::node) == Some(j);
            let cpu_forbidden = matches!(placement, Some(Placement::Cloud(_)));
            let bad = r.as_array().iter().any(|v| *v < 0.0 || v.is_nan())
                || (!selected && !r.is_zero())
                || (selected && cpu_forbidden && r.cpu != 0.0);
            if bad {
                violations.push(Violation::BadAllocation { task: i, node: j });
            }
        }
    }

    for (j, node) in instance.nodes().iter().enumerate() {
        let [up, down, cpu] = solution.allocation.node_usage(j);
        if exceeds(up, node.uplink_cap, tol) {
            violations.push(Violation::Uplink {
                node: j,
                used: up,
                cap: node.uplink_cap,
            });
        }
        if exceeds(down, node.downlink_cap, tol) {
            violations.push(Violation::Downlink {
                node: j,
                used: down,
                cap: node.downlink_cap,
            });
        }
        if exceeds(cpu, node.cpu_cap, tol) {
            violations.push(Violation::Cpu {
                node: j,
                used: cpu,
                cap: node.cpu_cap,
            });
        }
    }

    ValidationReport {
        violations,
        n_tasks: instance.n_tasks(),
    }
}
