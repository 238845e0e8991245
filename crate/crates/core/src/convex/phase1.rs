//! Feasibility phase: find a point strictly inside every row, or certify
//! that none exists by minimising the total slack needed.

use super::solver::{barrier, Blocks, Compiled, Monitor, Row, SolveOptions};
use super::{ConvexError, ConvexProgram, Term};

/// Slack above which the feasibility phase declares a program infeasible.
pub const INFEASIBLE_SLACK: f64 = 1e-6;

/// Rows evaluating above this are given a slack variable.
const STRICT_MARGIN: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Strictly interior point.
    Interior(Vec<f64>),
    /// The rows can be met only up to `slack`, at most
    /// [`INFEASIBLE_SLACK`]; `point` is the best point found.
    Borderline { point: Vec<f64>, slack: f64 },
    /// The optimal total slack, above the threshold.
    Infeasible { slack: f64 },
}

pub(super) enum PhaseOne {
    Interior {
        point: Vec<f64>,
        newton: usize,
    },
    /// Feasible only on the boundary; `relax` lists (row, rhs increase)
    /// that make `point` strictly interior.
    Borderline {
        point: Vec<f64>,
        relax: Vec<(usize, f64)>,
        newton: usize,
    },
    Infeasible {
        slack: f64,
        newton: usize,
    },
}

pub fn feasibility_phase(program: &ConvexProgram) -> Result<Feasibility, ConvexError> {
    program.check()?;
    let Some(cp) = Compiled::build(program) else {
        return Ok(Feasibility::Infeasible {
            slack: f64::INFINITY,
        });
    };
    let x0 = cp.start_point(program.start())?;
    Ok(match phase_one(&cp, x0, &SolveOptions::default()) {
        PhaseOne::Interior { point, .. } => Feasibility::Interior(cp.expand(&point)),
        PhaseOne::Borderline { point, relax, .. } => Feasibility::Borderline {
            point: cp.expand(&point),
            slack: relax.iter().map(|(_, a)| a).sum(),
        },
        PhaseOne::Infeasible { slack, .. } => Feasibility::Infeasible { slack },
    })
}

struct SlackMonitor<'a> {
    original: &'a [Row],
    n: usize,
    interior: bool,
    certified: Option<f64>,
}

impl Monitor for SlackMonitor<'_> {
    fn after_step(&mut self, x: &[f64]) -> bool {
        let x = &x[..self.n];
        self.interior = self.original.iter().all(|r| r.value(x) < 0.0);
        self.interior
    }

    fn after_centering(&mut self, objective: f64, gap: f64) -> bool {
        if objective - gap > INFEASIBLE_SLACK {
            self.certified = Some(objective);
            return true;
        }
        false
    }
}

pub(super) fn phase_one(cp: &Compiled, x0: Vec<f64>, opts: &SolveOptions) -> PhaseOne {
    let f0: Vec<f64> = cp.rows.iter().map(|r| r.value(&x0)).collect();
    let violated: Vec<usize> = (0..cp.rows.len())
        .filter(|&i| f0[i] >= STRICT_MARGIN)
        .collect();
    if violated.is_empty() {
        return PhaseOne::Interior {
            point: x0,
            newton: 0,
        };
    }

    let n = cp.n;
    let k = violated.len();
    let mut ext = cp.clone();
    ext.n = n + k;
    ext.lb.extend(std::iter::repeat_n(0.0, k));
    ext.ub.extend(std::iter::repeat_n(f64::INFINITY, k));
    ext.cost = vec![0.0; n];
    ext.cost.extend(std::iter::repeat_n(1.0, k));
    let mut x = x0;
    for (s, &i) in violated.iter().enumerate() {
        ext.rows[i].terms.push(Term::Linear {
            var: n + s,
            coef: -1.0,
        });
        x.push(f0[i] + 1.0);
    }

    let blocks = Blocks::build(&ext);
    let mut monitor = SlackMonitor {
        original: &cp.rows,
        n,
        interior: false,
        certified: None,
    };
    let phase_opts = SolveOptions {
        tol: 1e-10,
        ..*opts
    };
    let run = barrier(&ext, &blocks, x, &phase_opts, &mut monitor);
    let point = run.x[..n].to_vec();
    if monitor.interior {
        return PhaseOne::Interior {
            point,
            newton: run.newton,
        };
    }
    if let Some(slack) = monitor.certified {
        return PhaseOne::Infeasible {
            slack,
            newton: run.newton,
        };
    }
    if run.objective > INFEASIBLE_SLACK {
        return PhaseOne::Infeasible {
            slack: run.objective,
            newton: run.newton,
        };
    }
    let relax = violated
        .iter()
        .filter_map(|&i| {
            let v = cp.rows[i].value(&point);
            (v >= STRICT_MARGIN).then(|| (i, v.max(0.0) + 1e-9 * cp.rows[i].rhs.abs().max(1.0)))
        })
        .collect();
    PhaseOne::Borderline {
        point,
        relax,
        newton: run.newton,
    }
}
