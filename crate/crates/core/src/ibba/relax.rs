//! Continuous relaxation of a partly fixed assignment.
//!
//! Each open choice `x ∈ [0, 1]` enters its task's delay row as a
//! perspective term `d·x²/r` against the rate it would be served with, so the
//! row is convex and reduces to the exact delay at binary `x`. Rates are
//! shared between processing at node `j` and forwarding through it, since a
//! task uses at most one of the two.

use crate::convex::{ConvexProgram, Term, RATE_FLOOR};
use crate::model::{local_delay, option_energy, relative_size, Placement, SystemInstance, Tier};

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub program: ConvexProgram,
    /// Choice variables of open tasks: (task, placement, variable).
    pub choices: Vec<(usize, Placement, usize)>,
    /// Rate variables: (task, node, dimension, variable).
    pub rates: Vec<(usize, usize, usize, usize)>,
    /// Energy of the fixed tasks, not part of the program objective.
    pub fixed_energy: f64,
}

impl Relaxation {
    pub fn n_choice_vars(&self) -> usize {
        self.choices.len()
    }

    pub fn n_rate_vars(&self) -> usize {
        self.rates.len()
    }

    /// Builds the relaxation. `allowed[i]` masks the placements of an open
    /// task `i` in admissible order; fixed tasks ignore it. Returns `None`
    /// when a fixed placement is impossible on its own (local too slow or
    /// cloud past its deadline).
    pub fn build(
        instance: &SystemInstance,
        fixed: &[Option<Placement>],
        allowed: &[Vec<bool>],
    ) -> Option<Self> {
        let n_nodes = instance.n_nodes();
        let admissible = instance.placements();
        let cl = instance.cloud();
        let mut p = ConvexProgram::new();
        let mut choices = Vec::new();
        let mut rates = Vec::new();
        let mut fixed_energy = 0.0;
        let mut start = Vec::new();

        // rate variables per node and dimension, for the capacity rows
        let mut per_dim: Vec<[Vec<usize>; 3]> = vec![Default::default(); n_nodes];
        let mut new_rate =
            |p: &mut ConvexProgram, i: usize, j: usize, d: usize, start: &mut Vec<f64>| {
                let cap = instance.node(j).caps()[d];
                let v = p.add_var(RATE_FLOOR, cap, 0.0);
                start.push(0.0);
                per_dim[j][d].push(v);
                rates.push((i, j, d, v));
                v
            };

        for (i, f) in fixed.iter().enumerate() {
            let task = instance.task(i);
            match f {
                Some(Placement::Local) => {
                    if local_delay(task, instance.profile(i)) > task.deadline {
                        return None;
                    }
                    fixed_energy += option_energy(instance, i, Placement::Local);
                }
                Some(pl @ (Placement::Fog(j) | Placement::Cloud(j))) => {
                    let tier = if matches!(pl, Placement::Fog(_)) {
                        Tier::Fog
                    } else {
                        Tier::Cloud
                    };
                    let rel = relative_size(task, tier, cl).ok()?;
                    fixed_energy += option_energy(instance, i, *pl);
                    let dims = if tier == Tier::Fog { 3 } else { 2 };
                    let terms = (0..dims)
                        .map(|d| Term::Inverse {
                            den: new_rate(&mut p, i, *j, d, &mut start),
                            coef: rel.as_array()[d],
                        })
                        .filter(|t| !matches!(t, Term::Inverse { coef, .. } if *coef == 0.0))
                        .collect();
                    p.add_le(terms, 1.0);
                }
                None => {
                    let t = task.deadline;
                    let fixed_cloud = (task.input_size + task.output_size) / cl.backhaul_rate
                        + task.cpu_cycles / cl.cpu_rate_per_task;
                    let open: Vec<Placement> = admissible
                        .iter()
                        .zip(&allowed[i])
                        .filter(|(_, a)| **a)
                        .map(|(p, _)| *p)
                        .collect();
                    let mut node_rates: Vec<Option<[Option<usize>; 3]>> = vec![None; n_nodes];
                    let mut terms = Vec::new();
                    let mut eq = Vec::new();
                    for pl in &open {
                        let x = p.add_var(0.0, 1.0, option_energy(instance, i, *pl));
                        start.push(1.0 / open.len() as f64);
                        choices.push((i, *pl, x));
                        eq.push(Term::Linear { var: x, coef: 1.0 });
                        match *pl {
                            Placement::Local => terms.push(Term::Square {
                                var: x,
                                coef: local_delay(task, instance.profile(i)) / t,
                            }),
                            Placement::Fog(j) | Placement::Cloud(j) => {
                                let fog = matches!(pl, Placement::Fog(_));
                                let slot = node_rates[j].get_or_insert([None; 3]);
                                let dims = if fog { 3 } else { 2 };
                                for d in 0..dims {
                                    if slot[d].is_none() {
                                        slot[d] = Some(new_rate(&mut p, i, j, d, &mut start));
                                    }
                                }
                                let demand = [task.input_size, task.output_size, task.cpu_cycles];
                                for d in 0..dims {
                                    if demand[d] > 0.0 {
                                        terms.push(Term::Ratio {
                                            num: x,
                                            den: slot[d].unwrap(),
                                            coef: demand[d] / t,
                                        });
                                    }
                                }
                                if !fog {
                                    terms.push(Term::Square {
                                        var: x,
                                        coef: fixed_cloud / t,
                                    });
                                }
                            }
                        }
                    }
                    if open.is_empty() {
                        return None;
                    }
                    p.add_eq(eq, 1.0);
                    p.add_le(terms, 1.0);
                }
            }
        }

        for (j, dims) in per_dim.iter().enumerate() {
            let caps = instance.node(j).caps();
            for d in 0..3 {
                let vars = &dims[d];
                if vars.is_empty() {
                    continue;
                }
                for &v in vars {
                    start[v] = caps[d] / (vars.len() as f64 + 1.0);
                }
                // unselected rates sit at the floor; leave room for them
                let slack = vars.len() as f64 * RATE_FLOOR / caps[d];
                let row = vars
                    .iter()
                    .map(|&v| Term::Linear {
                        var: v,
                        coef: 1.0 / caps[d],
                    })
                    .collect();
                p.add_le(row, 1.0 + slack);
            }
        }
        p.set_start(start);
        Some(Self {
            program: p,
            choices,
            rates,
            fixed_energy,
        })
    }

    /// Relaxation of a node with every placement of every open task allowed.
    pub fn full(instance: &SystemInstance, fixed: &[Option<Placement>]) -> Option<Self> {
        let all = vec![vec![true; instance.placements().len()]; instance.n_tasks()];
        Self::build(instance, fixed, &all)
    }

    /// Rounds the choice variables if all are within `tol` of 0 or 1.
    pub fn integral(
        &self,
        x: &[f64],
        tol: f64,
        fixed: &[Option<Placement>],
    ) -> Option<Vec<Placement>> {
        let mut out: Vec<Option<Placement>> = fixed.to_vec();
        for &(i, pl, v) in &self.choices {
            let val = x[v];
            if (val - val.round()).abs() > tol {
                return None;
            }
            if val.round() == 1.0 {
                if out[i].is_some() {
                    return None;
                }
                out[i] = Some(pl);
            }
        }
        out.into_iter().collect()
    }
}
