//! Exhaustive search over placement vectors, for small instances.

use std::collections::HashMap;

use crate::branching::BranchOrder;
use crate::error::{Error, Result};
use crate::ffbd::subproblem::{check_node, Mode, NodeAllocation, Subproblem};
use crate::ffbd::tol_of;
use crate::model::{
    local_delay, option_energy, relative_size, Placement, Rates, Solution, SystemInstance, Tier,
};

pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub solution: Option<Solution>,
    /// Assignments whose feasibility was actually decided.
    pub evaluated: usize,
}

type NodeKey = (usize, u64, u64);

/// Minimum-energy feasible assignment. Candidates are visited in order of
/// energy; among optima the first in local-fog-cloud enumeration order wins.
pub fn enumerate_optimum(instance: &SystemInstance) -> Result<OracleResult> {
    let n = instance.n_tasks();
    let order = BranchOrder::lfc(instance);
    let p = order.processor_order.len() as u128;
    let total = (0..n)
        .try_fold(1u128, |acc, _| acc.checked_mul(p))
        .unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT || n > 63 {
        return Err(Error::TooLarge(total));
    }

    // options that cannot work on their own never enter the enumeration
    let cl = instance.cloud();
    let options: Vec<Vec<(Placement, f64)>> = (0..n)
        .map(|i| {
            let t = instance.task(i);
            order
                .processor_order
                .iter()
                .filter(|pl| match pl {
                    Placement::Local => local_delay(t, instance.profile(i)) <= t.deadline,
                    Placement::Fog(_) => true,
                    Placement::Cloud(_) => relative_size(t, Tier::Cloud, cl).is_ok(),
                })
                .map(|pl| (*pl, option_energy(instance, i, *pl)))
                .collect()
        })
        .collect();
    if options.iter().any(Vec::is_empty) {
        return Ok(OracleResult {
            solution: None,
            evaluated: 0,
        });
    }

    let mut candidates: Vec<(f64, Vec<u8>)> = Vec::new();
    let mut idx = vec![0u8; n];
    'odometer: loop {
        let e: f64 = (0..n).map(|i| options[i][idx[i] as usize].1).sum();
        candidates.push((e, idx.clone()));
        for k in (0..n).rev() {
            idx[k] += 1;
            if (idx[k] as usize) < options[k].len() {
                continue 'odometer;
            }
            idx[k] = 0;
        }
        break;
    }
    // stable: enumeration order survives among equal energies
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cache: HashMap<NodeKey, Option<NodeAllocation>> = HashMap::new();
    let mut evaluated = 0;
    let mut best: Option<(f64, &Vec<u8>, Vec<Rates>)> = None;
    for (e, idx) in &candidates {
        if let Some((be, bidx, _)) = &best {
            if *e > be + tol_of(*be) {
                break;
            }
            if idx >= *bidx {
                continue;
            }
        }
        let placements: Vec<Placement> = (0..n).map(|i| options[i][idx[i] as usize].0).collect();
        evaluated += 1;
        if let Some(rates) = feasible(instance, &placements, &mut cache)? {
            best = Some((*e, idx, rates));
        }
    }
    let solution = best.map(|(_, idx, rates)| {
        let placements: Vec<Placement> = (0..n).map(|i| options[i][idx[i] as usize].0).collect();
        Solution::assemble(instance, &placements, &rates)
    });
    Ok(OracleResult {
        solution,
        evaluated,
    })
}

fn feasible(
    instance: &SystemInstance,
    placements: &[Placement],
    cache: &mut HashMap<NodeKey, Option<NodeAllocation>>,
) -> Result<Option<Vec<Rates>>> {
    let mut rates = vec![Rates::default(); placements.len()];
    for j in 0..instance.n_nodes() {
        let (mut fog, mut cloud) = (Vec::new(), Vec::new());
        let (mut fm, mut cm) = (0u64, 0u64);
        for (i, p) in placements.iter().enumerate() {
            match *p {
                Placement::Fog(k) if k == j => {
                    fog.push(i);
                    fm |= 1 << i;
                }
                Placement::Cloud(k) if k == j => {
                    cloud.push(i);
                    cm |= 1 << i;
                }
                _ => {}
            }
        }
        if fm == 0 && cm == 0 {
            continue;
        }
        let key = (j, fm, cm);
        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
            let sub = Subproblem::new(instance, j, &fog, &cloud)?;
            e.insert(check_node(&sub, Mode::F, None)?.allocation);
        }
        match &cache[&key] {
            Some(a) => {
                for (i, r) in a {
                    rates[*i] = *r;
                }
            }
            None => return Ok(None),
        }
    }
    Ok(Some(rates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{
        generate, table_one_cloud, table_one_nodes, table_one_profile, ScenarioSpec,
    };
    use crate::model::{fog_energy, Task};

    fn instance(tasks: Vec<Task>, m: usize) -> SystemInstance {
        let n = tasks.len();
        SystemInstance::new(
            tasks,
            vec![table_one_profile(m); n],
            table_one_nodes(m),
            table_one_cloud(),
        )
        .unwrap()
    }

    #[test]
    fn refuses_reference_size() {
        let inst = generate(&ScenarioSpec::scenario1(0), 0).unwrap();
        assert!(matches!(enumerate_optimum(&inst), Err(Error::TooLarge(n)) if n == 10_000_000_000));
    }

    #[test]
    fn slow_local_task_goes_to_first_fog_node() {
        // 20 Gc takes 40 s locally; both fog nodes cost the same
        let t = Task::from_megabytes(0, 2.0, 0.2, 20.0, 10.0);
        let inst = instance(vec![t.clone()], 2);
        let r = enumerate_optimum(&inst).unwrap();
        let s = r.solution.unwrap();
        assert_eq!(s.placements(3).unwrap(), vec![Placement::Fog(0)]);
        let want = fog_energy(&t, inst.profile(0), 0);
        assert!((s.total_energy - want).abs() < 1e-12);
    }

    #[test]
    fn impossible_task_makes_the_instance_infeasible() {
        // 200 Gc needs 20 s even on a whole fog CPU
        let inst = instance(vec![Task::from_megabytes(0, 2.0, 0.2, 200.0, 10.0)], 1);
        let r = enumerate_optimum(&inst).unwrap();
        assert!(r.solution.is_none());
    }

    #[test]
    fn shared_node_is_split_when_one_node_is_not_enough() {
        // each task needs 6 of the 10 Gc/s a node has within 1 s
        let tasks = (0..2)
            .map(|i| Task::from_megabytes(i, 0.5, 0.05, 6.0, 1.0))
            .collect();
        let inst = instance(tasks, 1);
        let s = enumerate_optimum(&inst).unwrap().solution.unwrap();
        let p = s.placements(2).unwrap();
        assert_eq!(p, vec![Placement::Fog(0), Placement::Fog(1)]);
    }
}
