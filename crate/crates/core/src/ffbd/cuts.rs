use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::subproblem::{Dimension, Subproblem};
use crate::model::{local_delay, option_energy, relative_size, Placement, SystemInstance, Tier};

/// Slack allowed when testing a cut combinatorially.
pub const CUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CutKind {
    ResourceUp,
    ResourceDown,
    ResourceCpu,
    Subproblem,
    Prefixed,
}

impl CutKind {
    pub fn resource(dim: Dimension) -> Self {
        match dim {
            Dimension::Up => CutKind::ResourceUp,
            Dimension::Down => CutKind::ResourceDown,
            Dimension::Cpu => CutKind::ResourceCpu,
        }
    }
}

impl fmt::Display for CutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CutKind::ResourceUp => "resource_up",
            CutKind::ResourceDown => "resource_down",
            CutKind::ResourceCpu => "resource_cpu",
            CutKind::Subproblem => "subproblem",
            CutKind::Prefixed => "prefixed",
        };
        f.write_str(s)
    }
}

/// `Σ coef · x[task, placement] ≤ rhs` over the binary decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutKind,
    pub terms: Vec<(usize, Placement, f64)>,
    pub rhs: f64,
}

impl Cut {
    pub fn lhs(&self, placements: &[Placement]) -> f64 {
        self.terms
            .iter()
            .filter(|(i, p, _)| placements[*i] == *p)
            .map(|(_, _, c)| c)
            .sum()
    }

    pub fn is_satisfied(&self, placements: &[Placement]) -> bool {
        self.lhs(placements) <= self.rhs + CUT_TOL * self.rhs.abs().max(1.0)
    }

    /// Excludes exactly the task set of an infeasible subproblem.
    pub fn subproblem(sub: &Subproblem) -> Self {
        let terms: Vec<_> = sub
            .fog_tasks
            .iter()
            .map(|(i, _)| (*i, Placement::Fog(sub.node), 1.0))
            .chain(
                sub.cloud_tasks
                    .iter()
                    .map(|(i, _)| (*i, Placement::Cloud(sub.node), 1.0)),
            )
            .collect();
        let rhs = terms.len() as f64 - 1.0;
        Self {
            kind: CutKind::Subproblem,
            terms,
            rhs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutSet {
    cuts: Vec<Cut>,
}

impl CutSet {
    pub fn push(&mut self, cut: Cut) {
        self.cuts.push(cut);
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn count_by_kind(&self) -> BTreeMap<CutKind, usize> {
        let mut m = BTreeMap::new();
        for c in &self.cuts {
            *m.entry(c.kind).or_insert(0) += 1;
        }
        m
    }

    pub fn all_satisfied(&self, placements: &[Placement]) -> bool {
        self.cuts.iter().all(|c| c.is_satisfied(placements))
    }
}

/// Cuts known before any subproblem is solved: three aggregate capacity
/// cuts per node, then per-task facts that fix or forbid placements.
pub fn init_cuts(instance: &SystemInstance) -> CutSet {
    let n_nodes = instance.n_nodes();
    let cl = instance.cloud();
    let fog: Vec<_> = instance
        .tasks()
        .iter()
        .map(|t| relative_size(t, Tier::Fog, cl).ok())
        .collect();
    let cloud: Vec<_> = instance
        .tasks()
        .iter()
        .map(|t| relative_size(t, Tier::Cloud, cl).ok())
        .collect();
    let mut set = CutSet::default();

    for j in 0..n_nodes {
        let caps = instance.node(j).caps();
        for dim in Dimension::ALL {
            let k = dim.index();
            let mut terms = Vec::new();
            for i in 0..instance.n_tasks() {
                if let Some(r) = fog[i] {
                    terms.push((i, Placement::Fog(j), r.as_array()[k] / caps[k]));
                }
                if j + 1 < n_nodes && dim != Dimension::Cpu {
                    if let Some(r) = cloud[i] {
                        terms.push((i, Placement::Cloud(j), r.as_array()[k] / caps[k]));
                    }
                }
            }
            set.push(Cut {
                kind: CutKind::resource(dim),
                terms,
                rhs: 1.0,
            });
        }
    }

    for i in 0..instance.n_tasks() {
        let (task, profile) = (instance.task(i), instance.profile(i));
        let local_ok = local_delay(task, profile) <= task.deadline;
        let local_e = option_energy(instance, i, Placement::Local);
        let min_fog = (0..n_nodes)
            .map(|j| option_energy(instance, i, Placement::Fog(j)))
            .fold(f64::INFINITY, f64::min);
        if local_ok && local_e < min_fog {
            let terms = instance
                .placements()
                .into_iter()
                .filter(|p| p.is_offloaded())
                .map(|p| (i, p, 1.0))
                .collect();
            set.push(Cut {
                kind: CutKind::Prefixed,
                terms,
                rhs: 0.0,
            });
        }
        if !local_ok {
            set.push(Cut {
                kind: CutKind::Prefixed,
                terms: vec![(i, Placement::Local, 1.0)],
                rhs: 0.0,
            });
        }
        if cloud[i].is_none() && n_nodes > 1 {
            let terms = (0..n_nodes - 1)
                .map(|j| (i, Placement::Cloud(j), 1.0))
                .collect();
            set.push(Cut {
                kind: CutKind::Prefixed,
                terms,
                rhs: 0.0,
            });
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{table_one_cloud, table_one_nodes, table_one_profile};
    use crate::model::Task;

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
    fn three_resource_cuts_per_node() {
        let inst = instance(vec![Task::from_megabytes(0, 5.0, 0.5, 10.0, 10.0)], 4);
        let counts = init_cuts(&inst).count_by_kind();
        assert_eq!(counts[&CutKind::ResourceUp], 5);
        assert_eq!(counts[&CutKind::ResourceDown], 5);
        assert_eq!(counts[&CutKind::ResourceCpu], 5);
    }

    #[test]
    fn cpu_cut_ignores_cloud_and_virtual_node_has_no_cloud_terms() {
        let inst = instance(vec![Task::from_megabytes(0, 5.0, 0.5, 10.0, 10.0)], 2);
        let cuts = init_cuts(&inst);
        for c in cuts.cuts() {
            if c.kind == CutKind::ResourceCpu {
                assert!(c
                    .terms
                    .iter()
                    .all(|(_, p, _)| matches!(p, Placement::Fog(_))));
            }
            assert!(!c.terms.iter().any(|(_, p, _)| *p == Placement::Cloud(2)));
        }
    }

    #[test]
    fn cheap_local_task_is_pinned_local() {
        // 0.5 Gc locally: 1 s and 0.68 J, far below any transfer energy
        let inst = instance(vec![Task::from_megabytes(0, 5.0, 0.5, 0.5, 10.0)], 4);
        let cuts = init_cuts(&inst);
        let pre: Vec<_> = cuts
            .cuts()
            .iter()
            .filter(|c| c.kind == CutKind::Prefixed)
            .collect();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].terms.len(), 9);
        assert_eq!(pre[0].rhs, 0.0);
        assert!(cuts.all_satisfied(&[Placement::Local]));
        assert!(!cuts.all_satisfied(&[Placement::Fog(1)]));
    }

    #[test]
    fn heavy_task_cannot_stay_local_nor_reach_the_cloud() {
        // 100 s locally; cloud path alone takes 44/5 + 50/10 = 13.8 s
        let inst = instance(vec![Task::from_megabytes(0, 5.0, 0.5, 50.0, 10.0)], 2);
        let cuts = init_cuts(&inst);
        assert_eq!(cuts.count_by_kind()[&CutKind::Prefixed], 2);
        assert!(!cuts.all_satisfied(&[Placement::Local]));
        assert!(!cuts.all_satisfied(&[Placement::Cloud(0)]));
        assert!(cuts.all_satisfied(&[Placement::Fog(0)]));
    }

    #[test]
    fn subproblem_cut_excludes_only_the_full_set() {
        let inst = instance(
            vec![
                Task::from_megabytes(0, 5.0, 0.5, 5.0, 10.0),
                Task::from_megabytes(1, 5.0, 0.5, 5.0, 10.0),
                Task::from_megabytes(2, 5.0, 0.5, 5.0, 10.0),
            ],
            1,
        );
        let sub = Subproblem::new(&inst, 0, &[0, 1], &[2]).unwrap();
        let cut = Cut::subproblem(&sub);
        assert_eq!(cut.rhs, 2.0);
        let all = [Placement::Fog(0), Placement::Fog(0), Placement::Cloud(0)];
        assert!(!cut.is_satisfied(&all));
        let moved = [Placement::Fog(0), Placement::Local, Placement::Cloud(0)];
        assert!(cut.is_satisfied(&moved));
    }

    #[test]
    fn kind_names_are_snake_case() {
        assert_eq!(CutKind::ResourceCpu.to_string(), "resource_cpu");
        assert_eq!(CutKind::Subproblem.to_string(), "subproblem");
    }
}
