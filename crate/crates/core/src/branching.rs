//! Visit orders shared by the tree searches.

use serde::{Deserialize, Serialize};

use crate::model::{Placement, SystemInstance};

/// Preference among equal-energy optima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Local, then fog, then cloud.
    Lfc,
    /// Local, then cloud, then fog.
    Lcf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TaskOrder {
    /// Tasks branched in input order.
    #[default]
    Input,
    /// Most CPU-hungry tasks first.
    DemandDescending,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchOrder {
    pub task_order: Vec<usize>,
    /// Order in which a task's children are visited.
    pub processor_order: Vec<Placement>,
}

impl BranchOrder {
    pub fn new(instance: &SystemInstance, preset: Preset, tasks: TaskOrder) -> Self {
        let n_nodes = instance.n_nodes();
        let fog = (0..n_nodes).map(Placement::Fog);
        let cloud = (0..n_nodes - 1).map(Placement::Cloud);
        let mut processor_order = vec![Placement::Local];
        match preset {
            Preset::Lfc => processor_order.extend(fog.chain(cloud)),
            Preset::Lcf => processor_order.extend(cloud.chain(fog)),
        }
        let mut task_order: Vec<usize> = (0..instance.n_tasks()).collect();
        if tasks == TaskOrder::DemandDescending {
            // stable, so equal demands keep input order
            task_order.sort_by(|&a, &b| {
                instance
                    .task(b)
                    .cpu_cycles
                    .total_cmp(&instance.task(a).cpu_cycles)
            });
        }
        Self {
            task_order,
            processor_order,
        }
    }

    pub fn lfc(instance: &SystemInstance) -> Self {
        Self::new(instance, Preset::Lfc, TaskOrder::Input)
    }

    pub fn lcf(instance: &SystemInstance) -> Self {
        Self::new(instance, Preset::Lcf, TaskOrder::Input)
    }

    /// Position of a placement in the visit order.
    pub fn rank(&self, p: Placement) -> usize {
        self.processor_order
            .iter()
            .position(|q| *q == p)
            .expect("admissible placement")
    }
}

/// Nearest lower node interchangeable with each node: same capacities and
/// the same radio energy for every device. Only real nodes qualify, since
/// the virtual one cannot forward to the cloud.
pub fn twins(instance: &SystemInstance) -> Vec<Option<usize>> {
    let n_nodes = instance.n_nodes();
    let same = |j: usize, k: usize| {
        instance.node(j).caps() == instance.node(k).caps()
            && instance
                .profiles()
                .iter()
                .all(|p| p.tx_energy[j] == p.tx_energy[k] && p.rx_energy[j] == p.rx_energy[k])
    };
    (0..n_nodes)
        .map(|k| {
            if k + 1 == n_nodes {
                None
            } else {
                (0..k).rev().find(|&j| same(j, k))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate, ScenarioSpec};

    #[test]
    fn orders_for_two_fog_nodes() {
        let inst = generate(&ScenarioSpec::custom(3, 2, 0), 0).unwrap();
        let lfc = BranchOrder::lfc(&inst);
        use Placement::*;
        assert_eq!(
            lfc.processor_order,
            vec![Local, Fog(0), Fog(1), Fog(2), Cloud(0), Cloud(1)]
        );
        let lcf = BranchOrder::lcf(&inst);
        assert_eq!(
            lcf.processor_order,
            vec![Local, Cloud(0), Cloud(1), Fog(0), Fog(1), Fog(2)]
        );
        assert_eq!(lcf.rank(Fog(0)), 3);
        assert_eq!(lfc.task_order, vec![0, 1, 2]);
    }

    #[test]
    fn identical_real_nodes_are_twins() {
        let inst = generate(&ScenarioSpec::custom(2, 4, 0), 0).unwrap();
        assert_eq!(twins(&inst), vec![None, Some(0), Some(1), Some(2), None]);
    }

    #[test]
    fn demand_order_puts_heavy_tasks_first() {
        let inst = generate(&ScenarioSpec::custom(6, 1, 5), 0).unwrap();
        let o = BranchOrder::new(&inst, Preset::Lfc, TaskOrder::DemandDescending);
        let cycles: Vec<f64> = o
            .task_order
            .iter()
            .map(|&i| inst.task(i).cpu_cycles)
            .collect();
        assert!(cycles.windows(2).all(|w| w[0] >= w[1]));
    }
}
