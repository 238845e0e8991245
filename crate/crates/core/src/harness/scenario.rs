use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CloudLink, FogNode, MobileProfile, SystemInstance, Task};

/// Reference device and network parameters.
pub mod table_one {
    pub const N_TASKS: usize = 10;
    pub const N_FOG: usize = 4;
    /// Gc/s.
    pub const LOCAL_CPU: f64 = 0.5;
    /// J/Gc.
    pub const ENERGY_PER_CYCLE: f64 = 1000.0 / 730.0;
    /// J/Mb to and from a fog node.
    pub const FOG_TX: f64 = 0.142;
    pub const FOG_RX: f64 = 0.142;
    /// J/Mb over the direct cloud link.
    pub const CLOUD_TX: f64 = 0.658;
    pub const CLOUD_RX: f64 = 0.278;
    /// Mbps, both directions, every node.
    pub const LINK_RATE: f64 = 72.0;
    /// Gc/s per node.
    pub const NODE_CPU: f64 = 10.0;
    /// Gc/s granted by the cloud server.
    pub const CLOUD_CPU: f64 = 10.0;
    /// Mbps between fog nodes and the cloud.
    pub const BACKHAUL: f64 = 5.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Complexity grows by a fixed step per experiment, deadlines fixed.
    Scenario1,
    /// Deadlines grow by a fixed step per experiment, one task draw.
    Scenario2,
    Custom,
}

/// Continuous uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_tasks: usize,
    pub n_fog: usize,
    /// MB.
    pub input_mb: Range,
    /// MB.
    pub output_mb: Range,
    /// Gc/MB, drawn once per task.
    pub alpha: Range,
    /// Added to every task's complexity per experiment.
    pub alpha_step: f64,
    /// Seconds, at experiment zero.
    pub deadline: f64,
    pub deadline_step: f64,
    pub experiments: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn scenario1(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Scenario1,
            n_tasks: table_one::N_TASKS,
            n_fog: table_one::N_FOG,
            input_mb: Range::new(1.0, 10.0),
            output_mb: Range::new(0.1, 1.0),
            alpha: Range::new(0.1, 1.0),
            alpha_step: 0.1,
            deadline: 10.0,
            deadline_step: 0.0,
            experiments: 10,
            seed,
        }
    }

    pub fn scenario2(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Scenario2,
            alpha: Range::new(0.1, 6.0),
            alpha_step: 0.0,
            deadline: 2.0,
            deadline_step: 1.0,
            experiments: 9,
            ..Self::scenario1(seed)
        }
    }

    pub fn custom(n_tasks: usize, n_fog: usize, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Custom,
            n_tasks,
            n_fog,
            experiments: 1,
            ..Self::scenario1(seed)
        }
    }

    /// Complexity range of an experiment.
    pub fn alpha_range(&self, index: usize) -> Range {
        let shift = self.alpha_step * index as f64;
        Range::new(self.alpha.lo + shift, self.alpha.hi + shift)
    }

    pub fn deadline_at(&self, index: usize) -> f64 {
        self.deadline + self.deadline_step * index as f64
    }
}

/// Reference network with `n_fog` real nodes plus the virtual one.
pub fn table_one_nodes(n_fog: usize) -> Vec<FogNode> {
    (0..=n_fog)
        .map(|j| FogNode {
            id: j,
            uplink_cap: table_one::LINK_RATE,
            downlink_cap: table_one::LINK_RATE,
            cpu_cap: table_one::NODE_CPU,
            is_virtual_cloud: j == n_fog,
        })
        .collect()
}

pub fn table_one_profile(n_fog: usize) -> MobileProfile {
    use table_one::*;
    MobileProfile::uniform(
        LOCAL_CPU,
        ENERGY_PER_CYCLE,
        n_fog,
        (FOG_TX, FOG_RX),
        (CLOUD_TX, CLOUD_RX),
    )
}

pub fn table_one_cloud() -> CloudLink {
    CloudLink {
        backhaul_rate: table_one::BACKHAUL,
        cpu_rate_per_task: table_one::CLOUD_CPU,
    }
}

/// Instance of one experiment. Sizes and base complexities are drawn once
/// from the seed, so experiments of a sweep differ only in the swept
/// quantity.
pub fn generate(spec: &ScenarioSpec, index: usize) -> Result<SystemInstance> {
    if index >= spec.experiments.max(1) {
        return Err(Error::InvalidInstance(format!(
            "experiment {index} out of range, the scenario has {}",
            spec.experiments
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shift = spec.alpha_step * index as f64;
    let deadline = spec.deadline_at(index);
    let tasks = (0..spec.n_tasks)
        .map(|id| {
            let input = spec.input_mb.sample(&mut rng);
            let output = spec.output_mb.sample(&mut rng);
            let alpha = spec.alpha.sample(&mut rng) + shift;
            Task::from_megabytes(id, input, output, alpha * input, deadline)
        })
        .collect();
    let profiles = vec![table_one_profile(spec.n_fog); spec.n_tasks];
    SystemInstance::new(
        tasks,
        profiles,
        table_one_nodes(spec.n_fog),
        table_one_cloud(),
    )
}

/// Complexity of task `i` in Gc/MB.
pub fn alpha_of(instance: &SystemInstance, i: usize) -> f64 {
    let t = instance.task(i);
    t.cpu_cycles / (t.input_size / crate::model::MEGABITS_PER_MEGABYTE)
}
