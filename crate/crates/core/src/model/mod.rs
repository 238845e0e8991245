//! Domain types of the three-tier offloading problem.
//!
//! Units are fixed across the crate: data volumes in megabits, link rates in
//! Mbps, work in gigacycles, processing rates in gigacycles per second, time
//! in seconds and energy in joules. Instance files carry data sizes in
//! megabytes; the conversion happens once, at load time.
//!
//! Nodes are indexed from zero internally. With `M` fog nodes the instance
//! holds `M + 1` nodes, the last of which is the virtual node standing for
//! the direct device-to-cloud link. Forwarding a task to the cloud *through*
//! that virtual node is not an option and is never materialised.

mod formulas;
mod io;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use formulas::{
    cloud_delay, cloud_energy, fog_delay, fog_energy, local_delay, local_energy,
    offload_benefit_threshold, option_delay, option_energy, relative_size, safe_ratio,
    satisfaction_rate, task_delay, total_energy, RelativeSize, Tier,
};
pub use io::SCHEMA_VERSION;
pub use validate::{validate_solution, ValidationReport, Violation, DEFAULT_TOLERANCE};

/// Megabytes to megabits.
pub const MEGABITS_PER_MEGABYTE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Input volume, Mb.
    pub input_size: f64,
    /// Output volume, Mb.
    pub output_size: f64,
    /// Gigacycles.
    pub cpu_cycles: f64,
    /// Seconds.
    pub deadline: f64,
}

impl Task {
    /// Builds a task from sizes given in megabytes.
    pub fn from_megabytes(
        id: usize,
        input_mb: f64,
        output_mb: f64,
        cpu_cycles: f64,
        deadline: f64,
    ) -> Self {
        Self {
            id,
            input_size: input_mb * MEGABITS_PER_MEGABYTE,
            output_size: output_mb * MEGABITS_PER_MEGABYTE,
            cpu_cycles,
            deadline,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = self.input_size > 0.0
            && self.output_size >= 0.0
            && self.cpu_cycles > 0.0
            && self.deadline > 0.0
            && [
                self.input_size,
                self.output_size,
                self.cpu_cycles,
                self.deadline,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!(
                "task {} has out-of-range fields",
                self.id
            )))
        }
    }
}

/// Per-device computing and radio energy characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileProfile {
    /// Local processing rate, Gc/s.
    pub cpu_rate: f64,
    /// Joules per gigacycle.
    pub energy_per_cycle: f64,
    /// Joules per megabit sent, one entry per node (last = direct cloud link).
    pub tx_energy: Vec<f64>,
    /// Joules per megabit received, one entry per node.
    pub rx_energy: Vec<f64>,
}

impl MobileProfile {
    /// Device profile with one coefficient pair for the real fog nodes and
    /// another for the direct cloud link.
    pub fn uniform(
        cpu_rate: f64,
        energy_per_cycle: f64,
        fog_nodes: usize,
        fog_tx_rx: (f64, f64),
        cloud_tx_rx: (f64, f64),
    ) -> Self {
        let mut tx_energy = vec![fog_tx_rx.0; fog_nodes];
        let mut rx_energy = vec![fog_tx_rx.1; fog_nodes];
        tx_energy.push(cloud_tx_rx.0);
        rx_energy.push(cloud_tx_rx.1);
        Self {
            cpu_rate,
            energy_per_cycle,
            tx_energy,
            rx_energy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogNode {
    pub id: usize,
    /// Mbps.
    pub uplink_cap: f64,
    /// Mbps.
    pub downlink_cap: f64,
    /// Gc/s.
    pub cpu_cap: f64,
    pub is_virtual_cloud: bool,
}

impl FogNode {
    pub fn caps(&self) -> [f64; 3] {
        [self.uplink_cap, self.downlink_cap, self.cpu_cap]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudLink {
    /// Fog-to-cloud backhaul, Mbps.
    pub backhaul_rate: f64,
    /// Cloud processing rate granted to each task, Gc/s.
    pub cpu_rate_per_task: f64,
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance {
    tasks: Vec<Task>,
    profiles: Vec<MobileProfile>,
    nodes: Vec<FogNode>,
    cloud: CloudLink,
}

impl SystemInstance {
    pub fn new(
        tasks: Vec<Task>,
        profiles: Vec<MobileProfile>,
        nodes: Vec<FogNode>,
        cloud: CloudLink,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInstance(
                "at least the virtual cloud node is required".into(),
            ));
        }
        if profiles.len() != tasks.len() {
            return Err(Error::InvalidInstance(format!(
                "{} tasks but {} mobile profiles",
                tasks.len(),
                profiles.len()
            )));
        }
        for task in &tasks {
            task.check()?;
        }
        let n_nodes = nodes.len();
        for (i, p) in profiles.iter().enumerate() {
            if p.tx_energy.len() != n_nodes || p.rx_energy.len() != n_nodes {
                return Err(Error::InvalidInstance(format!(
                    "profile of task {i} must carry {n_nodes} tx/rx coefficients"
                )));
            }
            let positive = p.cpu_rate > 0.0
                && p.energy_per_cycle > 0.0
                && p.tx_energy
                    .iter()
                    .chain(&p.rx_energy)
                    .all(|e| *e > 0.0 && e.is_finite());
            if !positive {
                return Err(Error::InvalidInstance(format!(
                    "profile of task {i} has non-positive fields"
                )));
            }
        }
        for (j, node) in nodes.iter().enumerate() {
            if node.caps().iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(Error::InvalidInstance(format!(
                    "node {} has non-positive capacity",
                    j + 1
                )));
            }
            if node.is_virtual_cloud != (j + 1 == n_nodes) {
                return Err(Error::InvalidInstance(
                    "exactly the last node must be the virtual cloud node".into(),
                ));
            }
        }
        if !(cloud.backhaul_rate > 0.0 && cloud.cpu_rate_per_task > 0.0) {
            return Err(Error::InvalidInstance(
                "cloud rates must be positive".into(),
            ));
        }
        Ok(Self {
            tasks,
            profiles,
            nodes,
            cloud,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, i: usize) -> &Task {
        &self.tasks[i]
    }

    pub fn profile(&self, i: usize) -> &MobileProfile {
        &self.profiles[i]
    }

    pub fn profiles(&self) -> &[MobileProfile] {
        &self.profiles
    }

    pub fn nodes(&self) -> &[FogNode] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> &FogNode {
        &self.nodes[j]
    }

    pub fn cloud(&self) -> &CloudLink {
        &self.cloud
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Number of real fog nodes, `M`.
    pub fn n_fog(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `M + 1`, including the virtual node.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn virtual_node(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Placements a task may take, in local, fog, cloud order.
    pub fn placements(&self) -> Vec<Placement> {
        Placement::admissible(self.n_nodes())
    }

    /// Same instance with every deadline replaced.
    pub fn with_deadline(&self, deadline: f64) -> Result<Self> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| Task {
                deadline,
                ..t.clone()
            })
            .collect();
        Self::new(
            tasks,
            self.profiles.clone(),
            self.nodes.clone(),
            self.cloud.clone(),
        )
    }
}

/// Where a task runs. Node indices are zero based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placement {
    Local,
    Fog(usize),
    Cloud(usize),
}

impl Placement {
    /// Every admissible placement for `n_nodes = M + 1`: local, the `M + 1`
    /// fog slots and the `M` cloud-forwarding slots.
    pub fn admissible(n_nodes: usize) -> Vec<Placement> {
        let mut all = Vec::with_capacity(2 * n_nodes);
        all.push(Placement::Local);
        all.extend((0..n_nodes).map(Placement::Fog));
        all.extend((0..n_nodes - 1).map(Placement::Cloud));
        all
    }

    /// Width of a one-hot decision row, `2(M + 1) + 1`.
    pub fn slot_count(n_nodes: usize) -> usize {
        2 * n_nodes + 1
    }

    /// Position in a one-hot decision row.
    pub fn slot(self, n_nodes: usize) -> usize {
        match self {
            Placement::Local => 0,
            Placement::Fog(j) => 1 + j,
            Placement::Cloud(j) => 1 + n_nodes + j,
        }
    }

    pub fn from_slot(slot: usize, n_nodes: usize) -> Option<Placement> {
        match slot {
            0 => Some(Placement::Local),
            s if s <= n_nodes => Some(Placement::Fog(s - 1)),
            s if s < 2 * n_nodes + 1 => Some(Placement::Cloud(s - 1 - n_nodes)),
            _ => None,
        }
    }

    pub fn node(self) -> Option<usize> {
        match self {
            Placement::Local => None,
            Placement::Fog(j) | Placement::Cloud(j) => Some(j),
        }
    }

    pub fn is_offloaded(self) -> bool {
        !matches!(self, Placement::Local)
    }

    /// Processed by the cloud server, either directly or forwarded by a fog node.
    pub fn is_cloud_processed(self, n_nodes: usize) -> bool {
        match self {
            Placement::Local => false,
            Placement::Fog(j) => j + 1 == n_nodes,
            Placement::Cloud(_) => true,
        }
    }

    pub fn parse(s: &str) -> Option<Placement> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("l") {
            return Some(Placement::Local);
        }
        let (head, tail) = s.split_at(1);
        let idx: usize = tail.parse().ok()?;
        if idx == 0 {
            return None;
        }
        match head {
            "F" | "f" => Some(Placement::Fog(idx - 1)),
            "C" | "c" => Some(Placement::Cloud(idx - 1)),
            _ => None,
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Local => write!(f, "L"),
            Placement::Fog(j) => write!(f, "F{}", j + 1),
            Placement::Cloud(j) => write!(f, "C{}", j + 1),
        }
    }
}

impl Serialize for Placement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Placement::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad placement `{s}`")))
    }
}

/// Uplink, downlink and CPU rates granted to one task by one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub uplink: f64,
    pub downlink: f64,
    pub cpu: f64,
}

impl Rates {
    pub fn new(uplink: f64, downlink: f64, cpu: f64) -> Self {
        Self {
            uplink,
            downlink,
            cpu,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.uplink, self.downlink, self.cpu]
    }

    pub fn is_zero(&self) -> bool {
        self.uplink == 0.0 && self.downlink == 0.0 && self.cpu == 0.0
    }
}

/// One-hot offloading rows, one per task, each of width `2(M + 1) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    rows: Vec<Vec<bool>>,
}

impl OffloadDecision {
    pub fn from_placements(placements: &[Placement], n_nodes: usize) -> Self {
        let width = Placement::slot_count(n_nodes);
        let rows = placements
            .iter()
            .map(|p| {
                let mut row = vec![false; width];
                row[p.slot(n_nodes)] = true;
                row
            })
            .collect();
        Self { rows }
    }

    /// Raw rows; no one-hot check is made here, see [`validate_solution`].
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<bool>] {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The single selected placement of task `i`, if the row is one-hot and
    /// does not select the excluded virtual forwarding slot.
    pub fn placement(&self, i: usize, n_nodes: usize) -> Option<Placement> {
        let row = &self.rows[i];
        let mut chosen = row.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k);
        let slot = chosen.next()?;
        if chosen.next().is_some() {
            return None;
        }
        match Placement::from_slot(slot, n_nodes)? {
            Placement::Cloud(j) if j + 1 == n_nodes => None,
            p => Some(p),
        }
    }

    pub fn placements(&self, n_nodes: usize) -> Option<Vec<Placement>> {
        (0..self.rows.len())
            .map(|i| self.placement(i, n_nodes))
            .collect()
    }
}

/// Per (task, node) rates; entries for unselected pairs are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAllocation {
    rates: Vec<Vec<Rates>>,
}

impl ResourceAllocation {
    pub fn zeros(n_tasks: usize, n_nodes: usize) -> Self {
        Self {
            rates: vec![vec![Rates::default(); n_nodes]; n_tasks],
        }
    }

    pub fn get(&self, task: usize, node: usize) -> Rates {
        self.rates[task][node]
    }

    pub fn set(&mut self, task: usize, node: usize, rates: Rates) {
        self.rates[task][node] = rates;
    }

    pub fn row(&self, task: usize) -> &[Rates] {
        &self.rates[task]
    }

    /// Sum of (uplink, downlink, cpu) granted by node `j`.
    pub fn node_usage(&self, node: usize) -> [f64; 3] {
        self.rates.iter().fold([0.0; 3], |mut acc, row| {
            let r = row[node];
            acc[0] += r.uplink;
            acc[1] += r.downlink;
            acc[2] += r.cpu;
            acc
        })
    }
}

/// A complete decision with its allocation and derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub decision: OffloadDecision,
    pub allocation: ResourceAllocation,
    pub total_energy: f64,
    pub per_task_delay: Vec<f64>,
}

impl Solution {
    /// Assembles a solution from placements and the rates granted by the
    /// selected node of each task; energy and delays are recomputed.
    pub fn assemble(instance: &SystemInstance, placements: &[Placement], rates: &[Rates]) -> Self {
        let n_nodes = instance.n_nodes();
        let decision = OffloadDecision::from_placements(placements, n_nodes);
        let mut allocation = ResourceAllocation::zeros(instance.n_tasks(), n_nodes);
        for (i, p) in placements.iter().enumerate() {
            match *p {
                Placement::Local => {}
                Placement::Fog(j) => allocation.set(i, j, rates[i]),
                Placement::Cloud(j) => allocation.set(
                    i,
                    j,
                    Rates {
                        cpu: 0.0,
                        ..rates[i]
                    },
                ),
            }
        }
        let total_energy = total_energy(&decision, instance);
        let per_task_delay = (0..instance.n_tasks())
            .map(|i| task_delay(&decision.rows()[i], allocation.row(i), instance, i))
            .collect();
        Self {
            decision,
            allocation,
            total_energy,
            per_task_delay,
        }
    }

    pub fn placements(&self, n_nodes: usize) -> Option<Vec<Placement>> {
        self.decision.placements(n_nodes)
    }

    pub fn mean_delay(&self) -> f64 {
        if self.per_task_delay.is_empty() {
            0.0
        } else {
            self.per_task_delay.iter().sum::<f64>() / self.per_task_delay.len() as f64
        }
    }
}

/// Counts of tasks by tier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlacementCounts {
    pub local: usize,
    pub fog: usize,
    pub cloud: usize,
}

impl PlacementCounts {
    pub fn of(placements: &[Placement], n_nodes: usize) -> Self {
        placements.iter().fold(Self::default(), |mut c, p| {
            if !p.is_offloaded() {
                c.local += 1;
            } else if p.is_cloud_processed(n_nodes) {
                c.cloud += 1;
            } else {
                c.fog += 1;
            }
            c
        })
    }
}
