//! Instance files. Sizes are stored in megabytes and converted on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CloudLink, FogNode, MobileProfile, SystemInstance, Task, MEGABITS_PER_MEGABYTE};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    schema_version: u32,
    tasks: Vec<TaskRecord>,
    fog_nodes: Vec<FogNode>,
    cloud: CloudLink,
    energy: EnergyRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRecord {
    id: usize,
    input_size_mb: f64,
    output_size_mb: f64,
    cpu_cycles: f64,
    deadline: f64,
}

/// Either one profile per task, or a single profile shared by all.
#[derive(Debug, Serialize, Deserialize)]
struct EnergyRecord {
    profiles: Vec<MobileProfile>,
}

impl SystemInstance {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(file.schema_version));
        }
        let tasks: Vec<Task> = file
            .tasks
            .iter()
            .map(|t| {
                Task::from_megabytes(
                    t.id,
                    t.input_size_mb,
                    t.output_size_mb,
                    t.cpu_cycles,
                    t.deadline,
                )
            })
            .collect();
        let profiles = match file.energy.profiles.len() {
            1 => vec![file.energy.profiles[0].clone(); tasks.len()],
            n if n == tasks.len() => file.energy.profiles,
            n => {
                return Err(Error::InvalidInstance(format!(
                    "energy.profiles must hold 1 or {} entries, found {n}",
                    tasks.len()
                )))
            }
        };
        Self::new(tasks, profiles, file.fog_nodes, file.cloud)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskRecord {
                id: t.id,
                input_size_mb: t.input_size / MEGABITS_PER_MEGABYTE,
                output_size_mb: t.output_size / MEGABITS_PER_MEGABYTE,
                cpu_cycles: t.cpu_cycles,
                deadline: t.deadline,
            })
            .collect();
        let shared = self.profiles.windows(2).all(|w| w[0] == w[1]) && !self.profiles.is_empty();
        let profiles = if shared {
            vec![self.profiles[0].clone()]
        } else {
            self.profiles.clone()
        };
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            tasks,
            fog_nodes: self.nodes.clone(),
            cloud: self.cloud.clone(),
            energy: EnergyRecord { profiles },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SystemInstance {
        let tasks = vec![
            Task::from_megabytes(1, 5.5, 0.55, 2.0, 10.0),
            Task::from_megabytes(2, 1.25, 0.5, 0.5, 10.0),
        ];
        let profile =
            MobileProfile::uniform(0.5, 1000.0 / 730.0, 1, (0.142, 0.142), (0.658, 0.278));
        let nodes = vec![
            FogNode {
                id: 1,
                uplink_cap: 72.0,
                downlink_cap: 72.0,
                cpu_cap: 10.0,
                is_virtual_cloud: false,
            },
            FogNode {
                id: 2,
                uplink_cap: 72.0,
                downlink_cap: 72.0,
                cpu_cap: 10.0,
                is_virtual_cloud: true,
            },
        ];
        let cloud = CloudLink {
            backhaul_rate: 5.0,
            cpu_rate_per_task: 10.0,
        };
        SystemInstance::new(tasks, vec![profile; 2], nodes, cloud).unwrap()
    }

    #[test]
    fn round_trip() {
        let inst = sample();
        let text = inst.to_json_string().unwrap();
        assert!(text.contains("\"input_size_mb\": 5.5"));
        let back = SystemInstance::from_json_str(&text).unwrap();
        assert_eq!(back.n_tasks(), 2);
        for (a, b) in inst.tasks().iter().zip(back.tasks()) {
            assert!((a.input_size - b.input_size).abs() < 1e-12);
            assert!((a.output_size - b.output_size).abs() < 1e-12);
        }
        assert_eq!(back.task(0).input_size, 44.0);
    }

    #[test]
    fn rejects_unknown_schema() {
        let text = sample()
            .to_json_string()
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            SystemInstance::from_json_str(&text),
            Err(Error::SchemaVersion(9))
        ));
    }

    #[test]
    fn rejects_missing_schema() {
        let text = sample()
            .to_json_string()
            .unwrap()
            .replace("\"schema_version\": 1,", "");
        assert!(matches!(
            SystemInstance::from_json_str(&text),
            Err(Error::Json(_))
        ));
    }
}
