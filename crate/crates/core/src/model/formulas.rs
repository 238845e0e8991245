//! Closed-form delay and energy expressions.

use super::{
    CloudLink, MobileProfile, OffloadDecision, Placement, Rates, SystemInstance, Task,
    MEGABITS_PER_MEGABYTE,
};
use crate::error::{Error, Result};

/// `num / den` with the conventions used throughout: a zero demand costs
/// nothing whatever the rate, a positive demand over a zero rate is infinite.
#[inline]
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn local_delay(task: &Task, profile: &MobileProfile) -> f64 {
    task.cpu_cycles / profile.cpu_rate
}

pub fn local_energy(task: &Task, profile: &MobileProfile) -> f64 {
    profile.energy_per_cycle * task.cpu_cycles
}

/// Upload, download and processing time at a fog node.
pub fn fog_delay(task: &Task, rates: &Rates) -> Result<f64> {
    let guard = |demand: f64, rate: f64, what| {
        if demand > 0.0 && rate <= 0.0 {
            Err(Error::ZeroRate(what))
        } else {
            Ok(safe_ratio(demand, rate))
        }
    };
    Ok(guard(task.input_size, rates.uplink, "uplink")?
        + guard(task.output_size, rates.downlink, "downlink")?
        + guard(task.cpu_cycles, rates.cpu, "cpu")?)
}

pub fn fog_energy(task: &Task, profile: &MobileProfile, node: usize) -> f64 {
    profile.tx_energy[node] * task.input_size + profile.rx_energy[node] * task.output_size
}

/// Fixed part of the cloud path: backhaul both ways plus cloud processing.
fn cloud_fixed_delay(task: &Task, cloud: &CloudLink) -> f64 {
    (task.input_size + task.output_size) / cloud.backhaul_rate
        + task.cpu_cycles / cloud.cpu_rate_per_task
}

/// Delay of forwarding a task to the cloud through a node. The virtual node
/// has no backhaul of its own, so the path is infinitely slow there.
pub fn cloud_delay(task: &Task, rates: &Rates, cloud: &CloudLink, via_virtual: bool) -> f64 {
    if via_virtual {
        return f64::INFINITY;
    }
    safe_ratio(task.input_size, rates.uplink)
        + safe_ratio(task.output_size, rates.downlink)
        + cloud_fixed_delay(task, cloud)
}

/// Device-side energy of cloud forwarding equals that of fog processing at
/// the same node.
pub fn cloud_energy(task: &Task, profile: &MobileProfile, node: usize) -> f64 {
    fog_energy(task, profile, node)
}

pub fn option_energy(instance: &SystemInstance, i: usize, placement: Placement) -> f64 {
    let (task, profile) = (instance.task(i), instance.profile(i));
    match placement {
        Placement::Local => local_energy(task, profile),
        Placement::Fog(j) => fog_energy(task, profile, j),
        Placement::Cloud(j) => cloud_energy(task, profile, j),
    }
}

pub fn option_delay(
    instance: &SystemInstance,
    i: usize,
    placement: Placement,
    rates: &Rates,
) -> f64 {
    let task = instance.task(i);
    match placement {
        Placement::Local => local_delay(task, instance.profile(i)),
        Placement::Fog(j) => {
            let _ = j;
            safe_ratio(task.input_size, rates.uplink)
                + safe_ratio(task.output_size, rates.downlink)
                + safe_ratio(task.cpu_cycles, rates.cpu)
        }
        Placement::Cloud(j) => {
            cloud_delay(task, rates, instance.cloud(), j == instance.virtual_node())
        }
    }
}

/// Delay of task `i` as the selected entries of its delay vector: every slot
/// set in `row` contributes the delay of that option.
pub fn task_delay(
    row: &[bool],
    allocation_row: &[Rates],
    instance: &SystemInstance,
    i: usize,
) -> f64 {
    let n_nodes = instance.n_nodes();
    row.iter()
        .enumerate()
        .filter(|(_, set)| **set)
        .map(|(slot, _)| match Placement::from_slot(slot, n_nodes) {
            Some(p) => {
                let rates = p.node().map(|j| allocation_row[j]).unwrap_or_default();
                option_delay(instance, i, p, &rates)
            }
            None => f64::INFINITY,
        })
        .sum()
}

/// Total device energy of a decision. Allocation plays no part.
pub fn total_energy(decision: &OffloadDecision, instance: &SystemInstance) -> f64 {
    let n_nodes = instance.n_nodes();
    decision
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, set)| **set)
                .map(|(slot, _)| match Placement::from_slot(slot, n_nodes) {
                    Some(Placement::Cloud(j)) if j + 1 == n_nodes => {
                        fog_energy(instance.task(i), instance.profile(i), j)
                    }
                    Some(p) => option_energy(instance, i, p),
                    None => 0.0,
                })
                .sum::<f64>()
        })
        .sum()
}

/// Task complexity, in gigacycles per megabyte of input, above which
/// offloading to `node` costs the device less energy than local execution.
pub fn offload_benefit_threshold(task: &Task, profile: &MobileProfile, node: usize) -> f64 {
    let input_mb = task.input_size / MEGABITS_PER_MEGABYTE;
    fog_energy(task, profile, node) / (profile.energy_per_cycle * input_mb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Fog,
    Cloud,
}

/// Demands normalised by the time left for the node-side part of the path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativeSize {
    pub input: f64,
    pub output: f64,
    pub cpu: f64,
}

impl RelativeSize {
    pub fn as_array(&self) -> [f64; 3] {
        [self.input, self.output, self.cpu]
    }
}

pub fn relative_size(task: &Task, tier: Tier, cloud: &CloudLink) -> Result<RelativeSize> {
    match tier {
        Tier::Fog => {
            let t = task.deadline;
            Ok(RelativeSize {
                input: task.input_size / t,
                output: task.output_size / t,
                cpu: task.cpu_cycles / t,
            })
        }
        Tier::Cloud => {
            let residual = task.deadline - cloud_fixed_delay(task, cloud);
            if residual <= 0.0 {
                return Err(Error::CloudInfeasible { task: task.id });
            }
            Ok(RelativeSize {
                input: task.input_size / residual,
                output: task.output_size / residual,
                cpu: 0.0,
            })
        }
    }
}

/// Sum of relative demand over granted rate; the delay constraint holds iff
/// this is at most one.
pub fn satisfaction_rate(rel: &RelativeSize, rates: &Rates) -> f64 {
    safe_ratio(rel.input, rates.uplink)
        + safe_ratio(rel.output, rates.downlink)
        + safe_ratio(rel.cpu, rates.cpu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CloudLink, MobileProfile, Task};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const V: f64 = 1000.0 / 730.0;

    fn task(input: f64, output: f64, cpu: f64, deadline: f64) -> Task {
        Task {
            id: 1,
            input_size: input,
            output_size: output,
            cpu_cycles: cpu,
            deadline,
        }
    }

    fn profile(v: f64, f: f64, e: (f64, f64)) -> MobileProfile {
        MobileProfile::uniform(f, v, 1, e, (0.658, 0.278))
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn local_delay_examples() {
        close(
            local_delay(&task(1.0, 0.0, 5.0, 1.0), &profile(V, 0.5, (0.1, 0.1))),
            10.0,
        );
        close(
            local_delay(&task(1.0, 0.0, 0.5, 1.0), &profile(V, 0.5, (0.1, 0.1))),
            1.0,
        );
        close(
            local_delay(&task(1.0, 0.0, 5.0, 1.0), &profile(V, 5.0, (0.1, 0.1))),
            1.0,
        );
    }

    #[test]
    fn local_energy_examples() {
        close(
            local_energy(&task(1.0, 0.0, 7.3, 1.0), &profile(V, 0.5, (0.1, 0.1))),
            10.0,
        );
        close(
            local_energy(&task(1.0, 0.0, 0.73, 1.0), &profile(V, 0.5, (0.1, 0.1))),
            1.0,
        );
        let mut zero = task(1.0, 0.0, 1.0, 1.0);
        zero.cpu_cycles = 0.0;
        assert_eq!(local_energy(&zero, &profile(3.0, 0.5, (0.1, 0.1))), 0.0);
    }

    #[test]
    fn fog_delay_examples() {
        let t = task(44.0, 4.4, 5.0, 10.0);
        close(fog_delay(&t, &Rates::new(44.0, 4.4, 5.0)).unwrap(), 3.0);
        close(fog_delay(&t, &Rates::new(22.0, 4.4, 5.0)).unwrap(), 4.0);
        assert!(matches!(
            fog_delay(&t, &Rates::new(44.0, 4.4, 0.0)),
            Err(Error::ZeroRate("cpu"))
        ));
    }

    #[test]
    fn fog_and_cloud_energy_examples() {
        let t = task(44.0, 4.4, 5.0, 10.0);
        let p = MobileProfile::uniform(0.5, V, 1, (0.142, 0.142), (0.658, 0.278));
        close(fog_energy(&t, &p, 0), 6.8728);
        close(fog_energy(&t, &p, 1), 30.1752);
        let empty = Task {
            output_size: 0.0,
            input_size: 0.0,
            ..t.clone()
        };
        assert_eq!(fog_energy(&empty, &p, 0), 0.0);
        for j in 0..2 {
            assert_eq!(cloud_energy(&t, &p, j), fog_energy(&t, &p, j));
        }
    }

    #[test]
    fn cloud_delay_examples() {
        let t = task(44.0, 4.4, 5.0, 10.0);
        let cloud = CloudLink {
            backhaul_rate: 5.0,
            cpu_rate_per_task: 10.0,
        };
        close(
            cloud_delay(&t, &Rates::new(44.0, 4.4, 0.0), &cloud, false),
            12.18,
        );
        let fast = CloudLink {
            backhaul_rate: f64::INFINITY,
            cpu_rate_per_task: f64::INFINITY,
        };
        close(
            cloud_delay(&t, &Rates::new(44.0, 4.4, 0.0), &fast, false),
            2.0,
        );
        assert!(cloud_delay(&t, &Rates::new(44.0, 4.4, 0.0), &cloud, true).is_infinite());
    }

    #[test]
    fn threshold_examples() {
        let p = MobileProfile::uniform(0.5, V, 1, (0.142, 0.142), (0.658, 0.278));
        let t = Task::from_megabytes(1, 5.5, 0.55, 1.0, 10.0);
        let a = offload_benefit_threshold(&t, &p, 0);
        assert!((a - 0.911).abs() < 0.002, "{a}");

        let unit = MobileProfile::uniform(0.5, 0.3, 1, (0.3, 0.3), (0.3, 0.3));
        let t = Task::from_megabytes(1, 2.0, 0.0, 1.0, 10.0);
        close(offload_benefit_threshold(&t, &unit, 0), 8.0);

        // zero energy coefficients cannot be expressed through a validated
        // profile, but the formula itself is linear in them
        let free = MobileProfile {
            tx_energy: vec![0.0, 0.0],
            rx_energy: vec![0.0, 0.0],
            ..p
        };
        assert_eq!(offload_benefit_threshold(&t, &free, 0), 0.0);
    }

    #[test]
    fn relative_size_examples() {
        let cloud = CloudLink {
            backhaul_rate: 5.0,
            cpu_rate_per_task: 10.0,
        };
        let t = task(44.0, 4.4, 5.0, 10.0);
        let fog = relative_size(&t, Tier::Fog, &cloud).unwrap();
        close(fog.input, 4.4);
        close(fog.output, 0.44);
        close(fog.cpu, 0.5);
        assert!(matches!(
            relative_size(&t, Tier::Cloud, &cloud),
            Err(Error::CloudInfeasible { .. })
        ));

        let small = task(4.4, 0.44, 5.0, 10.0);
        let c = relative_size(&small, Tier::Cloud, &cloud).unwrap();
        close(c.input, 4.4 / 8.532);
        close(c.output, 0.44 / 8.532);
        assert_eq!(c.cpu, 0.0);
        assert!((c.input - 0.5157).abs() < 1e-4);
    }

    #[test]
    fn satisfaction_rate_examples() {
        let cloud = CloudLink {
            backhaul_rate: 5.0,
            cpu_rate_per_task: 10.0,
        };
        let fog = relative_size(&task(44.0, 4.4, 5.0, 10.0), Tier::Fog, &cloud).unwrap();
        let r = Rates::new(fog.input, fog.output, fog.cpu);
        close(satisfaction_rate(&fog, &r), 3.0);
        let cl = relative_size(&task(4.4, 0.44, 5.0, 10.0), Tier::Cloud, &cloud).unwrap();
        close(
            satisfaction_rate(&cl, &Rates::new(cl.input, cl.output, 0.0)),
            2.0,
        );

        let tripled = Rates::new(3.0 * fog.input, 3.0 * fog.output, 3.0 * fog.cpu);
        close(satisfaction_rate(&fog, &tripled), 1.0);
        let halved = Rates {
            uplink: tripled.uplink / 2.0,
            ..tripled
        };
        close(satisfaction_rate(&fog, &halved), 4.0 / 3.0);
    }

    #[test]
    fn satisfaction_rate_matches_delay_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = CloudLink {
            backhaul_rate: 5.0,
            cpu_rate_per_task: 10.0,
        };
        let mut checked = 0;
        while checked < 1000 {
            let t = task(
                rng.gen_range(1.0..80.0),
                rng.gen_range(0.0..8.0),
                rng.gen_range(0.1..20.0),
                rng.gen_range(1.0..30.0),
            );
            let r = Rates::new(
                rng.gen_range(0.5..72.0),
                rng.gen_range(0.5..72.0),
                rng.gen_range(0.1..10.0),
            );
            let tier = if rng.gen_bool(0.5) {
                Tier::Fog
            } else {
                Tier::Cloud
            };
            let Ok(rel) = relative_size(&t, tier, &cloud) else {
                continue;
            };
            let delay = match tier {
                Tier::Fog => fog_delay(&t, &r).unwrap(),
                Tier::Cloud => cloud_delay(&t, &r, &cloud, false),
            };
            let beta = satisfaction_rate(&rel, &r);
            // skip draws sitting on the boundary where rounding decides
            if (beta - 1.0).abs() < 1e-9 {
                continue;
            }
            assert_eq!(
                beta <= 1.0,
                delay <= t.deadline,
                "beta {beta} delay {delay} deadline {}",
                t.deadline
            );
            checked += 1;
        }
    }

    #[test]
    fn threshold_predicts_energy_benefit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = MobileProfile::uniform(0.5, V, 2, (0.142, 0.142), (0.658, 0.278));
        for _ in 0..1000 {
            let input_mb = rng.gen_range(1.0..10.0);
            let alpha = rng.gen_range(0.05..3.0);
            let t =
                Task::from_megabytes(1, input_mb, rng.gen_range(0.1..1.0), alpha * input_mb, 10.0);
            let star = offload_benefit_threshold(&t, &p, 0);
            if (alpha - star).abs() < 1e-9 {
                continue;
            }
            for j in 0..2 {
                assert_eq!(alpha > star, local_energy(&t, &p) > fog_energy(&t, &p, j));
            }
        }
    }
}
