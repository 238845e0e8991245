mod common;

use fogopt::baselines::{aop, wop};
use fogopt::ffbd::{self, Mode};
use fogopt::harness::{generate, read_csv, write_csv, Method, ResultRow, RunStatus, ScenarioSpec};
use fogopt::model::{
    option_energy, validate_solution, Placement, SystemInstance, DEFAULT_TOLERANCE,
};
use fogopt::oracle::enumerate_optimum;
use proptest::prelude::*;

use common::{energy, small_instance};

fn cheapest_sum(inst: &SystemInstance) -> f64 {
    (0..inst.n_tasks())
        .map(|i| {
            inst.placements()
                .into_iter()
                .map(|p| option_energy(inst, i, p))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slots_round_trip(n_nodes in 2usize..8, raw in 0usize..64) {
        let slot = raw % Placement::slot_count(n_nodes);
        let p = Placement::from_slot(slot, n_nodes).unwrap();
        prop_assert_eq!(p.slot(n_nodes), slot);
        prop_assert!(Placement::from_slot(Placement::slot_count(n_nodes), n_nodes).is_none());
    }

    #[test]
    fn optimum_is_feasible_and_bracketed(seed in 0u64..10_000) {
        let inst = small_instance(seed);
        let r = ffbd::run(&inst, Mode::F, None).unwrap();
        if let Some(s) = &r.solution {
            prop_assert!(validate_solution(s, &inst, DEFAULT_TOLERANCE).is_feasible());
            prop_assert!(s.total_energy >= cheapest_sum(&inst) - 1e-9);
            let local = wop(&inst);
            if local.error_rate == 0.0 {
                prop_assert!(s.total_energy <= energy(&local.solution).unwrap() + 1e-9);
            }
        } else {
            prop_assert!(wop(&inst).error_rate > 0.0);
        }
    }

    #[test]
    fn all_offloaded_never_beats_the_optimum(seed in 0u64..10_000) {
        let inst = small_instance(seed);
        let a = aop(&inst).unwrap();
        let best = enumerate_optimum(&inst).unwrap().solution;
        if let (Some(s), Some(b)) = (&a.result.solution, &best) {
            if a.result.error_rate == 0.0 {
                prop_assert!(s.total_energy >= b.total_energy - 1e-9 * b.total_energy);
            }
        }
    }

    #[test]
    fn instance_files_round_trip(seed in 0u64..1_000, n in 1usize..6, m in 1usize..4) {
        let inst = generate(&ScenarioSpec::custom(n, m, seed), 0).unwrap();
        let text = inst.to_json_string().unwrap();
        let back = SystemInstance::from_json_str(&text).unwrap();
        prop_assert_eq!(back.n_tasks(), n);
        for i in 0..n {
            let (a, b) = (inst.task(i), back.task(i));
            prop_assert!((a.input_size - b.input_size).abs() <= 1e-12 * a.input_size);
            prop_assert!((a.cpu_cycles - b.cpu_cycles).abs() <= 1e-12 * a.cpu_cycles);
        }
    }

    #[test]
    fn result_rows_survive_csv(
        exp in 0usize..100,
        fracs in proptest::array::uniform3(0.0f64..=1.0),
        energy in proptest::option::of(0.0f64..1e4),
        wall in 0.0f64..1e6,
        counts in proptest::array::uniform3(0usize..100_000),
    ) {
        let row = ResultRow {
            method: Method::ALL[exp % Method::ALL.len()],
            experiment: exp,
            offload_fraction: fracs[0],
            fog_fraction: fracs[1],
            cloud_fraction: fracs[2],
            error_rate: fracs[0] * fracs[1],
            mean_energy: energy,
            mean_delay: energy.map(|e| e / 3.0),
            wall_time_ms: wall,
            intermediate_problem_count: counts[0],
            mp_iterations: counts[1],
            fast_detection_fraction: fracs[2],
            status: if energy.is_some() { RunStatus::Feasible } else { RunStatus::Infeasible },
            standard_solver_calls: counts[2],
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        prop_assert_eq!(read_csv(&buf[..]).unwrap(), vec![row]);
    }
}
