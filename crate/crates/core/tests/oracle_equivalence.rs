mod common;

use fogopt::harness::{run_method, Method};
use fogopt::model::{validate_solution, DEFAULT_TOLERANCE};
use fogopt::oracle::enumerate_optimum;

use common::{energy, same_energy, small_instance};

const EXACT: [Method; 6] = [
    Method::IbbaLfc,
    Method::IbbaLcf,
    Method::FfbdS,
    Method::FfbdF,
    Method::RopFfbdS,
    Method::RopFfbdF,
];

#[test]
fn exact_methods_reach_the_enumerated_optimum() {
    let mut feasible = 0;
    for seed in 0..36 {
        let inst = small_instance(seed);
        let want = energy(&enumerate_optimum(&inst).unwrap().solution);
        feasible += usize::from(want.is_some());
        for m in EXACT {
            let run = run_method(&inst, m).unwrap();
            assert!(
                same_energy(run.energy(), want),
                "seed {seed} {m}: {:?} vs {want:?}",
                run.energy()
            );
            if let Some(s) = &run.solution {
                let report = validate_solution(s, &inst, DEFAULT_TOLERANCE);
                assert!(
                    report.is_feasible(),
                    "seed {seed} {m}: {:?}",
                    report.violations
                );
            }
        }
    }
    // the suite must exercise both outcomes
    assert!(
        feasible > 5 && feasible < 36,
        "{feasible} feasible instances"
    );
}

#[test]
fn fast_and_standard_modes_pick_the_same_assignment() {
    for seed in 0..36 {
        let inst = small_instance(seed);
        let s = run_method(&inst, Method::FfbdS).unwrap();
        let f = run_method(&inst, Method::FfbdF).unwrap();
        let n = inst.n_nodes();
        assert_eq!(
            s.solution.as_ref().and_then(|x| x.placements(n)),
            f.solution.as_ref().and_then(|x| x.placements(n)),
            "seed {seed}"
        );
        assert!(f.standard_solver_calls <= s.standard_solver_calls);
        assert_eq!(s.mp_iterations, f.mp_iterations);
    }
}

#[test]
fn oracle_prefers_local_then_fog_then_cloud_among_ties() {
    for seed in 0..36 {
        let inst = small_instance(seed);
        let oracle = enumerate_optimum(&inst).unwrap().solution;
        let lfc = run_method(&inst, Method::IbbaLfc).unwrap().solution;
        let n = inst.n_nodes();
        assert_eq!(
            oracle.and_then(|s| s.placements(n)),
            lfc.and_then(|s| s.placements(n)),
            "seed {seed}"
        );
    }
}
