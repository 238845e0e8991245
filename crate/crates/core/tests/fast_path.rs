mod common;

use fogopt::ffbd::{check_node, fast_feasible, fast_infeasible, solve_sp2, Mode, SP2_ZERO};
use fogopt::model::satisfaction_rate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_subproblem;

const SAMPLES: usize = 200;

#[test]
fn closed_form_verdicts_agree_with_the_slack_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut feasible_hits, mut infeasible_hits, mut undecided) = (0, 0, 0);
    for n in 0..SAMPLES {
        let sub = random_subproblem(&mut rng);
        let sp2 = solve_sp2(&sub, None).unwrap();
        if fast_feasible(&sub).is_some() {
            feasible_hits += 1;
            assert!(
                sp2.objective <= SP2_ZERO,
                "sample {n}: fast feasible but slack {}",
                sp2.objective
            );
        }
        if fast_infeasible(&sub).is_some() {
            infeasible_hits += 1;
            assert!(
                sp2.objective > SP2_ZERO,
                "sample {n}: fast infeasible but slack {}",
                sp2.objective
            );
        }
        if fast_feasible(&sub).is_none() && fast_infeasible(&sub).is_none() {
            undecided += 1;
        }
    }
    assert!(feasible_hits > 0 && infeasible_hits > 0 && undecided > 0);
}

#[test]
fn fast_allocations_respect_capacity_and_deadlines() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..SAMPLES {
        let sub = random_subproblem(&mut rng);
        let Some(alloc) = fast_feasible(&sub) else {
            continue;
        };
        let mut used = [0.0; 3];
        for (i, rel) in sub.fog_tasks.iter().chain(&sub.cloud_tasks) {
            let r = alloc.iter().find(|(t, _)| t == i).unwrap().1;
            assert!(satisfaction_rate(rel, &r) <= 1.0 + 1e-9);
            (0..3).for_each(|d| used[d] += r.as_array()[d]);
        }
        for d in 0..3 {
            assert!(used[d] <= sub.caps[d] * (1.0 + 1e-9));
        }
    }
}

#[test]
fn both_modes_reach_the_same_verdict() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..SAMPLES {
        let sub = random_subproblem(&mut rng);
        let s = check_node(&sub, Mode::S, None).unwrap();
        let f = check_node(&sub, Mode::F, None).unwrap();
        assert_eq!(s.is_feasible(), f.is_feasible());
        assert_eq!(s.solver_calls, 1);
        assert!(f.solver_calls <= 1);
    }
}
