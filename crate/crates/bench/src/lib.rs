//! Fixtures shared by the solver benchmarks.

use fogopt::ffbd::Subproblem;
use fogopt::harness::{generate, Range, ScenarioSpec};
use fogopt::model::SystemInstance;

/// Reference network (10 tasks, 4 fog nodes), scenario 2 at a 6 s deadline.
pub fn reference_instance() -> SystemInstance {
    generate(&ScenarioSpec::scenario2(1), 4).expect("reference instance")
}

/// Reduced instance that keeps every exact method well under a second.
pub fn medium_instance() -> SystemInstance {
    let mut spec = ScenarioSpec::scenario2(1);
    spec.n_tasks = 6;
    spec.n_fog = 2;
    generate(&spec, 3).expect("medium instance")
}

/// Small enough for exhaustive enumeration, loaded enough that the node
/// checks and master iterations do real work.
pub fn small_instance() -> SystemInstance {
    let mut spec = ScenarioSpec::custom(4, 2, 7);
    spec.alpha = Range::new(1.0, 4.0);
    spec.deadline = 5.0;
    generate(&spec, 0).expect("small instance")
}

/// Node subproblems of growing size on the first fog node of the
/// reference network at its loosest deadline. Every other task is
/// forwarded to the cloud when it can reach it in time.
pub fn subproblems() -> Vec<Subproblem> {
    let inst = generate(&ScenarioSpec::scenario2(1), 8).expect("loose instance");
    let reachable = |i: usize| Subproblem::new(&inst, 0, &[], &[i]).is_ok();
    (1..=inst.n_tasks())
        .map(|k| {
            let (cloud, fog): (Vec<usize>, Vec<usize>) =
                (0..k).partition(|&i| i % 2 == 1 && reachable(i));
            Subproblem::new(&inst, 0, &fog, &cloud).expect("forwarded tasks are reachable")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_advertised_shape() {
        assert_eq!(reference_instance().n_tasks(), 10);
        assert_eq!(medium_instance().n_fog(), 2);
        assert_eq!(subproblems().len(), 10);
    }

    #[test]
    fn solver_fixtures_are_feasible() {
        use fogopt::ffbd::{run, Mode};
        for inst in [medium_instance(), small_instance()] {
            assert!(run(&inst, Mode::F, None).unwrap().solution.is_some());
        }
    }
}
