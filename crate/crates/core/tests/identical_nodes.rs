//! Four identical fog nodes and a tight deadline: the decomposition has to
//! agree with branch and bound and its master values may never drop.

mod common;

use fogopt::ffbd::{self, Mode};
use fogopt::harness::{generate, run_method, Method, ScenarioSpec};

use common::same_energy;

#[test]
fn decomposition_matches_branch_and_bound_on_a_tight_deadline() {
    let inst = generate(&ScenarioSpec::scenario2(4), 4).unwrap();
    let want = run_method(&inst, Method::IbbaLfc).unwrap().energy();
    assert!(want.is_some());
    for mode in [Mode::S, Mode::F] {
        let r = ffbd::run(&inst, mode, None).unwrap();
        let got = r.solution.as_ref().map(|s| s.total_energy);
        assert!(same_energy(got, want), "{mode:?}: {got:?} vs {want:?}");
        assert!(r
            .stats
            .master_values
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
    }
}
