//! Seeded sweeps over random missions: every plan the pipeline produces
//! must satisfy the scheduling invariants, agents must agree on the
//! awards, and the decentralized runtime must match the centralized
//! scheduler.

use std::collections::BTreeMap;

use proptest::prelude::*;

use brickplan_core::coordinate::{run_coordination_with_faults, FaultPolicy};
use brickplan_core::mission::generate_tree;
use brickplan_core::oracle::random_mission;
use brickplan_core::schedule::{build_schedule, check_schedule};
use brickplan_core::taems::{aggregate_quality, validate_tree, NodeId};

#[test]
fn random_missions_always_produce_valid_plans() {
    for seed in 1..=100u64 {
        let bricks = 1 + (seed as usize % 5);
        let agents = 1 + (seed as usize % 3);
        let spec = random_mission(seed, bricks, agents);
        let tree = generate_tree(&spec).expect("generated missions are feasible");
        assert_eq!(validate_tree(&tree), vec![], "seed {seed}");

        let run = run_coordination_with_faults(&spec, seed, FaultPolicy::None)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(
            check_schedule(&run.schedule, &tree, &spec),
            vec![],
            "seed {seed}"
        );

        // Agreement: every agent holds the same award view.
        let views: Vec<_> = run.award_views.values().collect();
        for view in &views {
            assert_eq!(*view, views[0], "seed {seed}");
        }

        // Decentralization transparency: same plan as the centralized
        // scheduler on the same assignments.
        let central = build_schedule(&tree, &run.assignments, &spec).unwrap();
        assert_eq!(run.schedule, central, "seed {seed}");

        // Exactly-once execution of each action.
        assert_eq!(run.schedule.entries.len(), tree.action_ids().count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Raising any single leaf quality never lowers the root quality.
    #[test]
    fn aggregate_quality_is_monotone(
        seed in 1u64..500,
        bump_index in 0usize..16,
        bump in 0.1f64..5.0,
    ) {
        let spec = random_mission(seed, 1 + (seed as usize % 4), 1 + (seed as usize % 2));
        let tree = generate_tree(&spec).unwrap();
        let leaves: Vec<NodeId> = tree.action_ids().cloned().collect();
        let base: BTreeMap<NodeId, f64> = leaves
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), 0.25 + (i % 4) as f64))
            .collect();
        let before = aggregate_quality(&tree, &base).unwrap();
        let mut bumped = base.clone();
        let target = &leaves[bump_index % leaves.len()];
        *bumped.get_mut(target).unwrap() += bump;
        let after = aggregate_quality(&tree, &bumped).unwrap();
        prop_assert!(after >= before - 1e-9);
    }

    /// Coordination output is a pure function of mission and seed.
    #[test]
    fn coordination_is_deterministic(seed in 1u64..200) {
        let spec = random_mission(seed, 1 + (seed as usize % 4), 1 + (seed as usize % 3));
        let a = run_coordination_with_faults(&spec, seed, FaultPolicy::None).unwrap();
        let b = run_coordination_with_faults(&spec, seed, FaultPolicy::None).unwrap();
        prop_assert_eq!(a.schedule, b.schedule);
        prop_assert_eq!(a.trace, b.trace);
    }
}
