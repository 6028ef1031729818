use missbandit_core::{
    build_table, perturbed_index, run_trial, select_arm, superiority_probability, thompson_allocation,
    ucb_index, Algorithm, Arm, ArmState, Calibration, DecisionKind, GittinsTable, ImputationMode,
    MissingnessProfile, Outcome, PolicySpec, Scenario, TrialStreams, Urn,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn table() -> &'static GittinsTable {
    static TABLE: OnceLock<GittinsTable> = OnceLock::new();
    TABLE.get_or_init(|| build_table(&Calibration::with_discount(0.99).unwrap(), 42).unwrap())
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

fn mode() -> impl Strategy<Value = ImputationMode> {
    prop::sample::select(ImputationMode::ALL.to_vec())
}

fn probability() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0]
}

fn missing_probability() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), 0.0..=0.5]
}

fn arm_state() -> impl Strategy<Value = ArmState> {
    (0u32..60, 0u32..60).prop_map(|(s, f)| ArmState::with_counts(s, f))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trial_counts_add_up(
        alg in algorithm(),
        mode in mode(),
        p0 in probability(),
        p1 in probability(),
        m0 in missing_probability(),
        m1 in missing_probability(),
        n in 1u32..40,
        seed in any::<u64>(),
    ) {
        let scenario = Scenario::new("p", p0, p1, n).unwrap();
        let miss = MissingnessProfile::new(m0, m1).unwrap();
        let policy = PolicySpec::new(alg);
        let mut streams = TrialStreams::new(seed, 1, 2);
        let r = run_trial(&scenario, &miss, &policy, mode, Some(table()), &mut streams).unwrap();

        prop_assert_eq!(r.assignments.len(), n as usize);
        prop_assert_eq!(r.arms[0].assigned() + r.arms[1].assigned(), n);
        for arm in Arm::ALL {
            let st = &r.arms[arm.index()];
            let count = |o: Outcome| r.assignments.iter().zip(&r.outcomes).filter(|&(&a, &x)| a == arm && x == o).count() as u32;
            prop_assert_eq!(st.observed_successes, count(Outcome::Success));
            prop_assert_eq!(st.observed_failures, count(Outcome::Failure));
            prop_assert_eq!(st.missing, count(Outcome::Missing));
            prop_assert!(st.imputed_successes + st.imputed_failures <= st.missing);
            if mode == ImputationMode::None {
                prop_assert_eq!(st.imputed_successes + st.imputed_failures, 0);
            }
            if mode == ImputationMode::MeanDefaultHalf || mode == ImputationMode::MeanDefaultNineTenths {
                prop_assert_eq!(st.imputed_successes + st.imputed_failures, st.missing);
            }
            if miss.for_arm(arm) == 0.0 {
                prop_assert_eq!(st.missing, 0);
            }
        }
        prop_assert_eq!(r.pstar(), f64::from(r.arms[1].assigned()) / f64::from(n));
        prop_assert_eq!(r.observed_successes(), r.arms[0].observed_successes + r.arms[1].observed_successes);
    }

    #[test]
    fn trials_are_reproducible(alg in algorithm(), mode in mode(), seed in any::<u64>(), rep in any::<u64>()) {
        let scenario = Scenario::new("p", 0.4, 0.6, 30).unwrap();
        let miss = MissingnessProfile::new(0.2, 0.3).unwrap();
        let policy = PolicySpec::new(alg);
        let a = run_trial(&scenario, &miss, &policy, mode, Some(table()), &mut TrialStreams::new(seed, 9, rep)).unwrap();
        let b = run_trial(&scenario, &miss, &policy, mode, Some(table()), &mut TrialStreams::new(seed, 9, rep)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn imputation_is_inert_without_missingness(alg in algorithm(), mode in mode(), seed in any::<u64>()) {
        let scenario = Scenario::new("p", 0.3, 0.7, 25).unwrap();
        let policy = PolicySpec::new(alg);
        let plain = run_trial(&scenario, &MissingnessProfile::NONE, &policy, ImputationMode::None, Some(table()), &mut TrialStreams::new(seed, 0, 0)).unwrap();
        let other = run_trial(&scenario, &MissingnessProfile::NONE, &policy, mode, Some(table()), &mut TrialStreams::new(seed, 0, 0)).unwrap();
        prop_assert_eq!(plain.arms, other.arms);
        prop_assert_eq!(plain.assignments, other.assignments);
    }

    #[test]
    fn superiority_is_a_complementary_probability(a in arm_state(), b in arm_state()) {
        let q = superiority_probability(&a, &b);
        let r = superiority_probability(&b, &a);
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!((q + r - 1.0).abs() < 1e-9, "{} + {}", q, r);
    }

    #[test]
    fn superiority_grows_with_experimental_successes(a in arm_state(), s in 0u32..59, f in 0u32..60) {
        let lo = superiority_probability(&a, &ArmState::with_counts(s, f));
        let hi = superiority_probability(&a, &ArmState::with_counts(s + 1, f));
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn thompson_allocation_is_a_mirrored_probability(q in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let pi = thompson_allocation(q, c);
        prop_assert!((0.0..=1.0).contains(&pi));
        prop_assert!((pi + thompson_allocation(1.0 - q, c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indexed_choice_is_the_argmax(x in -5.0f64..5.0, y in -5.0f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = select_arm(DecisionKind::Indexed, [x, y], &mut rng);
        if x != y {
            let want = if y > x { Arm::Experimental } else { Arm::Control };
            prop_assert_eq!(d.arm, want);
            // a monotone transform of both indices keeps the choice
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shifted = select_arm(DecisionKind::Indexed, [3.0 * x + 1.0, 3.0 * y + 1.0], &mut rng);
            prop_assert_eq!(shifted.arm, want);
        }
    }

    #[test]
    fn deterministic_rules_mirror_under_label_swap(
        alg in prop::sample::select(vec![Algorithm::Cb, Algorithm::Ucb, Algorithm::Gi]),
        s0 in 0u32..20, f0 in 0u32..20, s1 in 0u32..20, f1 in 0u32..20, t in 1u32..40,
    ) {
        let arms = [ArmState::with_counts(s0, f0), ArmState::with_counts(s1, f1)];
        let mirrored = [arms[1], arms[0]];
        let mut allocator = missbandit_core::Allocator::new(PolicySpec::new(alg), Some(table()), 40);
        let mut streams = TrialStreams::new(0, 0, 0);
        let d = allocator.decide(&arms, t, &mut streams).unwrap();
        let m = allocator.decide(&mirrored, t, &mut streams).unwrap();
        prop_assert_eq!(d.values, [m.values[1], m.values[0]]);
        if d.values[0] != d.values[1] {
            prop_assert_eq!(d.arm, m.arm.other());
        }
    }

    #[test]
    fn optimistic_indices_exceed_the_mean(a in arm_state(), t in 1u32..600, seed in any::<u64>()) {
        prop_assert!(ucb_index(&a, t) >= a.posterior_mean());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(perturbed_index(0.3, &a, 2.0, &mut rng) >= 0.3);
    }

    #[test]
    fn urn_grows_by_one_per_answer(outcomes in prop::collection::vec((any::<bool>(), 0u8..3), 0..50)) {
        let mut urn = Urn::new();
        let mut answered = 0;
        for (experimental, o) in outcomes {
            let arm = if experimental { Arm::Experimental } else { Arm::Control };
            let outcome = [Outcome::Success, Outcome::Failure, Outcome::Missing][o as usize];
            urn.update(arm, outcome);
            if outcome != Outcome::Missing {
                answered += 1;
            }
        }
        prop_assert_eq!(urn.balls[0] + urn.balls[1], 2 + answered);
        let p = urn.probabilities();
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_responses_leave_the_posterior(s in 0u32..50, f in 0u32..50, k in 0u32..20) {
        let mut a = ArmState::with_counts(s, f);
        let before = (a.posterior_mean(), a.effective_observation_count());
        for _ in 0..k {
            a.record(Outcome::Missing);
        }
        prop_assert_eq!((a.posterior_mean(), a.effective_observation_count()), before);
        prop_assert_eq!(a.assigned(), s + f + k);
    }
}
