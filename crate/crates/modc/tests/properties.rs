//! Property tests for the arithmetic core, the searchers, and the pass@k
//! analytics.

use proptest::prelude::*;

use modc::countdown::{
    apply_op, enumerate_solutions, is_reachable, verify_expression, Op, Problem, SearchState,
    VALUE_CAP,
};
use modc::passk::{
    passk_modc, passk_std, passk_unbiased_estimate, AllocationSpec, WeightDistribution,
};
use modc::search::{run_search, Heuristic, HeuristicKind, Mode, SearchConfig};

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul), Just(Op::Div)]
}

proptest! {
    /// Valid steps stay in the positive capped domain, and commutative ops
    /// are order-independent.
    #[test]
    fn apply_op_closure(a in 1u32..5000, b in 1u32..5000, op in arb_op()) {
        if let Ok(r) = apply_op(a, b, op) {
            prop_assert!(r >= 1 && r <= VALUE_CAP);
        }
        match op {
            Op::Add | Op::Mul => prop_assert_eq!(apply_op(a, b, op), apply_op(b, a, op)),
            _ => {}
        }
    }

    /// Every oracle solution verifies, and verification implies the oracle
    /// would find a step-identical expression.
    #[test]
    fn oracle_solutions_verify(
        nums in proptest::collection::vec(1u32..25, 2..=4),
        target in 1u32..60,
    ) {
        let problem = Problem::new(nums, target).unwrap();
        let solutions = enumerate_solutions(&problem).unwrap();
        prop_assert_eq!(is_reachable(&problem).unwrap(), !solutions.is_empty());
        for expr in &solutions {
            prop_assert!(verify_expression(&problem, expr));
        }
    }

    /// Multiset conservation: each applied step shrinks the remaining pool by
    /// exactly one and extends the history by one.
    #[test]
    fn state_multiset_conservation(
        nums in proptest::collection::vec(1u32..30, 2..=5),
        steps_seed in 0u64..1000,
    ) {
        let problem = Problem::new(nums, 1).unwrap();
        let mut state = SearchState::initial(&problem);
        let mut rng = modc::rng::stream(steps_seed, &["walk"]);
        use rand::Rng;
        while state.remaining().len() >= 2 {
            let children = modc::countdown::successors(state.remaining());
            if children.is_empty() {
                break;
            }
            let (step, _) = children[rng.random_range(0..children.len())];
            let next = state.apply(step).unwrap();
            prop_assert_eq!(next.remaining().len(), state.remaining().len() - 1);
            prop_assert_eq!(next.history().len(), state.history().len() + 1);
            state = next;
        }
        prop_assert_eq!(state.remaining().len(), problem.n_start() - state.history().len());
    }

    /// Budget obedience, soundness, and determinism of both searchers on
    /// arbitrary configurations.
    #[test]
    fn search_contract(
        nums in proptest::collection::vec(1u32..100, 4),
        target in 1u32..=200,
        mode in prop_oneof![Just(Mode::Dfs), Just(Mode::Bfs)],
        kind in prop_oneof![Just(HeuristicKind::SumDistance), Just(HeuristicKind::NearestNumber)],
        noise in 0.0f64..16.0,
        beam in 1usize..8,
        budget in 1usize..40,
        seed in 0u64..u64::MAX,
    ) {
        let problem = Problem::new(nums, target).unwrap();
        let config = SearchConfig {
            mode,
            heuristic: Heuristic::new(kind, noise),
            beam_width: beam,
            node_budget: budget,
            seed,
        };
        let t = run_search(&problem, &config);
        prop_assert!(t.expanded_nodes <= budget);
        if t.solved {
            prop_assert!(verify_expression(&problem, t.solution.as_ref().unwrap()));
        } else {
            prop_assert!(t.solution.is_none());
        }
        prop_assert_eq!(run_search(&problem, &config), t);
    }

    /// The closed forms are probabilities, monotone in k, and the allocation
    /// form never loses to standard sampling at the average probability.
    #[test]
    fn passk_forms_are_probabilities(
        p1 in 0.0f64..=1.0,
        p2 in 0.0f64..=1.0,
        k in 1u64..=1024,
    ) {
        let std = passk_std(p1, k);
        prop_assert!((0.0..=1.0).contains(&std));
        prop_assert!(std <= passk_std(p1, k + 1) + 1e-15);

        let even = AllocationSpec::even_split(k, 2);
        let modc = passk_modc(&[p1, p2], &even).unwrap();
        prop_assert!((0.0..=1.0).contains(&modc));
        if k % 2 == 0 {
            prop_assert!(modc >= passk_std(0.5 * (p1 + p2), k) - 1e-12);
        }
    }

    /// The unbiased estimator stays in [0, 1], is monotone in both c and k,
    /// and hits the endpoints exactly.
    #[test]
    fn estimator_bounds_and_monotonicity(n in 1u64..=40, c in 0u64..=40, k in 1u64..=40) {
        prop_assume!(c <= n && k <= n);
        let est = passk_unbiased_estimate(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&est));
        if c == 0 {
            prop_assert_eq!(est, 0.0);
        }
        if c > 0 && k < n {
            prop_assert!(est <= passk_unbiased_estimate(n, c, k + 1).unwrap() + 1e-15);
        }
        if c < n {
            prop_assert!(est <= passk_unbiased_estimate(n, c + 1, k).unwrap() + 1e-15);
        }
    }

    /// Weight-distribution samples stay inside [0, 1].
    #[test]
    fn weight_samples_in_range(seed in 0u64..10_000, pick in 0usize..4) {
        let dist = match pick {
            0 => WeightDistribution::PointMass(0.5),
            1 => WeightDistribution::Beta { alpha: 0.3, beta: 0.3 },
            2 => WeightDistribution::UniformInterval { lo: 0.25, hi: 0.75 },
            _ => WeightDistribution::Empirical(vec![0.1, 0.5, 0.9]),
        };
        let mut rng = modc::rng::stream(seed, &["w"]);
        for _ in 0..16 {
            let w = dist.sample(&mut rng);
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}
