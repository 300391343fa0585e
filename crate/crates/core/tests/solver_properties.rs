mod common;

use common::{perfectly_observed, random_belief, random_mdp, random_pomdp, rng};
use epiplan::belief::Belief;
use epiplan::dp::{
    evaluate_exact_tree, greedy_action, mdp_policy_iteration, mdp_value_iteration, solve_pomdp,
    SolveSettings,
};
use proptest::prelude::*;

fn exact(horizon: usize, discount: f64) -> SolveSettings {
    SolveSettings::finite(horizon, discount)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_solve_matches_expectimax(
        seed in any::<u64>(),
        n in 2usize..=4,
        actions in 2usize..=3,
        horizon in 1usize..=3,
        discount in 0.5f64..=1.0,
    ) {
        let m = random_pomdp(seed, n, actions, 2);
        let p = solve_pomdp(&m, &exact(horizon, discount)).unwrap();
        let mut r = rng(seed ^ 0xb5);
        for _ in 0..20 {
            let b = random_belief(&mut r, n);
            let oracle = evaluate_exact_tree(&b, &m, horizon, discount).unwrap();
            prop_assert!((p.value(0, &b) - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
                "solver {} oracle {}", p.value(0, &b), oracle);
        }
    }

    #[test]
    fn value_is_concave(seed in any::<u64>(), n in 2usize..=4, lambda in 0.0f64..=1.0) {
        let m = random_pomdp(seed, n, 3, 2);
        let p = solve_pomdp(&m, &exact(3, 0.9)).unwrap();
        let mut r = rng(seed ^ 1);
        for _ in 0..20 {
            let b1 = random_belief(&mut r, n);
            let b2 = random_belief(&mut r, n);
            let mix: Vec<f64> = b1.weights().iter().zip(b2.weights())
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
            let mix = Belief::from_weights(mix).unwrap();
            let lhs = p.value(0, &mix);
            let rhs = lambda * p.value(0, &b1) + (1.0 - lambda) * p.value(0, &b2);
            prop_assert!(lhs >= rhs - 1e-9);
        }
    }

    #[test]
    fn longer_horizon_costs_more(seed in any::<u64>(), n in 2usize..=4) {
        let m = random_pomdp(seed, n, 2, 2);
        let p = solve_pomdp(&m, &exact(4, 0.95)).unwrap();
        let mut r = rng(seed ^ 2);
        for _ in 0..20 {
            let b = random_belief(&mut r, n);
            // stage t has 4 - t stages to go
            for t in 0..3 {
                prop_assert!(p.value(t, &b) >= p.value(t + 1, &b) - 1e-9);
            }
        }
    }

    #[test]
    fn scaling_costs_keeps_greedy_actions(seed in any::<u64>(), factor in 0.01f64..100.0) {
        let m = random_pomdp(seed, 3, 3, 2);
        let s = exact(2, 0.9);
        let p = solve_pomdp(&m, &s).unwrap();
        let q = solve_pomdp(&m.with_scaled_costs(factor), &s).unwrap();
        let mut r = rng(seed ^ 3);
        for _ in 0..30 {
            let b = random_belief(&mut r, 3);
            let (a, v) = greedy_action(&b, p.stage(0)).unwrap();
            let (a2, v2) = greedy_action(&b, q.stage(0)).unwrap();
            // near-ties may legitimately flip under rounding
            let margin = p.stage(0).vectors.iter().filter(|g| g.action != a)
                .map(|g| g.value_at(b.weights()) - v).fold(f64::INFINITY, f64::min);
            if margin > 1e-9 * v.abs().max(1.0) {
                prop_assert_eq!(a, a2);
            }
            prop_assert!((v2 - factor * v).abs() <= 1e-9 * v2.abs().max(1.0));
        }
    }

    #[test]
    fn more_actions_never_cost_more(seed in any::<u64>(), n in 2usize..=4) {
        let m = random_pomdp(seed, n, 3, 2);
        let s = exact(3, 0.9);
        let full = solve_pomdp(&m, &s).unwrap();
        let sub = solve_pomdp(&m.with_actions(&[0, 2]).unwrap(), &s).unwrap();
        let mut r = rng(seed ^ 4);
        for _ in 0..20 {
            let b = random_belief(&mut r, n);
            prop_assert!(full.value(0, &b) <= sub.value(0, &b) + 1e-9);
        }
    }

    #[test]
    fn perfect_observation_matches_mdp(seed in any::<u64>(), n in 2usize..=4) {
        let m = perfectly_observed(&random_pomdp(seed, n, 2, 2));
        let s = exact(3, 0.9);
        let p = solve_pomdp(&m, &s).unwrap();
        let mdp = mdp_value_iteration(&m.mdp(), &s).unwrap();
        for t in 0..3 {
            for st in 0..n {
                let b = Belief::point_mass(n, st);
                prop_assert!((p.value(t, &b) - mdp.values[t][st]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn value_and_policy_iteration_agree(seed in any::<u64>()) {
        let m = random_mdp(seed, 20, 3);
        let mut s = SolveSettings::infinite(0.95);
        s.tolerance = 1e-12;
        let vi = mdp_value_iteration(&m, &s).unwrap();
        let pi = mdp_policy_iteration(&m, &s).unwrap();
        for (a, b) in vi.values[0].iter().zip(&pi.values[0]) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }
}
