mod common;

use actshape::eval::{
    baseline_allocate, evaluate_simulated, evaluate_theoretical, order_agreement, rank_correlation,
    BaselineKind,
};
use actshape::{BudgetSpec, HawkesNetwork, PsiOptions, ShapingTask};
use common::random_net;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutation() -> impl Strategy<Value = Vec<usize>> {
    (2usize..=12).prop_flat_map(|n| Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn baselines_are_feasible(
        seed in any::<u64>(),
        m in 1usize..=12,
        total in 0.0f64..5.0,
        t in 0.1f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.3, 1.0, 0.7);
        let costs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..3.0)).collect();
        let base: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..3.0)).collect();
        let budget = BudgetSpec::new(costs.clone(), total).unwrap();
        for kind in BaselineKind::ALL {
            let delta = baseline_allocate(kind, &net, t, &budget, &base, Some(&target), &PsiOptions::default())
                .unwrap()
                .into_inner();
            prop_assert!(delta.iter().all(|v| *v >= 0.0), "{kind}: {delta:?}");
            let spent: f64 = delta.iter().zip(&costs).map(|(d, c)| d * c).sum();
            prop_assert!(spent <= total + 1e-12, "{kind}: spent {spent} of {total}");
        }
    }

    #[test]
    fn rank_correlation_identities(a in permutation(), seed in any::<u64>()) {
        let reversed: Vec<usize> = a.iter().rev().copied().collect();
        prop_assert_eq!(rank_correlation(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(rank_correlation(&a, &reversed).unwrap(), 0.0);

        let mut b = a.clone();
        b.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b_rev: Vec<usize> = b.iter().rev().copied().collect();
        let ab = rank_correlation(&a, &b).unwrap();
        prop_assert_eq!(ab, rank_correlation(&b, &a).unwrap());
        prop_assert!((ab + rank_correlation(&a, &b_rev).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn agreement_of_strictly_monotone_scores_is_one(
        xs in prop::collection::btree_set(0u32..1000, 2..10),
    ) {
        let distances: Vec<f64> = xs.iter().map(|x| *x as f64).collect();
        let objectives: Vec<f64> = distances.iter().map(|d| 5.0 - d.sqrt()).collect();
        prop_assert_eq!(order_agreement(&distances, &objectives).unwrap(), 1.0);
        let inverted: Vec<f64> = distances.iter().map(|d| d.sqrt()).collect();
        prop_assert_eq!(order_agreement(&distances, &inverted).unwrap(), 0.0);
    }
}

#[test]
fn simulated_poisson_rate() {
    let net = HawkesNetwork::new(1, &[], 1.0).unwrap();
    let cam = ShapingTask::capped(vec![2.0]).unwrap();
    let value = evaluate_simulated(&cam, &net, 100.0, &[1.0], 400, 10.0, 5).unwrap();
    assert!((value - 1.0).abs() <= 0.05, "{value}");
}

/// Mean absolute gap between simulated and theoretical LSASH values, near
/// stationarity so the last-window mean matches the instantaneous rate.
#[test]
fn simulated_converges_to_theoretical() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = random_net(&mut rng, 3, 0.6, 1.0, 0.5);
    let lam = [1.0, 2.0, 0.5];
    let task = ShapingTask::least_squares(vec![2.0, 3.0, 1.0]).unwrap();
    let t = 30.0;
    let exact = evaluate_theoretical(&task, &net, t, &lam, &PsiOptions::default()).unwrap();
    let gap = |runs: usize| -> f64 {
        let trials = 30;
        (0..trials)
            .map(|s| (evaluate_simulated(&task, &net, t, &lam, runs, 1.0, 1000 + s).unwrap() - exact).abs())
            .sum::<f64>()
            / trials as f64
    };
    let gaps = [gap(25), gap(100), gap(400)];
    // Each fourfold increase in runs should roughly halve the gap.
    for w in gaps.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.25..=0.8).contains(&ratio), "gaps {gaps:?}");
    }
}
