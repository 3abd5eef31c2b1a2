mod common;

use actshape::psi::series_terms;
use actshape::simulate::{cascade_intensity, generation_counts, simulate_cascades, SimulationOptions};
use actshape::{Cascade, HawkesNetwork};
use common::random_net;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

/// Asymptotic Kolmogorov tail with Stephens' finite-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    let tail: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    (2.0 * tail).clamp(0.0, 1.0)
}

fn ks_exponential(mut samples: Vec<f64>, rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reproducible_across_thread_counts(
        seed in any::<u64>(),
        m in 1usize..=6,
        rho in 0.0f64..0.9,
        runs in 1usize..=6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.4, 1.0, rho);
        let lambda0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let opts = SimulationOptions::default();
        let run = |threads| {
            pool(threads).install(|| simulate_cascades(&net, &lambda0, 20.0, runs, seed, &opts).unwrap())
        };
        let one = run(1);
        prop_assert_eq!(&one, &run(3));
        prop_assert_eq!(&one, &run(1));
    }

    #[test]
    fn cascades_satisfy_event_invariants(
        seed in any::<u64>(),
        m in 1usize..=6,
        rho in 0.0f64..0.95,
        horizon in 0.5f64..30.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.4, 2.0, rho);
        let lambda0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let log = simulate_cascades(&net, &lambda0, horizon, 2, seed, &SimulationOptions::default()).unwrap();
        for c in &log.cascades {
            prop_assert_eq!(c.horizon(), horizon);
            prop_assert!(c.is_labeled());
            let rebuilt = Cascade::new(horizon, c.events().to_vec(), m);
            prop_assert!(rebuilt.is_ok(), "{:?}", rebuilt.err());
            for e in c.events() {
                if let Some(p) = e.parent {
                    let parent = c.events()[p];
                    prop_assert!(net.influence().get(e.user, parent.user) > 0.0);
                }
            }
        }
    }
}

#[test]
fn poisson_gaps_are_exponential() {
    let rates = [0.5, 1.0, 2.0, 4.0];
    let net = HawkesNetwork::new(rates.len(), &[], 1.0).unwrap();
    let log = simulate_cascades(&net, &rates, 1000.0, 1, 4242, &SimulationOptions::default()).unwrap();
    let events = log.cascades[0].events();
    let level = 0.01 / rates.len() as f64;
    for (u, rate) in rates.iter().enumerate() {
        let times: Vec<f64> = events.iter().filter(|e| e.user == u).map(|e| e.time).collect();
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let n = gaps.len();
        let d = ks_exponential(gaps, *rate);
        let p = ks_p_value(d, n);
        assert!(p > level, "user {u}: D = {d}, n = {n}, p = {p}");
    }
}

#[test]
fn first_generation_ratio_matches_branching_mean() {
    let net = HawkesNetwork::new(1, &[(0, 0, 0.5)], 1.0).unwrap();
    let log = simulate_cascades(&net, &[1.0], 200.0, 200, 31, &SimulationOptions::default()).unwrap();
    let counts = generation_counts(&log, 200.0).unwrap();
    let ratio = counts[1] as f64 / counts[0] as f64;
    assert!((ratio - 0.5).abs() <= 0.05, "ratio {ratio}");
}

/// Per-generation window means against the matching series term averaged over
/// each window by Simpson's rule.
#[test]
fn generation_intensities_match_series_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    let m = 3;
    let net = random_net(&mut rng, m, 0.6, 1.0, 0.6);
    let lambda0 = [1.0, 0.5, 2.0];
    let (horizon, window, runs, generations) = (4.0, 1.0, 4000, 3);
    let log = simulate_cascades(&net, &lambda0, horizon, runs, 99, &SimulationOptions::default()).unwrap();
    let windows = (horizon / window) as usize;

    let term = |t: f64| series_terms(&net, t, &lambda0, generations, 1e-4).unwrap();
    let mut cells = 0;
    let mut inside = 0;
    for j in 0..windows {
        let (a, b) = (j as f64 * window, (j + 1) as f64 * window);
        let (fa, fm, fb) = (term(a), term(0.5 * (a + b)), term(b));
        for k in 0..=generations {
            let mut sum = vec![0.0; m];
            let mut sq = vec![0.0; m];
            for c in &log.cascades {
                let curve =
                    cascade_intensity(c, window, horizon, m, |e| e.generation == Some(k as u32)).unwrap();
                for (u, v) in curve.at_window(j).iter().enumerate() {
                    sum[u] += v;
                    sq[u] += v * v;
                }
            }
            for u in 0..m {
                let expect = (fa[k][u] + 4.0 * fm[k][u] + fb[k][u]) / 6.0;
                let mean = sum[u] / runs as f64;
                let var = (sq[u] / runs as f64 - mean * mean).max(0.0);
                let se = (var / runs as f64).sqrt().max(1e-3);
                cells += 1;
                if (mean - expect).abs() <= 3.0 * se {
                    inside += 1;
                }
            }
        }
    }
    assert!(
        inside as f64 >= 0.95 * cells as f64,
        "{inside}/{cells} cells within 3 SE"
    );
}
