mod common;

use actshape::psi::{
    psi_apply, psi_dense, psi_series_oracle, psi_transpose_apply, stationary_intensity, LinearOperator,
    ShiftedOperator,
};
use actshape::PsiOptions;
use common::{dense_apply, dense_transpose_apply, random_net, rel_err};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn nonneg(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn signed(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_dense_oracle(
        seed in any::<u64>(),
        m in 1usize..=20,
        density in 0.05f64..0.5,
        omega in 0.2f64..5.0,
        rho in 0.0f64..0.9,
        t in 0.05f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, density, omega, rho);
        let v = signed(&mut rng, m);
        let dense = psi_dense(&net, t).unwrap();
        let opts = PsiOptions::default();
        let fwd = psi_apply(&net, t, &v, &opts).unwrap();
        let back = psi_transpose_apply(&net, t, &v, &opts).unwrap();
        prop_assert!(rel_err(&fwd, &dense_apply(&dense, &v)) < 1e-8);
        prop_assert!(rel_err(&back, &dense_transpose_apply(&dense, &v)) < 1e-8);
    }

    #[test]
    fn adjoint_identity(
        seed in any::<u64>(),
        m in 1usize..=30,
        rho in 0.0f64..1.2,
        t in 0.05f64..8.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.2, 1.0, rho);
        let u = signed(&mut rng, m);
        let v = signed(&mut rng, m);
        let opts = PsiOptions::default();
        let lhs = dot(&psi_apply(&net, t, &u, &opts).unwrap(), &v);
        let rhs = dot(&u, &psi_transpose_apply(&net, t, &v, &opts).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-8 * norm(&u) * norm(&v), "{lhs} vs {rhs}");
    }

    #[test]
    fn products_are_linear(
        seed in any::<u64>(),
        m in 1usize..=15,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.3, 1.5, 0.6);
        let x = signed(&mut rng, m);
        let y = signed(&mut rng, m);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();

        let op = ShiftedOperator::new(&net, false);
        let mut ox = vec![0.0; m];
        let mut oy = vec![0.0; m];
        let mut oc = vec![0.0; m];
        op.apply(&x, &mut ox);
        op.apply(&y, &mut oy);
        op.apply(&combo, &mut oc);
        let expect: Vec<f64> = ox.iter().zip(&oy).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(oc.iter().zip(&expect).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs())));

        let opts = PsiOptions::default();
        let px = psi_apply(&net, 2.0, &x, &opts).unwrap();
        let py = psi_apply(&net, 2.0, &y, &opts).unwrap();
        let pc = psi_apply(&net, 2.0, &combo, &opts).unwrap();
        let expect: Vec<f64> = px.iter().zip(&py).map(|(p, q)| a * p + b * q).collect();
        let scale = 1.0 + a.abs() * norm(&px) + b.abs() * norm(&py);
        prop_assert!(pc.iter().zip(&expect).all(|(p, q)| (p - q).abs() <= 1e-9 * scale));
    }

    #[test]
    fn nondecreasing_in_time(
        seed in any::<u64>(),
        m in 1usize..=12,
        rho in 0.0f64..1.5,
        t1 in 0.0f64..5.0,
        dt in 0.0f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.3, 1.0, rho);
        let v = nonneg(&mut rng, m);
        let t2 = t1 + dt;
        let early = dense_apply(&psi_dense(&net, t1).unwrap(), &v);
        let late = dense_apply(&psi_dense(&net, t2).unwrap(), &v);
        prop_assert!(late.iter().zip(&early).all(|(l, e)| *l >= e - 1e-10));
        let opts = PsiOptions::default();
        let early = psi_apply(&net, t1, &v, &opts).unwrap();
        let late = psi_apply(&net, t2, &v, &opts).unwrap();
        prop_assert!(late.iter().zip(&early).all(|(l, e)| *l >= e - 1e-10 * (1.0 + e.abs())));
    }

    #[test]
    fn approaches_stationary_rate(
        seed in any::<u64>(),
        m in 1usize..=20,
        omega in 0.5f64..3.0,
        rho in 0.1f64..0.9,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.25, omega, rho);
        let lambda0 = nonneg(&mut rng, m);
        let t = 40.0 / (omega * (1.0 - rho));
        let opts = PsiOptions::default();
        let mu = psi_apply(&net, t, &lambda0, &opts).unwrap();
        let limit = stationary_intensity(&net, &lambda0, &opts).unwrap();
        let gap: Vec<f64> = mu.iter().zip(&limit).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&gap) < 1e-6, "gap {}", norm(&gap));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn matches_generation_series(
        seed in any::<u64>(),
        m in 1usize..=5,
        rho in 0.0f64..0.7,
        t in 0.5f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, m, 0.5, 1.0, rho);
        let v = nonneg(&mut rng, m);
        let series = psi_series_oracle(&net, t, &v, 20, 1e-3 * t).unwrap();
        let exact = psi_apply(&net, t, &v, &PsiOptions::default()).unwrap();
        prop_assert!(rel_err(&series, &exact) < 1e-3);
    }
}
