#![allow(dead_code)]

use actshape::psi::compute_spectral_radius;
use actshape::HawkesNetwork;
use rand::Rng;

/// Random nonnegative network with edge probability `density` (self-loops
/// included), weights in `[0.1, 1]`, rescaled so `ρ(A/ω) = rho` when the
/// unscaled radius is positive.
pub fn random_net<R: Rng>(rng: &mut R, m: usize, density: f64, omega: f64, rho: f64) -> HawkesNetwork {
    let mut entries = Vec::new();
    for r in 0..m {
        for c in 0..m {
            if rng.gen_bool(density) {
                entries.push((r, c, rng.gen_range(0.1..1.0)));
            }
        }
    }
    if entries.is_empty() {
        entries.push((0, 0, 1.0));
    }
    scale_to(HawkesNetwork::new(m, &entries, omega).unwrap(), rho)
}

/// Random network with about `degree` in-edges per user, no self-loops.
pub fn random_sparse_net<R: Rng>(
    rng: &mut R,
    m: usize,
    degree: usize,
    omega: f64,
    rho: f64,
) -> HawkesNetwork {
    let mut entries = Vec::with_capacity(m * degree);
    for r in 0..m {
        let mut cols: Vec<usize> = (0..degree)
            .map(|_| rng.gen_range(0..m))
            .filter(|&c| c != r)
            .collect();
        cols.sort_unstable();
        cols.dedup();
        for c in cols {
            entries.push((r, c, rng.gen_range(0.1..1.0)));
        }
    }
    scale_to(HawkesNetwork::new(m, &entries, omega).unwrap(), rho)
}

pub fn scale_to(net: HawkesNetwork, rho: f64) -> HawkesNetwork {
    let r = compute_spectral_radius(&net);
    assert!(r.converged, "power iteration did not converge: {r:?}");
    if r.value > 0.0 {
        net.with_scaled_influence(rho / r.value).unwrap()
    } else {
        net
    }
}

pub fn dense_apply(mat: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    mat.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn dense_transpose_apply(mat: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (row, x) in mat.iter().zip(v) {
        out.iter_mut().zip(row).for_each(|(o, a)| *o += a * x);
    }
    out
}

/// `‖x − y‖∞ / ‖y‖∞`.
pub fn rel_err(x: &[f64], y: &[f64]) -> f64 {
    let num = x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = y.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
