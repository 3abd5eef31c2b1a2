use crate::model::HawkesNetwork;
use crate::sparse::SparseMatrix;

const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 10_000;
/// Iterations given to the unshifted iteration before switching to `I + Γ`.
const PLAIN_BUDGET: usize = 1_000;

/// Power-iteration estimate of `ρ(A/ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Estimates `ρ(A/ω)` for the nonnegative branching matrix (cached on the network).
pub fn spectral_radius(net: &HawkesNetwork) -> SpectralRadius {
    net.spectral_radius()
}

/// Uncached power-iteration estimate of `ρ(A/ω)`.
///
/// Plain power iteration on `Γ` handles nilpotent and primitive matrices.
/// If it stalls (periodic components), iteration continues on `I + Γ`, whose
/// Perron root is `1 + ρ(Γ)` and which has no competing peripheral
/// eigenvalues.
pub fn compute_spectral_radius(net: &HawkesNetwork) -> SpectralRadius {
    let gamma = net.branching_matrix();
    let m = net.users();
    let start = vec![1.0 / m as f64; m];

    match power(&gamma, 0.0, start.clone(), PLAIN_BUDGET) {
        (value, true, it) => SpectralRadius {
            value,
            converged: true,
            iterations: it,
        },
        (_, false, used) => {
            let (value, converged, it) = power(&gamma, 1.0, start, MAX_ITER - used);
            SpectralRadius {
                value: (value - 1.0).max(0.0),
                converged,
                iterations: used + it,
            }
        }
    }
}

/// Power iteration on `B + shift·I` with 1-norm normalization. The iterate
/// stays nonnegative, so `‖Bx‖₁ / ‖x‖₁` is the growth estimate.
fn power(b: &SparseMatrix, shift: f64, mut x: Vec<f64>, budget: usize) -> (f64, bool, usize) {
    let mut y = vec![0.0; x.len()];
    let mut last = f64::NAN;
    for it in 1..=budget {
        b.matvec(&x, &mut y);
        y.iter_mut().zip(&x).for_each(|(y, x)| *y += shift * x);
        let growth: f64 = y.iter().sum();
        if growth <= 0.0 {
            return (shift, true, it);
        }
        y.iter_mut().for_each(|v| *v /= growth);
        std::mem::swap(&mut x, &mut y);
        if (growth - last).abs() <= REL_TOL * growth {
            return (growth, true, it);
        }
        last = growth;
    }
    (last, false, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(m: usize, entries: &[(usize, usize, f64)], omega: f64) -> SpectralRadius {
        spectral_radius(&HawkesNetwork::new(m, entries, omega).unwrap())
    }

    #[test]
    fn scalar() {
        let r = rho(1, &[(0, 0, 0.5)], 1.0);
        assert!((r.value - 0.5).abs() < 1e-12 && r.converged);
    }

    #[test]
    fn nilpotent_is_zero() {
        let r = rho(2, &[(0, 1, 1.0)], 1.0);
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn diagonal() {
        let r = rho(2, &[(0, 0, 2.0), (1, 1, 3.0)], 1.0);
        assert!((r.value - 3.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn periodic_two_cycle() {
        // [[0, 4], [1, 0]] / 2 has eigenvalues ±1.
        let r = rho(2, &[(0, 1, 4.0), (1, 0, 1.0)], 2.0);
        assert!((r.value - 1.0).abs() < 1e-6, "{r:?}");
        assert!(r.converged);
    }

    #[test]
    fn empty_network() {
        assert_eq!(rho(3, &[], 1.0).value, 0.0);
    }
}
