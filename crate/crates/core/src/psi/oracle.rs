//! Reference routes for small networks: the dense closed form and the
//! generation-by-generation convolution series.

use nalgebra::DMatrix;

use super::PsiError;
use crate::model::HawkesNetwork;

/// Largest user count accepted by the dense and series oracles.
pub const DENSE_CAP: usize = 500;

fn check_cap(net: &HawkesNetwork) -> Result<(), PsiError> {
    if net.users() > DENSE_CAP {
        return Err(PsiError::TooLarge {
            m: net.users(),
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

/// Full `Ψ(t)` (row-major) from a dense Padé scaling-and-squaring exponential
/// and a dense LU solve.
pub fn psi_dense(net: &HawkesNetwork, t: f64) -> Result<Vec<Vec<f64>>, PsiError> {
    check_cap(net)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(PsiError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let m = net.users();
    let omega = net.omega();
    let mut shifted = DMatrix::<f64>::zeros(m, m);
    for (i, j, v) in net.influence().triplets() {
        shifted[(i, j)] = v;
    }
    for i in 0..m {
        shifted[(i, i)] -= omega;
    }
    let expm = (&shifted * t).exp();
    let diff = &expm - DMatrix::<f64>::identity(m, m);
    let solved = shifted.lu().solve(&diff).ok_or(PsiError::SingularShift)?;
    let psi = expm + solved * omega;
    if psi.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::SingularShift);
    }
    Ok((0..m).map(|i| (0..m).map(|j| psi[(i, j)]).collect()).collect())
}

/// Per-generation terms `G^{(⋆k)}(t) v` for `k = 0..=generations`.
///
/// Each convolution `∫₀ᵗ A e^{-ω(t-s)} f(s) ds` is integrated by the
/// trapezoid rule on a uniform grid; the exponential kernel lets the running
/// sum be carried forward one cell at a time. Truncation error is of order
/// `ρ(A/ω)^{K+1}` and quadrature error of order `dt²`.
pub fn series_terms(
    net: &HawkesNetwork,
    t: f64,
    v: &[f64],
    generations: usize,
    dt: f64,
) -> Result<Vec<Vec<f64>>, PsiError> {
    check_cap(net)?;
    let m = net.users();
    if v.len() != m {
        return Err(PsiError::InvalidArgument(format!(
            "vector has {} entries for {m} users",
            v.len()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(PsiError::InvalidGrid(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let mut terms = vec![v.to_vec()];
    if generations == 0 {
        return Ok(terms);
    }
    if t == 0.0 {
        terms.extend(std::iter::repeat_n(vec![0.0; m], generations));
        return Ok(terms);
    }
    if !(dt > 0.0 && dt <= t / 100.0 * (1.0 + 1e-12)) {
        return Err(PsiError::InvalidGrid(format!(
            "step {dt} must be positive and at most t/100 = {}",
            t / 100.0
        )));
    }
    let cells = (t / dt).round().max(1.0) as usize;
    let h = t / cells as f64;
    let decay = (-net.omega() * h).exp();
    let a = net.influence();

    // previous[n] = μ^{(k-1)}(n h)
    let mut previous: Vec<Vec<f64>> = vec![v.to_vec(); cells + 1];
    let mut forcing_prev = vec![0.0; m];
    let mut forcing = vec![0.0; m];
    for _ in 1..=generations {
        let mut current = Vec::with_capacity(cells + 1);
        let mut acc = vec![0.0; m];
        current.push(acc.clone());
        a.matvec(&previous[0], &mut forcing_prev);
        for prev_n in previous.iter().skip(1) {
            a.matvec(prev_n, &mut forcing);
            for u in 0..m {
                acc[u] = decay * acc[u] + 0.5 * h * (decay * forcing_prev[u] + forcing[u]);
            }
            current.push(acc.clone());
            std::mem::swap(&mut forcing_prev, &mut forcing);
        }
        terms.push(current[cells].clone());
        previous = current;
    }
    Ok(terms)
}

/// `Σ_{k=0}^{K} G^{(⋆k)}(t) v`, the truncated generation series for `Ψ(t) v`.
pub fn psi_series_oracle(
    net: &HawkesNetwork,
    t: f64,
    v: &[f64],
    generations: usize,
    dt: f64,
) -> Result<Vec<f64>, PsiError> {
    let terms = series_terms(net, t, v, generations, dt)?;
    let mut out = vec![0.0; v.len()];
    for term in &terms {
        out.iter_mut().zip(term).for_each(|(o, x)| *o += x);
    }
    Ok(out)
}
