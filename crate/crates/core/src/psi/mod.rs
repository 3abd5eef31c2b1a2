//! Matrix-free evaluation of the exogenous-to-overall intensity map
//!
//! ```text
//! Ψ(t) v = e^{(A-ωI)t} v + ω (A-ωI)^{-1} (e^{(A-ωI)t} v - v)
//! ```
//!
//! `Ψ(t)` is never formed. The exponential action uses scaled Taylor steps
//! ([`expm_action`]) and the shifted solve uses restarted GMRES
//! ([`gmres_solve`]). When `ρ(A/ω) < 1` every eigenvalue of `A - ωI` has
//! negative real part, so the shift is invertible. Otherwise, or when GMRES
//! stalls, the equivalent form `Ψ(t) v = v + A ∫₀ᵗ e^{(A-ωI)s} v ds` is used,
//! with the integral obtained from the exponential of an augmented operator.
//!
//! [`psi_dense`] and [`psi_series_oracle`] are independent reference routes for
//! small networks.

mod expm;
mod gmres;
mod oracle;
mod spectral;

pub use expm::expm_action;
pub use gmres::{gmres_solve, GmresOptions, GmresOutcome};
pub use oracle::{psi_dense, psi_series_oracle, series_terms, DENSE_CAP};
pub use spectral::{compute_spectral_radius, spectral_radius, SpectralRadius};

use thiserror::Error;

use crate::model::HawkesNetwork;
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsiError {
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("Taylor series did not reach tolerance within {terms} terms")]
    ToleranceNotReached { terms: usize },
    #[error("GMRES did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("GMRES breakdown at iteration {iteration} with relative residual {residual:e}")]
    Breakdown { iteration: usize, residual: f64 },
    #[error("A - omega*I is singular")]
    SingularShift,
    #[error("dense path limited to {cap} users, got {m}")]
    TooLarge { m: usize, cap: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("network is not stationary: spectral radius of A/omega is {rho}")]
    NotStationary { rho: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A square linear map `y = M x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Upper bound on `‖M‖₁`; sizes the Taylor substeps.
    fn norm1_bound(&self) -> f64;
}

/// `A - ωI` (or its transpose) without materializing the shift.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedOperator<'a> {
    net: &'a HawkesNetwork,
    transposed: bool,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(net: &'a HawkesNetwork, transposed: bool) -> Self {
        Self { net, transposed }
    }

    fn influence_apply(&self, x: &[f64], y: &mut [f64]) {
        if self.transposed {
            self.net.influence().matvec_transpose(x, y);
        } else {
            self.net.influence().matvec(x, y);
        }
    }
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.net.users()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.influence_apply(x, y);
        let w = self.net.omega();
        y.iter_mut().zip(x).for_each(|(y, x)| *y -= w * x);
    }

    fn norm1_bound(&self) -> f64 {
        let a = self.net.influence();
        let w = self.net.omega();
        let col_sum = |j: usize| -> f64 {
            let entries: Box<dyn Iterator<Item = (usize, f64)>> = if self.transposed {
                Box::new(a.row(j))
            } else {
                Box::new(a.col(j))
            };
            let mut diag = -w;
            let mut off = 0.0;
            for (i, v) in entries {
                if i == j {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            off + diag.abs()
        };
        (0..a.nrows()).map(col_sum).fold(0.0, f64::max)
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }

    fn norm1_bound(&self) -> f64 {
        self.norm1()
    }
}

/// Small dense operator, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub Vec<Vec<f64>>);

impl DenseOperator {
    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect())
                .collect(),
        )
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.0) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn norm1_bound(&self) -> f64 {
        let n = self.0.len();
        (0..n)
            .map(|j| self.0.iter().map(|r| r[j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `[[M, v], [0, 0]]`: its exponential carries `∫₀ᵗ e^{Ms} v ds` in the last column.
struct AugmentedOperator<'a, Op: LinearOperator> {
    inner: &'a Op,
    column: Vec<f64>,
}

impl<Op: LinearOperator> LinearOperator for AugmentedOperator<'_, Op> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.inner.dim();
        self.inner.apply(&x[..n], &mut y[..n]);
        let s = x[n];
        y[..n].iter_mut().zip(&self.column).for_each(|(y, c)| *y += c * s);
        y[n] = 0.0;
    }

    fn norm1_bound(&self) -> f64 {
        let col: f64 = self.column.iter().map(|c| c.abs()).sum();
        self.inner.norm1_bound().max(col)
    }
}

/// `∫₀ᵗ e^{Ms} v ds` via one exponential action of dimension `n + 1`.
pub(crate) fn integrated_expm_action<Op: LinearOperator>(
    op: &Op,
    t: f64,
    v: &[f64],
    tol: f64,
) -> Result<Vec<f64>, PsiError> {
    let n = op.dim();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || t == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let aug = AugmentedOperator {
        inner: op,
        column: v.iter().map(|x| x / scale).collect(),
    };
    let mut e = vec![0.0; n + 1];
    e[n] = 1.0;
    let out = expm_action(&aug, t, &e, tol)?;
    Ok(out[..n].iter().map(|x| x * scale).collect())
}

/// Numerical settings for Ψ products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiOptions {
    pub expm_tol: f64,
    pub gmres_tol: f64,
    pub restart: usize,
    /// Total GMRES iterations; `None` means `10·m`.
    pub max_iter: Option<usize>,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self {
            expm_tol: 1e-10,
            gmres_tol: 1e-10,
            restart: 30,
            max_iter: None,
        }
    }
}

impl PsiOptions {
    fn gmres(&self, m: usize) -> GmresOptions {
        GmresOptions {
            tol: self.gmres_tol,
            restart: self.restart,
            max_iter: self.max_iter.unwrap_or(10 * m),
        }
    }
}

fn check_input(net: &HawkesNetwork, t: f64, v: &[f64]) -> Result<(), PsiError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(PsiError::InvalidArgument(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    if v.len() != net.users() {
        return Err(PsiError::InvalidArgument(format!(
            "vector has {} entries for {} users",
            v.len(),
            net.users()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::NonFinite("input vector"));
    }
    Ok(())
}

fn psi_product(
    net: &HawkesNetwork,
    transposed: bool,
    t: f64,
    v: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<f64>, PsiError> {
    check_input(net, t, v)?;
    if t == 0.0 {
        return Ok(v.to_vec());
    }
    let rho = net.spectral_radius();
    if !rho.converged || rho.value >= 1.0 - 1e-9 {
        return integrated_form(net, transposed, t, v, opts);
    }
    let op = ShiftedOperator::new(net, transposed);
    let e = expm_action(&op, t, v, opts.expm_tol)?;
    let rhs: Vec<f64> = e.iter().zip(v).map(|(a, b)| a - b).collect();
    let omega = net.omega();
    let out = match gmres_solve(&op, &rhs, &opts.gmres(net.users())) {
        Ok(sol) => e
            .iter()
            .zip(&sol.x)
            .map(|(e, x)| e + omega * x)
            .collect::<Vec<_>>(),
        Err(err @ (PsiError::NoConvergence { .. } | PsiError::Breakdown { .. })) => {
            log::debug!("shifted solve stalled ({err}); using integrated form");
            integrated_form(net, transposed, t, v, opts)?
        }
        Err(e) => return Err(e),
    };
    if out.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::NonFinite("result"));
    }
    Ok(out)
}

/// `Ψ(t) v = v + A w` with `w = ∫₀ᵗ e^{(A-ωI)s} v ds`; valid whether or not
/// `A - ωI` is invertible.
fn integrated_form(
    net: &HawkesNetwork,
    transposed: bool,
    t: f64,
    v: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<f64>, PsiError> {
    let op = ShiftedOperator::new(net, transposed);
    let w = integrated_expm_action(&op, t, v, opts.expm_tol)?;
    let mut aw = vec![0.0; v.len()];
    op.influence_apply(&w, &mut aw);
    let out: Vec<f64> = v.iter().zip(&aw).map(|(v, a)| v + a).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(PsiError::NonFinite("result"));
    }
    Ok(out)
}

/// `Ψ(t) v`.
pub fn psi_apply(net: &HawkesNetwork, t: f64, v: &[f64], opts: &PsiOptions) -> Result<Vec<f64>, PsiError> {
    psi_product(net, false, t, v, opts)
}

/// `Ψ(t)ᵀ v`: the same formula in `Aᵀ`, since `e^{Mt}` and `M⁻¹` commute.
pub fn psi_transpose_apply(
    net: &HawkesNetwork,
    t: f64,
    v: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<f64>, PsiError> {
    psi_product(net, true, t, v, opts)
}

/// `Ψ(t) v` through the integrated form only, bypassing GMRES.
pub fn psi_apply_integrated(
    net: &HawkesNetwork,
    t: f64,
    v: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<f64>, PsiError> {
    check_input(net, t, v)?;
    if t == 0.0 {
        return Ok(v.to_vec());
    }
    integrated_form(net, false, t, v, opts)
}

/// `I - A/ω`.
struct StationaryOperator<'a>(&'a HawkesNetwork);

impl LinearOperator for StationaryOperator<'_> {
    fn dim(&self) -> usize {
        self.0.users()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.influence().matvec(x, y);
        let w = self.0.omega();
        y.iter_mut().zip(x).for_each(|(y, x)| *y = x - *y / w);
    }

    fn norm1_bound(&self) -> f64 {
        1.0 + self.0.influence().norm1() / self.0.omega()
    }
}

/// Long-run intensity `(I - A/ω)⁻¹ λ⁰`; requires `ρ(A/ω) < 1`.
pub fn stationary_intensity(
    net: &HawkesNetwork,
    lambda0: &[f64],
    opts: &PsiOptions,
) -> Result<Vec<f64>, PsiError> {
    check_input(net, 0.0, lambda0)?;
    let rho = spectral_radius(net);
    if rho.value >= 1.0 {
        return Err(PsiError::NotStationary { rho: rho.value });
    }
    let sol = gmres_solve(&StationaryOperator(net), lambda0, &opts.gmres(net.users()))?;
    Ok(sol.x)
}
