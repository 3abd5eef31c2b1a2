//! Activity shaping: choose `λ⁰ ≥ 0` with `cᵀλ⁰ ≤ C` to maximize a concave
//! utility of the expected intensity `μ = Ψ(t)(base + λ⁰)`, minus `γ·1ᵀλ⁰`.
//!
//! Gradients are ascent directions: `∇U = Ψᵀ ∇_μ U − γ1`, one forward and one
//! transposed `Ψ` product each. Smooth tasks (least squares, homogenization)
//! use projected gradient ascent with Barzilai-Borwein trial steps and Armijo
//! backtracking. Nonsmooth tasks (capped maximization, minimax) run the same
//! ascent on smoothed utilities (a Huber ramp inside `min(μ, α)`, a soft-min
//! for `min_u μ_u`), warm-starting as the smoothing width shrinks tenfold per
//! stage, and report the best iterate under the exact utility. Plain
//! subgradient steps `s₀ D / √k` along `g / ‖g‖₂`, with `D = C / min c`, are
//! available as [`StepPolicy::Diminishing`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{BudgetSpec, ExogenousIntensity, HawkesNetwork, ModelError, ShapingTask, TaskKind};
use crate::psi::{psi_apply, psi_transpose_apply, PsiError, PsiOptions};

/// Floor on `μ` inside the logarithm of the homogenization gradient.
pub const LOG_FLOOR: f64 = 1e-12;
/// Entries above this count as nonzero in reports.
pub const NONZERO_THRESHOLD: f64 = 1e-9;
/// Relative width of the minimax argmin set.
const ARGMIN_RTOL: f64 = 1e-12;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// Constant step along the raw gradient.
    Fixed(f64),
    /// Barzilai-Borwein trial steps with Armijo backtracking.
    Backtracking,
    /// `s₀ D / √k` along the normalized subgradient.
    Diminishing(f64),
    /// Backtracking on smoothed versions of a piecewise-linear utility, with
    /// the smoothing width shrinking tenfold per stage.
    Smoothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Relative objective change that, held over ten consecutive steps, ends a
    /// backtracking run. Diminishing steps stop when the best objective improves
    /// by less than this over `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    /// `None` selects backtracking for smooth tasks and smoothing otherwise.
    pub step: Option<StepPolicy>,
    /// Starting allocation; projected before use. Defaults to an even split.
    pub initial: Option<Vec<f64>>,
    /// Exogenous intensity already present; the solver allocates on top of it.
    pub base: Option<Vec<f64>>,
    pub psi: PsiOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-12,
            patience: 500,
            step: None,
            initial: None,
            base: None,
            psi: PsiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// Objective at every iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub budget_consumed: f64,
    pub nonzeros: usize,
    pub converged: bool,
}

/// Euclidean projection onto `{x ≥ 0, cᵀx ≤ C}`.
///
/// When clamping at zero leaves budget slack the clamp is the answer.
/// Otherwise `x_i = max(0, lam_i − τ c_i)` where `τ` solves `cᵀx(τ) = C`
/// exactly between consecutive sorted breakpoints `lam_i / c_i`.
pub fn project_feasible(lam: &[f64], c: &[f64], total: f64) -> Vec<f64> {
    assert_eq!(lam.len(), c.len(), "costs and allocation differ in length");
    let clamped: Vec<f64> = lam.iter().map(|x| x.max(0.0)).collect();
    let spent: f64 = clamped.iter().zip(c).map(|(x, c)| x * c).sum();
    if spent <= total {
        return clamped;
    }
    if total <= 0.0 {
        return vec![0.0; lam.len()];
    }
    let mut order: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > 0.0).collect();
    order.sort_by(|&i, &j| (lam[j] / c[j]).total_cmp(&(lam[i] / c[i])));
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut tau = 0.0;
    for (k, &i) in order.iter().enumerate() {
        s1 += c[i] * lam[i];
        s2 += c[i] * c[i];
        tau = (s1 - total) / s2;
        let next = order.get(k + 1).map_or(0.0, |&j| lam[j] / c[j]);
        if tau >= next {
            break;
        }
    }
    lam.iter().zip(c).map(|(x, c)| (x - tau * c).max(0.0)).collect()
}

fn validate(
    task: &ShapingTask,
    net: &HawkesNetwork,
    lam: &[f64],
    opts: &SolveOptions,
) -> Result<(), ShapeError> {
    let m = net.users();
    task.check_users(m)?;
    if lam.len() != m {
        return Err(ShapeError::InvalidInput(format!(
            "{} rates for {m} users",
            lam.len()
        )));
    }
    if let Some(b) = &opts.base {
        ExogenousIntensity::new(b.clone())?.check_users(m)?;
    }
    Ok(())
}

fn overall_input(lam: &[f64], base: Option<&[f64]>) -> Vec<f64> {
    match base {
        Some(b) => lam.iter().zip(b).map(|(x, b)| x + b).collect(),
        None => lam.to_vec(),
    }
}

/// Utility at `μ = Ψ(t)(base + lam)` minus `γ·1ᵀlam`, with an ascent
/// (super)gradient.
pub fn objective_and_gradient(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    lam: &[f64],
    opts: &SolveOptions,
) -> Result<(f64, Vec<f64>), ShapeError> {
    validate(task, net, lam, opts)?;
    let v = eval_unchecked(task, net, t, lam, opts.base.as_deref(), &opts.psi, None)?;
    Ok((v.exact, v.grad))
}

/// Objective value only.
pub fn objective(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    lam: &[f64],
    opts: &SolveOptions,
) -> Result<f64, ShapeError> {
    validate(task, net, lam, opts)?;
    let mu = psi_apply(net, t, &overall_input(lam, opts.base.as_deref()), &opts.psi)?;
    Ok(task.utility(&mu) - task.gamma() * lam.iter().sum::<f64>())
}

/// One evaluation. `surrogate` is the function being ascended: the objective
/// itself, or its smoothing of width `eps` for the piecewise-linear tasks.
struct Value {
    surrogate: f64,
    exact: f64,
    grad: Vec<f64>,
    mu_max: f64,
}

fn eval_unchecked(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    lam: &[f64],
    base: Option<&[f64]>,
    psi: &PsiOptions,
    smoothing: Option<f64>,
) -> Result<Value, ShapeError> {
    let mu = psi_apply(net, t, &overall_input(lam, base), psi)?;
    let utility = task.utility(&mu);
    let (surrogate, dmu): (f64, Vec<f64>) = match (task.kind(), smoothing) {
        (TaskKind::CappedMax { caps }, Some(eps)) => {
            // min(μ, α) = μ − relu(μ − α), with relu replaced by its Huber ramp.
            let mut u = 0.0;
            let mut d = Vec::with_capacity(mu.len());
            for (m, a) in mu.iter().zip(caps) {
                let x = m - a;
                let (h, dh) = if x <= 0.0 {
                    (0.0, 0.0)
                } else if x < eps {
                    (x * x / (2.0 * eps), x / eps)
                } else {
                    (x - eps / 2.0, 1.0)
                };
                u += m - h;
                d.push(1.0 - dh);
            }
            (u, d)
        }
        (TaskKind::CappedMax { caps }, None) => (
            utility,
            mu.iter()
                .zip(caps)
                .map(|(m, a)| if a > m { 1.0 } else { 0.0 })
                .collect(),
        ),
        (TaskKind::Minimax, Some(eps)) => {
            let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = mu.iter().map(|m| (-(m - lo) / eps).exp()).collect();
            let z: f64 = w.iter().sum();
            (lo - eps * z.ln(), w.iter().map(|w| w / z).collect())
        }
        (TaskKind::Minimax, None) => {
            let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
            let band = ARGMIN_RTOL * lo.abs().max(1.0);
            let hits = mu.iter().filter(|&&m| m - lo <= band).count() as f64;
            (
                utility,
                mu.iter()
                    .map(|&m| if m - lo <= band { 1.0 / hits } else { 0.0 })
                    .collect(),
            )
        }
        (TaskKind::LeastSquares { b, target }, _) => {
            let r: Vec<f64> = b.mul_vec(&mu).iter().zip(target).map(|(x, v)| x - v).collect();
            (
                utility,
                b.mul_vec_transpose(&r).iter().map(|x| -2.0 * x).collect(),
            )
        }
        (TaskKind::Homogenize, _) => (
            utility,
            mu.iter().map(|m| -(m.max(LOG_FLOOR).ln() + 1.0)).collect(),
        ),
    };
    let mut grad = psi_transpose_apply(net, t, &dmu, psi)?;
    let gamma = task.gamma();
    grad.iter_mut().for_each(|x| *x -= gamma);
    let penalty = gamma * lam.iter().sum::<f64>();
    Ok(Value {
        surrogate: surrogate - penalty,
        exact: utility - penalty,
        grad,
        mu_max: mu.iter().copied().fold(0.0, f64::max),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best exact objective seen, the trace, and the iteration count.
struct Tracker {
    best: f64,
    best_x: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
}

impl Tracker {
    fn new(x: &[f64], v: &Value) -> Self {
        Self {
            best: v.exact,
            best_x: x.to_vec(),
            trace: vec![v.exact],
            iterations: 0,
        }
    }

    fn record(&mut self, x: &[f64], v: &Value) {
        self.trace.push(v.exact);
        if v.exact > self.best {
            self.best = v.exact;
            self.best_x = x.to_vec();
        }
    }

    fn finish(self, converged: bool, budget: &BudgetSpec) -> SolveReport {
        SolveReport {
            budget_consumed: budget.spent(&self.best_x),
            nonzeros: self.best_x.iter().filter(|&&x| x > NONZERO_THRESHOLD).count(),
            lambda: self.best_x,
            objective: self.best,
            trace: self.trace,
            iterations: self.iterations,
            converged,
        }
    }
}

/// Consecutive steps within tolerance that end a backtracking run.
const QUIET_STEPS: usize = 10;

/// Number of smoothing widths, each a tenth of the previous.
const SMOOTHING_STAGES: usize = 10;

/// Projected gradient ascent for one shaping problem.
pub fn pgd_solve(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    budget: &BudgetSpec,
    opts: &SolveOptions,
) -> Result<SolveReport, ShapeError> {
    let m = net.users();
    if budget.costs().len() != m {
        return Err(
            ModelError::DimensionMismatch(format!("{} costs for {m} users", budget.costs().len())).into(),
        );
    }
    if !(opts.tol > 0.0) {
        return Err(ShapeError::InvalidInput("tolerance must be positive".into()));
    }
    let c = budget.costs();
    let total = budget.total();
    let start = match &opts.initial {
        Some(x) if x.len() == m => project_feasible(x, c, total),
        Some(x) => {
            return Err(ShapeError::InvalidInput(format!(
                "initial point has {} entries",
                x.len()
            )))
        }
        None => c.iter().map(|c| total / (m as f64 * c)).collect(),
    };
    validate(task, net, &start, opts)?;
    let base = opts.base.as_deref();
    let f = |x: &[f64], eps: Option<f64>| eval_unchecked(task, net, t, x, base, &opts.psi, eps);

    let policy = opts.step.unwrap_or(if task.is_smooth() {
        StepPolicy::Backtracking
    } else {
        StepPolicy::Smoothing
    });
    let v0 = f(&start, None)?;
    let mut tracker = Tracker::new(&start, &v0);
    if total <= 0.0 {
        return Ok(tracker.finish(true, budget));
    }
    let problem = Problem {
        c,
        total,
        diameter: total / c.iter().copied().fold(f64::INFINITY, f64::min),
        tol: opts.tol,
    };
    let converged = match policy {
        StepPolicy::Backtracking => {
            let exact = |x: &[f64]| f(x, None);
            ascend_backtracking(&exact, start, &problem, opts.max_iter, &mut tracker)?.1
        }
        StepPolicy::Smoothing => {
            let scale = match task.kind() {
                TaskKind::CappedMax { caps } => caps.iter().copied().fold(v0.mu_max, f64::max),
                _ => v0.mu_max,
            }
            .max(f64::MIN_POSITIVE);
            let per_stage = (opts.max_iter / SMOOTHING_STAGES).max(1);
            let mut x = start;
            let mut converged = false;
            for k in 0..SMOOTHING_STAGES {
                let eps = 0.1 * scale * 10f64.powi(-(k as i32));
                let smoothed = |x: &[f64]| f(x, Some(eps));
                let budget_left = opts.max_iter.saturating_sub(tracker.iterations).min(per_stage);
                let (nx, ok) = ascend_backtracking(&smoothed, x, &problem, budget_left, &mut tracker)?;
                x = nx;
                converged = ok;
            }
            converged
        }
        StepPolicy::Fixed(s) => ascend_fixed(&|x| f(x, None), start, &problem, s, opts, &mut tracker)?,
        StepPolicy::Diminishing(s0) => {
            ascend_diminishing(&|x| f(x, None), start, &problem, s0, opts, &mut tracker)?
        }
    };
    Ok(tracker.finish(converged, budget))
}

struct Problem<'a> {
    c: &'a [f64],
    total: f64,
    /// Largest single-user allocation `C / min c`.
    diameter: f64,
    tol: f64,
}

impl Problem<'_> {
    fn step(&self, x: &[f64], g: &[f64], s: f64) -> Vec<f64> {
        let trial: Vec<f64> = x.iter().zip(g).map(|(x, g)| x + s * g).collect();
        project_feasible(&trial, self.c, self.total)
    }
}

type Eval<'a> = dyn Fn(&[f64]) -> Result<Value, ShapeError> + 'a;

fn converged_rel(prev: f64, next: f64, tol: f64) -> bool {
    (next - prev).abs() <= tol * prev.abs().max(next.abs()).max(1.0)
}

/// Armijo backtracking on the surrogate with Barzilai-Borwein trial steps.
/// Returns the last iterate and whether the tolerance was met.
fn ascend_backtracking(
    f: &Eval<'_>,
    mut x: Vec<f64>,
    p: &Problem<'_>,
    max_iter: usize,
    tracker: &mut Tracker,
) -> Result<(Vec<f64>, bool), ShapeError> {
    let mut v = f(&x)?;
    let gnorm = dot(&v.grad, &v.grad).sqrt();
    let mut step = if gnorm > 0.0 { p.diameter / gnorm } else { 1.0 };
    let mut quiet = 0;
    for _ in 0..max_iter {
        tracker.iterations += 1;
        let mut s = step;
        let mut accepted = None;
        for _ in 0..60 {
            let nx = p.step(&x, &v.grad, s);
            let d: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
            let ascent = dot(&v.grad, &d);
            if ascent <= 0.0 {
                // Projected step is stationary.
                break;
            }
            let nv = f(&nx)?;
            if nv.surrogate >= v.surrogate + ARMIJO_C * ascent {
                accepted = Some((nx, nv, d));
                break;
            }
            s *= 0.5;
        }
        let Some((nx, nv, d)) = accepted else {
            return Ok((x, true));
        };
        let y: Vec<f64> = nv.grad.iter().zip(&v.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&d, &y);
        step = if sy < 0.0 { dot(&d, &d) / -sy } else { s * 2.0 };
        quiet = if converged_rel(v.surrogate, nv.surrogate, p.tol) {
            quiet + 1
        } else {
            0
        };
        tracker.record(&nx, &nv);
        x = nx;
        v = nv;
        if quiet >= QUIET_STEPS {
            return Ok((x, true));
        }
    }
    Ok((x, false))
}

fn ascend_fixed(
    f: &Eval<'_>,
    mut x: Vec<f64>,
    p: &Problem<'_>,
    s: f64,
    opts: &SolveOptions,
    tracker: &mut Tracker,
) -> Result<bool, ShapeError> {
    let mut v = f(&x)?;
    for _ in 0..opts.max_iter {
        tracker.iterations += 1;
        x = p.step(&x, &v.grad, s);
        let nv = f(&x)?;
        tracker.record(&x, &nv);
        let done = converged_rel(v.exact, nv.exact, opts.tol);
        v = nv;
        if done {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Subgradient steps `s₀ D / √k` along `g / ‖g‖₂`; stops when the best
/// objective improves by less than the tolerance over `patience` iterations.
fn ascend_diminishing(
    f: &Eval<'_>,
    mut x: Vec<f64>,
    p: &Problem<'_>,
    s0: f64,
    opts: &SolveOptions,
    tracker: &mut Tracker,
) -> Result<bool, ShapeError> {
    let mut g = f(&x)?.grad;
    let mut anchor = tracker.best;
    let mut since = 0;
    for k in 1..=opts.max_iter {
        tracker.iterations += 1;
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 {
            return Ok(true);
        }
        x = p.step(&x, &g, s0 * p.diameter / (k as f64).sqrt() / gnorm);
        let v = f(&x)?;
        tracker.record(&x, &v);
        g = v.grad;
        since += 1;
        if since >= opts.patience.max(1) {
            if converged_rel(anchor, tracker.best, opts.tol) {
                return Ok(true);
            }
            anchor = tracker.best;
            since = 0;
        }
    }
    Ok(false)
}

/// One row of a sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub outcome: Result<SolveReport, ShapeError>,
}

/// Solves the task once per `γ` (ascending). A failed row is recorded and the
/// sweep continues.
pub fn sparsity_sweep(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    budget: &BudgetSpec,
    gammas: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<SweepRow>, ShapeError> {
    if gammas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(ShapeError::InvalidInput("gamma list must be ascending".into()));
    }
    Ok(gammas
        .iter()
        .map(|&gamma| SweepRow {
            gamma,
            outcome: task
                .with_gamma(gamma)
                .map_err(ShapeError::from)
                .and_then(|task| pgd_solve(&task, net, t, budget, opts)),
        })
        .collect())
}

/// Caps for capped maximization: `α_u = (Ψ(t) λ̂⁰)_u + U[0, 2·mean(λ̂⁰)]`.
pub fn random_caps(
    net: &HawkesNetwork,
    t: f64,
    lambda0: &[f64],
    seed: u64,
    psi: &PsiOptions,
) -> Result<Vec<f64>, ShapeError> {
    let mu = psi_apply(net, t, lambda0, psi)?;
    let spread = 2.0 * lambda0.iter().sum::<f64>() / lambda0.len().max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(mu
        .iter()
        .map(|m| {
            m + if spread > 0.0 {
                rng.gen_range(0.0..spread)
            } else {
                0.0
            }
        })
        .collect())
}
