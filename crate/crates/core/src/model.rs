//! Core domain types: the network, exogenous rates, event logs, budgets,
//! shaping tasks and intensity curves.
//!
//! Every type validates its invariants at construction and is immutable
//! afterwards. Time units are abstract; the CLI documents them as minutes.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psi::{compute_spectral_radius, SpectralRadius};
use crate::sparse::{SparseError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative influence entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("kernel decay omega must be positive and finite, got {0}")]
    NonpositiveOmega(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("duplicate influence entry at ({0}, {1})")]
    DuplicateEntry(usize, usize),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid event log: {0}")]
    InvalidEvents(String),
}

impl From<SparseError> for ModelError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::OutOfBounds { .. } => ModelError::DimensionMismatch(e.to_string()),
            SparseError::Duplicate { row, col } => ModelError::DuplicateEntry(row, col),
            SparseError::NonFinite { row, col } => {
                ModelError::InvalidValue(format!("non-finite entry at ({row}, {col})"))
            }
        }
    }
}

/// Multivariate Hawkes network with exponential kernel `A e^{-ωt}`.
///
/// `a[u][v]` is the jump in user `u`'s intensity after an event by `v`.
#[derive(Debug, Clone)]
pub struct HawkesNetwork {
    influence: SparseMatrix,
    omega: f64,
    rho: OnceLock<SpectralRadius>,
}

impl PartialEq for HawkesNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.omega == other.omega && self.influence == other.influence
    }
}

/// Checks the network invariants on raw parts, reporting the first violation.
pub fn validate_network(m: usize, entries: &[(usize, usize, f64)], omega: f64) -> Result<(), ModelError> {
    if m == 0 {
        return Err(ModelError::DimensionMismatch(
            "user count must be positive".into(),
        ));
    }
    for &(r, c, v) in entries {
        if r >= m || c >= m {
            return Err(ModelError::DimensionMismatch(format!(
                "entry ({r}, {c}) outside {m}x{m}"
            )));
        }
        if !v.is_finite() {
            return Err(ModelError::InvalidValue(format!(
                "non-finite entry at ({r}, {c})"
            )));
        }
        if v < 0.0 {
            return Err(ModelError::NegativeEntry(r, c));
        }
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(ModelError::NonpositiveOmega(omega));
    }
    Ok(())
}

impl HawkesNetwork {
    pub fn new(m: usize, entries: &[(usize, usize, f64)], omega: f64) -> Result<Self, ModelError> {
        validate_network(m, entries, omega)?;
        Ok(Self {
            influence: SparseMatrix::from_triplets(m, m, entries)?,
            omega,
            rho: OnceLock::new(),
        })
    }

    pub fn from_matrix(influence: SparseMatrix, omega: f64) -> Result<Self, ModelError> {
        if influence.nrows() != influence.ncols() {
            return Err(ModelError::DimensionMismatch(format!(
                "influence matrix is {}x{}",
                influence.nrows(),
                influence.ncols()
            )));
        }
        let entries: Vec<_> = influence.triplets().collect();
        validate_network(influence.nrows(), &entries, omega)?;
        Ok(Self {
            influence,
            omega,
            rho: OnceLock::new(),
        })
    }

    pub fn users(&self) -> usize {
        self.influence.nrows()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn influence(&self) -> &SparseMatrix {
        &self.influence
    }

    /// `ρ(A/ω)`, computed on first use and cached.
    pub fn spectral_radius(&self) -> SpectralRadius {
        *self.rho.get_or_init(|| compute_spectral_radius(self))
    }

    /// Branching matrix `Γ = A / ω`.
    pub fn branching_matrix(&self) -> SparseMatrix {
        self.influence.scaled(1.0 / self.omega)
    }

    /// Kernel matrix `G(t) = A e^{-ωt}` applied to `v`.
    pub fn kernel_apply(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let decay = (-self.omega * t).exp();
        let mut y = self.influence.mul_vec(v);
        y.iter_mut().for_each(|x| *x *= decay);
        y
    }

    /// Copy with `A` multiplied by `factor`.
    pub fn with_scaled_influence(&self, factor: f64) -> Result<Self, ModelError> {
        Self::from_matrix(self.influence.scaled(factor), self.omega)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self, ModelError> {
        Self::from_matrix(self.influence.clone(), omega)
    }
}

/// Per-user constant exogenous rate `λ⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExogenousIntensity(Vec<f64>);

impl ExogenousIntensity {
    pub fn new(rates: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((u, &r)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r >= 0.0))
        {
            return Err(ModelError::InvalidValue(format!(
                "exogenous rate for user {u} must be finite and nonnegative, got {r}"
            )));
        }
        Ok(Self(rates))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn check_users(&self, m: usize) -> Result<(), ModelError> {
        if self.0.len() != m {
            return Err(ModelError::DimensionMismatch(format!(
                "exogenous intensity has {} entries for {m} users",
                self.0.len()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ExogenousIntensity {
    type Error = ModelError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ExogenousIntensity> for Vec<f64> {
    fn from(x: ExogenousIntensity) -> Self {
        x.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub user: usize,
    pub time: f64,
    /// Branching generation; `None` for unlabeled (observed) data.
    pub generation: Option<u32>,
    /// Index of the triggering event within the same cascade.
    pub parent: Option<usize>,
}

impl Event {
    pub fn unlabeled(user: usize, time: f64) -> Self {
        Self {
            user,
            time,
            generation: None,
            parent: None,
        }
    }
}

/// One realization of the process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    horizon: f64,
    events: Vec<Event>,
}

impl Cascade {
    /// Validates ordering, time range, user ids and generation labels.
    pub fn new(horizon: f64, events: Vec<Event>, users: usize) -> Result<Self, ModelError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::InvalidEvents(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        for (i, e) in events.iter().enumerate() {
            if e.user >= users {
                return Err(ModelError::InvalidEvents(format!(
                    "event {i}: user {} out of range for {users} users",
                    e.user
                )));
            }
            if !(e.time >= 0.0 && e.time <= horizon) {
                return Err(ModelError::InvalidEvents(format!(
                    "event {i}: time {} outside [0, {horizon}]",
                    e.time
                )));
            }
            if i > 0 && events[i - 1].time > e.time {
                return Err(ModelError::InvalidEvents(format!("event {i}: times not sorted")));
            }
            match (e.generation, e.parent) {
                (None, None) | (Some(0), None) => {}
                (Some(g), Some(p)) if g > 0 => {
                    if p >= i {
                        return Err(ModelError::InvalidEvents(format!(
                            "event {i}: parent {p} does not precede it"
                        )));
                    }
                    if events[p].generation != Some(g - 1) {
                        return Err(ModelError::InvalidEvents(format!(
                            "event {i}: generation {g} but parent generation {:?}",
                            events[p].generation
                        )));
                    }
                }
                _ => {
                    return Err(ModelError::InvalidEvents(format!(
                        "event {i}: generation 0 iff no parent"
                    )))
                }
            }
        }
        Ok(Self { horizon, events })
    }

    pub fn empty(horizon: f64) -> Self {
        Self {
            horizon,
            events: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.events.iter().all(|e| e.generation.is_some())
    }

    pub(crate) fn from_parts_unchecked(horizon: f64, events: Vec<Event>) -> Self {
        Self { horizon, events }
    }
}

/// A collection of independent cascades over the same user set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub cascades: Vec<Cascade>,
}

impl EventLog {
    pub fn new(cascades: Vec<Cascade>) -> Self {
        Self { cascades }
    }

    pub fn total_events(&self) -> usize {
        self.cascades.iter().map(Cascade::len).sum()
    }

    pub fn total_time(&self) -> f64 {
        self.cascades.iter().map(Cascade::horizon).sum()
    }

    pub fn counts_per_user(&self, m: usize) -> Vec<usize> {
        let mut n = vec![0; m];
        for e in self.cascades.iter().flat_map(|c| c.events()) {
            n[e.user] += 1;
        }
        n
    }
}

/// Per-unit cost vector `c` and total budget `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSpec {
    costs: Vec<f64>,
    total: f64,
}

impl BudgetSpec {
    /// Costs must be positive. The total may be zero, which pins the
    /// allocation at the origin.
    pub fn new(costs: Vec<f64>, total: f64) -> Result<Self, ModelError> {
        if costs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(ModelError::InvalidValue(
                "costs must be positive and finite".into(),
            ));
        }
        if !(total >= 0.0 && total.is_finite()) {
            return Err(ModelError::InvalidValue(format!(
                "budget must be finite and nonnegative, got {total}"
            )));
        }
        Ok(Self { costs, total })
    }

    pub fn uniform(m: usize, total: f64) -> Result<Self, ModelError> {
        Self::new(vec![1.0; m], total)
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `cᵀx`.
    pub fn spent(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Same feasible set with costs and total multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(
            self.costs.iter().map(|c| c * factor).collect(),
            self.total * factor,
        )
    }
}

/// The utility being shaped.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// Capped activity maximization: `Σ min(μ_u, α_u)`.
    CappedMax { caps: Vec<f64> },
    /// Minimax shaping: `min_u μ_u`.
    Minimax,
    /// Least-squares shaping: `-‖Bμ - v‖²`.
    LeastSquares { b: SparseMatrix, target: Vec<f64> },
    /// Homogenization: `-Σ μ_u ln μ_u`.
    Homogenize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingTask {
    kind: TaskKind,
    gamma: f64,
}

impl ShapingTask {
    pub fn new(kind: TaskKind, gamma: f64) -> Result<Self, ModelError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(ModelError::InvalidValue(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
        match &kind {
            TaskKind::CappedMax { caps } => {
                if caps.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                    return Err(ModelError::InvalidValue("caps must be finite and >= 0".into()));
                }
            }
            TaskKind::LeastSquares { b, target } => {
                if b.nrows() != target.len() {
                    return Err(ModelError::DimensionMismatch(format!(
                        "B has {} rows but target has {} entries",
                        b.nrows(),
                        target.len()
                    )));
                }
                if target.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::InvalidValue("target must be finite".into()));
                }
            }
            TaskKind::Minimax | TaskKind::Homogenize => {}
        }
        Ok(Self { kind, gamma })
    }

    pub fn capped(caps: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(TaskKind::CappedMax { caps }, 0.0)
    }

    pub fn minimax() -> Self {
        Self {
            kind: TaskKind::Minimax,
            gamma: 0.0,
        }
    }

    /// Least squares against `target` with `B = I`.
    pub fn least_squares(target: Vec<f64>) -> Result<Self, ModelError> {
        let b = SparseMatrix::identity(target.len());
        Self::new(TaskKind::LeastSquares { b, target }, 0.0)
    }

    pub fn homogenize() -> Self {
        Self {
            kind: TaskKind::Homogenize,
            gamma: 0.0,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ModelError> {
        Self::new(self.kind.clone(), gamma)
    }

    pub fn kind(&self) -> &TaskKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TaskKind::CappedMax { .. } => "cam",
            TaskKind::Minimax => "mmash",
            TaskKind::LeastSquares { .. } => "lsash",
            TaskKind::Homogenize => "hom",
        }
    }

    /// Checks the task against a user count.
    pub fn check_users(&self, m: usize) -> Result<(), ModelError> {
        match &self.kind {
            TaskKind::CappedMax { caps } if caps.len() != m => Err(ModelError::DimensionMismatch(format!(
                "{} caps for {m} users",
                caps.len()
            ))),
            TaskKind::LeastSquares { b, .. } if b.ncols() != m => Err(ModelError::DimensionMismatch(
                format!("B has {} columns for {m} users", b.ncols()),
            )),
            _ => Ok(()),
        }
    }

    /// Whether the utility is differentiable (least squares, homogenization).
    pub fn is_smooth(&self) -> bool {
        matches!(self.kind, TaskKind::LeastSquares { .. } | TaskKind::Homogenize)
    }

    /// Task utility at the overall intensity `mu`, without the sparsity penalty.
    pub fn utility(&self, mu: &[f64]) -> f64 {
        match &self.kind {
            TaskKind::CappedMax { caps } => mu.iter().zip(caps).map(|(m, a)| m.min(*a)).sum(),
            TaskKind::Minimax => mu.iter().copied().fold(f64::INFINITY, f64::min),
            TaskKind::LeastSquares { b, target } => {
                let bm = b.mul_vec(mu);
                -bm.iter().zip(target).map(|(x, v)| (x - v).powi(2)).sum::<f64>()
            }
            TaskKind::Homogenize => -mu
                .iter()
                .map(|&m| if m > 0.0 { m * m.ln() } else { 0.0 })
                .sum::<f64>(),
        }
    }
}

/// Piecewise-constant per-user rates over contiguous windows `[jw, (j+1)w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityCurve {
    window: f64,
    /// `values[j][u]`: rate of user `u` in window `j`.
    values: Vec<Vec<f64>>,
}

impl IntensityCurve {
    pub fn new(window: f64, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(ModelError::InvalidValue(format!(
                "window must be positive, got {window}"
            )));
        }
        if values.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(ModelError::InvalidValue("intensity values must be >= 0".into()));
        }
        if let Some(w) = values.first() {
            if values.iter().any(|r| r.len() != w.len()) {
                return Err(ModelError::DimensionMismatch("ragged intensity curve".into()));
            }
        }
        Ok(Self { window, values })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn windows(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn at_window(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.window
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.values.last().map(Vec::as_slice)
    }
}
