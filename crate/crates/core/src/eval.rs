//! Baseline allocators and the three evaluation schemes: theoretical
//! objective, simulated objective, and held-out rank correlation.
//!
//! Baselines return an increment `Δλ⁰` on top of a base exogenous intensity.
//! Proportional baselines spend the whole budget; the greedy ones may stop
//! early. Rankings break ties by user or interval index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimate::{fit_exogenous, fit_mle, EstimateError, FitOptions, Support};
use crate::model::{BudgetSpec, EventLog, ExogenousIntensity, HawkesNetwork, ModelError, ShapingTask};
use crate::psi::{psi_apply, PsiError, PsiOptions};
use crate::shape::{objective, pgd_solve, ShapeError, SolveOptions};
use crate::simulate::{empirical_intensity, simulate_cascades, SimError, SimulationOptions};

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOL: f64 = 1e-10;
const PAGERANK_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("baseline {0} needs a target vector")]
    MissingTarget(BaselineKind),
    #[error("unknown baseline {0:?}")]
    InvalidKind(String),
    #[error("rankings have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Top half of users by current activity, proportional to it.
    Xmu,
    /// Proportional to total outgoing influence.
    Wei,
    /// Proportional to out-degree.
    Deg,
    /// Proportional to weighted PageRank.
    Prk,
    Uni,
    /// Bottom half of users by current activity, evenly.
    Minmu,
    /// Repeated quanta to the least active user.
    Grd,
    /// Proportional to the target.
    Prop,
    /// Repeated quanta to the largest target gap.
    Lsgrd,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 9] = [
        BaselineKind::Xmu,
        BaselineKind::Wei,
        BaselineKind::Deg,
        BaselineKind::Prk,
        BaselineKind::Uni,
        BaselineKind::Minmu,
        BaselineKind::Grd,
        BaselineKind::Prop,
        BaselineKind::Lsgrd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Xmu => "XMU",
            BaselineKind::Wei => "WEI",
            BaselineKind::Deg => "DEG",
            BaselineKind::Prk => "PRK",
            BaselineKind::Uni => "UNI",
            BaselineKind::Minmu => "MINMU",
            BaselineKind::Grd => "GRD",
            BaselineKind::Prop => "PROP",
            BaselineKind::Lsgrd => "LSGRD",
        }
    }

    pub fn needs_target(self) -> bool {
        matches!(self, BaselineKind::Prop | BaselineKind::Lsgrd)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::InvalidKind(s.to_string()))
    }
}

/// Indices sorted by `values`, ascending or descending, ties by index.
pub fn ordering_by(values: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        let o = values[i].total_cmp(&values[j]);
        if descending { o.reverse() } else { o }.then(i.cmp(&j))
    });
    idx
}

fn half(m: usize) -> usize {
    (m / 2).max(1)
}

/// Spends the whole budget in proportion to `weights`; an all-zero weight
/// vector falls back to an even split.
fn proportional(weights: &[f64], budget: &BudgetSpec) -> Vec<f64> {
    let c = budget.costs();
    let denom: f64 = weights.iter().zip(c).map(|(w, c)| w * c).sum();
    if !(denom > 0.0) {
        return even(&vec![true; weights.len()], budget);
    }
    let s = budget.total() / denom;
    weights.iter().map(|w| w * s).collect()
}

/// Equal budget share for each selected user.
fn even(selected: &[bool], budget: &BudgetSpec) -> Vec<f64> {
    let k = selected.iter().filter(|&&s| s).count().max(1) as f64;
    selected
        .iter()
        .zip(budget.costs())
        .map(|(&s, c)| if s { budget.total() / (k * c) } else { 0.0 })
        .collect()
}

fn column_weights(net: &HawkesNetwork, count: bool) -> Vec<f64> {
    let mut w = vec![0.0; net.users()];
    for (r, c, v) in net.influence().triplets() {
        if count {
            if r != c && v > 0.0 {
                w[c] += 1.0;
            }
        } else {
            w[c] += v;
        }
    }
    w
}

/// PageRank where user `u` links to `u'` with weight `a_{u u'}`; rows without
/// links spread uniformly.
pub fn pagerank(net: &HawkesNetwork) -> Vec<f64> {
    let m = net.users();
    let a = net.influence();
    let row_sums: Vec<f64> = (0..m).map(|u| a.row(u).map(|(_, v)| v).sum()).collect();
    let mut p = vec![1.0 / m as f64; m];
    for _ in 0..PAGERANK_MAX_ITER {
        let dangling: f64 = (0..m).filter(|&u| row_sums[u] <= 0.0).map(|u| p[u]).sum();
        let floor = (1.0 - PAGERANK_DAMPING) / m as f64 + PAGERANK_DAMPING * dangling / m as f64;
        let mut next = vec![floor; m];
        for u in (0..m).filter(|&u| row_sums[u] > 0.0) {
            let share = PAGERANK_DAMPING * p[u] / row_sums[u];
            for (v, w) in a.row(u) {
                next[v] += share * w;
            }
        }
        let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if diff <= PAGERANK_TOL {
            break;
        }
    }
    p
}

/// Columns `Ψ(t) e_u`, computed on first use.
struct ColumnCache<'a> {
    net: &'a HawkesNetwork,
    t: f64,
    psi: &'a PsiOptions,
    cols: Vec<Option<Vec<f64>>>,
}

impl<'a> ColumnCache<'a> {
    fn new(net: &'a HawkesNetwork, t: f64, psi: &'a PsiOptions) -> Self {
        Self {
            net,
            t,
            psi,
            cols: vec![None; net.users()],
        }
    }

    fn get(&mut self, u: usize) -> Result<&[f64], PsiError> {
        if self.cols[u].is_none() {
            let mut e = vec![0.0; self.net.users()];
            e[u] = 1.0;
            self.cols[u] = Some(psi_apply(self.net, self.t, &e, self.psi)?);
        }
        Ok(self.cols[u].as_deref().expect("column cached"))
    }
}

/// Quantum-by-quantum allocation: `pick(μ)` names the next user or stops.
fn greedy<F>(
    net: &HawkesNetwork,
    t: f64,
    budget: &BudgetSpec,
    mu: Vec<f64>,
    psi: &PsiOptions,
    mut pick: F,
) -> Result<Vec<f64>, PsiError>
where
    F: FnMut(&[f64], &[bool]) -> Option<usize>,
{
    let m = net.users();
    let mut delta = vec![0.0; m];
    let total = budget.total();
    let quantum = total / (10 * m) as f64;
    if !(quantum > 0.0) {
        return Ok(delta);
    }
    let mut mu = mu;
    let mut touched = vec![false; m];
    let mut cache = ColumnCache::new(net, t, psi);
    let mut spent = 0.0;
    for k in 1..=10 * m {
        let Some(u) = pick(&mu, &touched) else { break };
        touched[u] = true;
        let amount = quantum / budget.costs()[u];
        delta[u] += amount;
        let col = cache.get(u)?;
        mu.iter_mut().zip(col).for_each(|(m, c)| *m += amount * c);
        spent = quantum * k as f64;
        if spent >= total {
            break;
        }
    }
    debug_assert!(spent <= total * (1.0 + 1e-12));
    Ok(delta)
}

/// Budget increment chosen by a heuristic. `base_lambda0` is the exogenous
/// intensity already present, so `μ(t) = Ψ(t)(base + Δ)`.
pub fn baseline_allocate(
    kind: BaselineKind,
    net: &HawkesNetwork,
    t: f64,
    budget: &BudgetSpec,
    base_lambda0: &[f64],
    target: Option<&[f64]>,
    psi: &PsiOptions,
) -> Result<ExogenousIntensity, EvalError> {
    let m = net.users();
    if budget.costs().len() != m || base_lambda0.len() != m {
        return Err(EvalError::InvalidInput(format!(
            "{m} users but {} costs and {} base rates",
            budget.costs().len(),
            base_lambda0.len()
        )));
    }
    let target = match (kind.needs_target(), target) {
        (true, None) => return Err(EvalError::MissingTarget(kind)),
        (true, Some(v)) if v.len() != m => {
            return Err(EvalError::InvalidInput(format!(
                "target has {} entries for {m} users",
                v.len()
            )))
        }
        (_, v) => v,
    };
    let current = || psi_apply(net, t, base_lambda0, psi);
    let delta = match kind {
        BaselineKind::Uni => even(&vec![true; m], budget),
        BaselineKind::Deg => proportional(&column_weights(net, true), budget),
        BaselineKind::Wei => proportional(&column_weights(net, false), budget),
        BaselineKind::Prk => proportional(&pagerank(net), budget),
        BaselineKind::Prop => {
            let w: Vec<f64> = target.expect("checked").iter().map(|v| v.max(0.0)).collect();
            proportional(&w, budget)
        }
        BaselineKind::Xmu => {
            let mu = current()?;
            let mut w = vec![0.0; m];
            for &u in ordering_by(&mu, true).iter().take(half(m)) {
                w[u] = mu[u];
            }
            if w.iter().all(|&x| x <= 0.0) {
                let mut sel = vec![false; m];
                ordering_by(&mu, true)
                    .iter()
                    .take(half(m))
                    .for_each(|&u| sel[u] = true);
                even(&sel, budget)
            } else {
                proportional(&w, budget)
            }
        }
        BaselineKind::Minmu => {
            let mu = current()?;
            let mut sel = vec![false; m];
            ordering_by(&mu, false)
                .iter()
                .take(half(m))
                .for_each(|&u| sel[u] = true);
            even(&sel, budget)
        }
        BaselineKind::Grd => {
            let cap = half(m);
            greedy(net, t, budget, current()?, psi, |mu, touched| {
                let u = ordering_by(mu, false)[0];
                let used = touched.iter().filter(|&&x| x).count();
                (touched[u] || used < cap).then_some(u)
            })?
        }
        BaselineKind::Lsgrd => {
            let v = target.expect("checked");
            greedy(net, t, budget, current()?, psi, |mu, _| {
                let gaps: Vec<f64> = v.iter().zip(mu).map(|(v, m)| v - m).collect();
                let u = ordering_by(&gaps, true)[0];
                (gaps[u] > 0.0).then_some(u)
            })?
        }
    };
    Ok(ExogenousIntensity::new(delta)?)
}

/// Task utility (without the sparsity penalty) at `μ = Ψ(t) lam`.
pub fn evaluate_theoretical(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    lam: &[f64],
    psi: &PsiOptions,
) -> Result<f64, EvalError> {
    let opts = SolveOptions {
        psi: *psi,
        ..SolveOptions::default()
    };
    Ok(objective(&task.with_gamma(0.0)?, net, t, lam, &opts)?)
}

/// Task utility at the mean empirical intensity of the last full window over
/// `runs` simulated cascades on `[0, t]`.
pub fn evaluate_simulated(
    task: &ShapingTask,
    net: &HawkesNetwork,
    t: f64,
    lam: &[f64],
    runs: usize,
    window: f64,
    seed: u64,
) -> Result<f64, EvalError> {
    if runs == 0 {
        return Err(EvalError::InvalidInput("at least one run is required".into()));
    }
    task.check_users(net.users())?;
    let log = simulate_cascades(net, lam, t, runs, seed, &SimulationOptions::default())?;
    let curve = empirical_intensity(&log, window, t, net.users())?;
    let last = curve
        .last()
        .ok_or(SimError::EmptyHorizon { horizon: t, window })?;
    Ok(task.with_gamma(0.0)?.utility(last))
}

/// Fraction of index pairs that the two rankings order the same way.
pub fn rank_correlation(order_a: &[usize], order_b: &[usize]) -> Result<f64, EvalError> {
    let n = order_a.len();
    if n != order_b.len() {
        return Err(EvalError::LengthMismatch(n, order_b.len()));
    }
    if n < 2 {
        return Err(EvalError::InvalidRanking(
            "at least two items are required".into(),
        ));
    }
    let position = |order: &[usize]| -> Result<Vec<usize>, EvalError> {
        let mut pos = vec![usize::MAX; n];
        for (p, &x) in order.iter().enumerate() {
            if x >= n || pos[x] != usize::MAX {
                return Err(EvalError::InvalidRanking(format!("not a permutation of 0..{n}")));
            }
            pos[x] = p;
        }
        Ok(pos)
    };
    position(order_a)?;
    let pos_b = position(order_b)?;
    let mut concordant = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if pos_b[order_a[i]] < pos_b[order_a[j]] {
                concordant += 1;
            }
        }
    }
    Ok(concordant as f64 / (n * (n - 1) / 2) as f64)
}

/// Agreement between "closer to the optimum" and "better objective".
pub fn order_agreement(distances: &[f64], objectives: &[f64]) -> Result<f64, EvalError> {
    rank_correlation(&ordering_by(distances, false), &ordering_by(objectives, true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutOptions {
    pub omega: f64,
    pub support: Support,
    /// Simulated cascades per test interval.
    pub runs: usize,
    pub window: f64,
    pub seed: u64,
    pub fit: FitOptions,
    pub solve: SolveOptions,
}

impl HeldoutOptions {
    pub fn new(omega: f64, window: f64) -> Self {
        Self {
            omega,
            support: Support::Full,
            runs: 50,
            window,
            seed: 0,
            fit: FitOptions::default(),
            solve: SolveOptions::default(),
        }
    }
}

/// Outcome for one choice of training interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub train: usize,
    pub optimal: Vec<f64>,
    /// Test interval indices, in the order of `distances` and `objectives`.
    pub tests: Vec<usize>,
    pub distances: Vec<f64>,
    pub objectives: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutReport {
    pub mean: f64,
    pub outcomes: Vec<TrainingOutcome>,
    /// Intervals skipped because a fit, solve or simulation failed.
    pub skipped: usize,
}

/// Held-out evaluation. For each training interval: fit `(A, λ⁰)` at the
/// given `ω`, then `λ⁰_i` with `A` fixed on every other interval; solve the
/// task on top of the training `λ⁰`; rank test intervals by distance to the
/// proposed `λ⁰` and by simulated objective; score their agreement.
pub fn heldout_rank_correlation(
    intervals: &[EventLog],
    users: usize,
    task: &ShapingTask,
    budget: &BudgetSpec,
    t: f64,
    opts: &HeldoutOptions,
) -> Result<HeldoutReport, EvalError> {
    let n = intervals.len();
    if n < 3 {
        return Err(EvalError::InvalidInput(format!(
            "need at least 3 intervals, got {n}"
        )));
    }
    let results: Vec<Result<(TrainingOutcome, usize), (usize, EvalError)>> = (0..n)
        .into_par_iter()
        .map(|train| heldout_one(intervals, users, task, budget, t, opts, train).map_err(|e| (train, e)))
        .collect();
    let mut outcomes = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r {
            Ok((o, s)) => {
                skipped += s;
                outcomes.push(o);
            }
            Err((train, e)) => {
                log::warn!("training interval {train} skipped: {e}");
                skipped += 1;
            }
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::InvalidInput("every training interval failed".into()));
    }
    let mean = outcomes.iter().map(|o| o.score).sum::<f64>() / outcomes.len() as f64;
    Ok(HeldoutReport {
        mean,
        outcomes,
        skipped,
    })
}

fn heldout_one(
    intervals: &[EventLog],
    users: usize,
    task: &ShapingTask,
    budget: &BudgetSpec,
    t: f64,
    opts: &HeldoutOptions,
    train: usize,
) -> Result<(TrainingOutcome, usize), EvalError> {
    let fit = fit_mle(&intervals[train], users, opts.omega, &opts.support, &opts.fit)?;
    let base = fit.lambda0.as_slice().to_vec();
    let solve = SolveOptions {
        base: Some(base.clone()),
        ..opts.solve.clone()
    };
    let report = pgd_solve(task, &fit.network, t, budget, &solve)?;
    let optimal: Vec<f64> = base.iter().zip(&report.lambda).map(|(b, d)| b + d).collect();

    let n = intervals.len();
    let (mut tests, mut distances, mut objectives) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    for i in (0..n).filter(|&i| i != train) {
        let seed = opts.seed.wrapping_add((train * n + i) as u64);
        let scored = fit_exogenous(&intervals[i], &fit.network, &opts.fit)
            .map_err(EvalError::from)
            .and_then(|f| {
                let lam = f.lambda0.as_slice();
                let obj = evaluate_simulated(task, &fit.network, t, lam, opts.runs, opts.window, seed)?;
                let dist = lam
                    .iter()
                    .zip(&optimal)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Ok((dist, obj))
            });
        match scored {
            Ok((d, o)) => {
                tests.push(i);
                distances.push(d);
                objectives.push(o);
            }
            Err(e) => {
                log::warn!("training {train}: test interval {i} skipped: {e}");
                skipped += 1;
            }
        }
    }
    let score = order_agreement(&distances, &objectives)?;
    Ok((
        TrainingOutcome {
            train,
            optimal,
            tests,
            distances,
            objectives,
            score,
        },
        skipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(kind: BaselineKind, net: &HawkesNetwork, c: f64, target: Option<&[f64]>) -> Vec<f64> {
        let m = net.users();
        let budget = BudgetSpec::uniform(m, c).unwrap();
        let base = vec![0.1; m];
        baseline_allocate(kind, net, 1.0, &budget, &base, target, &PsiOptions::default())
            .unwrap()
            .into_inner()
    }

    fn star() -> HawkesNetwork {
        let e: Vec<_> = (1..5).flat_map(|l| [(0, l, 0.1), (l, 0, 0.1)]).collect();
        HawkesNetwork::new(5, &e, 1.0).unwrap()
    }

    #[test]
    fn uniform_split() {
        let x = alloc(
            BaselineKind::Uni,
            &HawkesNetwork::new(5, &[], 1.0).unwrap(),
            0.5,
            None,
        );
        assert!(x.iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn degree_on_star() {
        let x = alloc(BaselineKind::Deg, &star(), 0.5, None);
        assert!((x[0] - 0.25).abs() < 1e-15);
        assert!(x[1..].iter().all(|v| (v - 0.0625).abs() < 1e-15));
    }

    #[test]
    fn pagerank_symmetric_cycle() {
        let net = HawkesNetwork::new(2, &[(0, 1, 0.4), (1, 0, 0.4)], 1.0).unwrap();
        let x = alloc(BaselineKind::Prk, &net, 0.5, None);
        assert!((x[0] - 0.25).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
        let p = pagerank(&star());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p[0] > p[1]);
    }

    #[test]
    fn target_baselines_require_target() {
        let net = HawkesNetwork::new(2, &[], 1.0).unwrap();
        let budget = BudgetSpec::uniform(2, 1.0).unwrap();
        let r = baseline_allocate(
            BaselineKind::Prop,
            &net,
            1.0,
            &budget,
            &[0.0, 0.0],
            None,
            &PsiOptions::default(),
        );
        assert_eq!(r, Err(EvalError::MissingTarget(BaselineKind::Prop)));
        assert_eq!("lsgrd".parse::<BaselineKind>().unwrap(), BaselineKind::Lsgrd);
        assert!("LP".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn every_baseline_is_feasible() {
        let net = star();
        let target = [1.0, 0.5, 0.2, 0.9, 0.1];
        for kind in BaselineKind::ALL {
            let x = alloc(kind, &net, 0.5, Some(&target));
            assert!(x.iter().all(|v| *v >= 0.0), "{kind}");
            assert!(x.iter().sum::<f64>() <= 0.5 + 1e-12, "{kind}: {x:?}");
        }
    }

    #[test]
    fn half_selection() {
        let net = HawkesNetwork::new(4, &[], 1.0).unwrap();
        let budget = BudgetSpec::uniform(4, 1.0).unwrap();
        let base = [0.4, 0.1, 0.3, 0.2];
        let run = |k| {
            baseline_allocate(k, &net, 1.0, &budget, &base, None, &PsiOptions::default())
                .unwrap()
                .into_inner()
        };
        let xmu = run(BaselineKind::Xmu);
        assert!((xmu[0] - 4.0 / 7.0).abs() < 1e-12 && (xmu[2] - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(run(BaselineKind::Minmu), vec![0.0, 0.5, 0.0, 0.5]);
        // Users 1 and 3 climb to 0.3 and then a third user becomes the minimum.
        let grd = run(BaselineKind::Grd);
        assert_eq!(grd[0], 0.0);
        assert_eq!(grd[2], 0.0);
        let spent: f64 = grd.iter().sum();
        assert!(spent > 0.3 - 1e-12 && spent <= 1.0, "{grd:?}");
    }

    #[test]
    fn lsgrd_stops_when_gaps_close() {
        let net = HawkesNetwork::new(2, &[], 1.0).unwrap();
        let budget = BudgetSpec::uniform(2, 10.0).unwrap();
        let x = baseline_allocate(
            BaselineKind::Lsgrd,
            &net,
            1.0,
            &budget,
            &[0.0, 0.0],
            Some(&[1.0, 2.0]),
            &PsiOptions::default(),
        )
        .unwrap();
        assert!((x.as_slice()[0] - 1.0).abs() < 1e-12 && (x.as_slice()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn theoretical_examples() {
        let net = HawkesNetwork::new(2, &[], 1.0).unwrap();
        let cam = ShapingTask::capped(vec![5.0, 5.0])
            .unwrap()
            .with_gamma(3.0)
            .unwrap();
        let p = PsiOptions::default();
        assert!((evaluate_theoretical(&cam, &net, 2.0, &[0.3, 0.2], &p).unwrap() - 0.5).abs() < 1e-12);
        let busy = HawkesNetwork::new(2, &[(0, 1, 0.5)], 1.0).unwrap();
        assert_eq!(
            evaluate_theoretical(&ShapingTask::minimax(), &busy, 2.0, &[0.0, 0.0], &p).unwrap(),
            0.0
        );
        let scalar = HawkesNetwork::new(1, &[(0, 0, 0.5)], 1.0).unwrap();
        let cap = ShapingTask::capped(vec![100.0]).unwrap();
        assert!(
            (evaluate_theoretical(&cap, &scalar, 1.0, &[2.0], &p).unwrap() - 2.0 * 1.393469).abs() < 1e-5
        );
    }

    #[test]
    fn simulated_without_drive_is_zero() {
        let net = HawkesNetwork::new(2, &[(0, 1, 0.5), (1, 0, 0.5)], 1.0).unwrap();
        let cam = ShapingTask::capped(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            evaluate_simulated(&cam, &net, 10.0, &[0.0, 0.0], 5, 1.0, 3).unwrap(),
            0.0
        );
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_correlation(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(rank_correlation(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(), 0.0);
        assert!((rank_correlation(&[0, 1, 2], &[1, 0, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            rank_correlation(&[0, 1], &[0, 1, 2]),
            Err(EvalError::LengthMismatch(2, 3))
        );
        assert!(rank_correlation(&[0, 0], &[0, 1]).is_err());
    }

    #[test]
    fn ties_resolved_by_index() {
        assert_eq!(ordering_by(&[1.0, 1.0, 0.5], false), vec![2, 0, 1]);
        assert_eq!(ordering_by(&[1.0, 1.0, 0.5], true), vec![0, 1, 2]);
        let s = order_agreement(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s, 1.0);
    }
}
