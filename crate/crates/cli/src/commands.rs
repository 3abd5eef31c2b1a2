use std::path::Path;

use actshape::estimate::{fit_mle, select_omega, FitOptions, Support};
use actshape::eval::{
    baseline_allocate, evaluate_simulated, evaluate_theoretical, heldout_rank_correlation, BaselineKind,
    HeldoutOptions,
};
use actshape::psi::psi_apply;
use actshape::shape::{pgd_solve, random_caps, sparsity_sweep, SolveOptions};
use actshape::simulate::{simulate_cascades, SimulationOptions, DEFAULT_MAX_EVENTS};
use actshape::{BudgetSpec, EventLog, HawkesNetwork, PsiOptions, ShapingTask};
use log::warn;
use serde::Serialize;

use crate::config::{require, Scheme, Settings, TaskName};
use crate::error::{CliError, Result};
use crate::io::{self, num};

pub const SWEEP_HEADER: [&str; 4] = ["gamma", "# Non-zeros", "Budget consumed", "Objective"];

const DEFAULT_EVAL_RUNS: usize = 50;
const DEFAULT_FOLDS: usize = 5;

fn positive(value: f64, flag: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::usage(format!("--{flag} must be positive, got {value}")))
    }
}

/// Budget total, checked before anything is loaded.
fn budget_total(s: &Settings) -> Result<f64> {
    let total = require(&s.budget, "budget")?;
    if !(total >= 0.0 && total.is_finite()) {
        return Err(CliError::usage(format!(
            "--budget must be finite and >= 0, got {total}"
        )));
    }
    Ok(total)
}

fn budget_spec(s: &Settings, m: usize, total: f64) -> Result<BudgetSpec> {
    let costs = match s.costs.as_deref() {
        None | Some("uniform") => vec![1.0; m],
        Some(path) => io::read_vector(Path::new(path), m)?,
    };
    BudgetSpec::new(costs, total).map_err(|e| CliError::usage(format!("--costs: {e}")))
}

fn load_task(
    s: &Settings,
    net: &HawkesNetwork,
    t: f64,
    base: &[f64],
) -> Result<(ShapingTask, Option<Vec<f64>>)> {
    let m = net.users();
    let target = s.target.as_deref().map(|p| io::read_vector(p, m)).transpose()?;
    let task = match require(&s.task, "task")? {
        TaskName::Cam => {
            let caps = match &s.caps {
                Some(p) => io::read_vector(p, m)?,
                None => random_caps(net, t, base, s.seed.unwrap_or(0), &PsiOptions::default())
                    .map_err(CliError::numerical)?,
            };
            ShapingTask::capped(caps).map_err(|e| CliError::usage(format!("--caps: {e}")))?
        }
        TaskName::Mmash => ShapingTask::minimax(),
        TaskName::Lsash => {
            let target = target
                .clone()
                .ok_or_else(|| CliError::usage("task lsash needs --target"))?;
            ShapingTask::least_squares(target).map_err(|e| CliError::usage(format!("--target: {e}")))?
        }
        TaskName::Hom => ShapingTask::homogenize(),
    };
    let gamma = s.gamma.unwrap_or(0.0);
    let task = task
        .with_gamma(gamma)
        .map_err(|e| CliError::usage(format!("--gamma: {e}")))?;
    Ok((task, target))
}

fn solve_options(s: &Settings, base: &[f64]) -> Result<SolveOptions> {
    let defaults = SolveOptions::default();
    Ok(SolveOptions {
        tol: s
            .tol
            .map(|t| positive(t, "tol"))
            .transpose()?
            .unwrap_or(defaults.tol),
        max_iter: s.max_iter.unwrap_or(defaults.max_iter),
        base: Some(base.to_vec()),
        ..defaults
    })
}

fn fit_options(s: &Settings) -> Result<FitOptions> {
    let defaults = FitOptions::default();
    Ok(FitOptions {
        grad_tol: s
            .tol
            .map(|t| positive(t, "tol"))
            .transpose()?
            .unwrap_or(defaults.grad_tol),
        max_iter: s.max_iter.unwrap_or(defaults.max_iter),
        ..defaults
    })
}

fn with_base(delta: &[f64], base: &[f64]) -> Vec<f64> {
    delta.iter().zip(base).map(|(d, b)| d + b).collect()
}

pub fn simulate(s: &Settings) -> Result<()> {
    let horizon = positive(require(&s.horizon, "horizon")?, "horizon")?;
    let model = require(&s.model, "model")?;
    let out = io::output_dir(&require(&s.out, "out")?)?;
    let runs = s.runs.unwrap_or(1);
    let (net, lambda0) = io::read_model(&model)?;
    let opts = SimulationOptions {
        max_events: s.max_events.unwrap_or(DEFAULT_MAX_EVENTS),
    };
    let log = simulate_cascades(
        &net,
        lambda0.as_slice(),
        horizon,
        runs,
        s.seed.unwrap_or(0),
        &opts,
    )
    .map_err(CliError::numerical)?;
    io::write_events(&out.join("events.csv"), &log)?;

    let mut lines = vec![format!("cascades {runs}, events {}", log.total_events())];
    for (u, n) in log.counts_per_user(net.users()).iter().enumerate() {
        lines.push(format!("user {u}: {n}"));
    }
    let generations = actshape::simulate::generation_counts(&log, horizon).map_err(CliError::numerical)?;
    for (k, n) in generations.iter().enumerate() {
        lines.push(format!("generation {k}: {n}"));
    }
    io::print_lines(&lines);
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    omega: f64,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
}

fn read_log(
    path: &Path,
    horizon: f64,
    users: Option<usize>,
    min_cascades: usize,
) -> Result<(EventLog, usize)> {
    let file = io::read_events(path)?;
    let m = match users.or(file.max_user.map(|u| u + 1)) {
        Some(m) => m,
        None => {
            return Err(CliError::usage(format!(
                "{}: no events; pass --users",
                path.display()
            )))
        }
    };
    let log = file.into_log(path, horizon, m, min_cascades)?;
    Ok((log, m))
}

pub fn estimate(s: &Settings) -> Result<()> {
    let horizon = positive(require(&s.horizon, "horizon")?, "horizon")?;
    let events = require(&s.events, "events")?;
    let out = io::output_dir(&require(&s.out, "out")?)?;
    let opts = fit_options(s)?;
    let (log, m) = read_log(&events, horizon, s.users, s.runs.unwrap_or(0))?;
    let support = match &s.support {
        Some(p) => Support::Edges(io::read_edges(p)?),
        None => Support::Full,
    };

    let omega = match (&s.omega_grid, s.omega) {
        (Some(grid), _) => {
            let grid: Vec<f64> = grid
                .iter()
                .map(|w| positive(*w, "omega-grid"))
                .collect::<Result<_>>()?;
            let folds = s.folds.unwrap_or(DEFAULT_FOLDS);
            let sel = if grid.len() == 1 {
                // A single candidate needs no folds.
                actshape::estimate::OmegaSelection {
                    omega: grid[0],
                    scores: vec![f64::NAN],
                }
            } else {
                select_omega(&log, m, &grid, folds, &support, &opts).map_err(CliError::numerical)?
            };
            let rows = grid
                .iter()
                .zip(&sel.scores)
                .map(|(w, sc)| vec![num(*w), num(*sc)]);
            io::write_csv(&out.join("omega_scores.csv"), &["omega", "score"], rows)?;
            sel.omega
        }
        (None, Some(w)) => positive(w, "omega")?,
        (None, None) => return Err(CliError::usage("pass --omega or --omega-grid")),
    };

    let fit = fit_mle(&log, m, omega, &support, &opts).map_err(CliError::numerical)?;
    if !fit.converged {
        warn!(
            "fit stopped after {} iterations without meeting --tol",
            fit.iterations
        );
    }
    io::write_model(&out.join("model.json"), &fit.network, fit.lambda0.as_slice())?;
    let summary = FitSummary {
        omega,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    io::write_json(&out.join("fit.json"), &summary)?;
    io::print_lines(&[format!(
        "users {m}, cascades {}, events {}, omega {omega}, log-likelihood {}",
        log.cascades.len(),
        log.total_events(),
        fit.log_likelihood
    )]);
    Ok(())
}

/// Shared inputs of `shape`, `sweep` and `eval`.
struct Problem {
    net: HawkesNetwork,
    base: Vec<f64>,
    horizon: f64,
    task: ShapingTask,
    target: Option<Vec<f64>>,
    budget: BudgetSpec,
    solve: SolveOptions,
}

fn load_problem(s: &Settings) -> Result<Problem> {
    let total = budget_total(s)?;
    let horizon = positive(require(&s.horizon, "horizon")?, "horizon")?;
    let model = require(&s.model, "model")?;
    let (net, lambda0) = io::read_model(&model)?;
    let base = lambda0.into_inner();
    let budget = budget_spec(s, net.users(), total)?;
    let (task, target) = load_task(s, &net, horizon, &base)?;
    let solve = solve_options(s, &base)?;
    Ok(Problem {
        net,
        base,
        horizon,
        task,
        target,
        budget,
        solve,
    })
}

#[derive(Serialize)]
struct ShapeSummary<'a> {
    task: &'a str,
    gamma: f64,
    budget: f64,
    horizon: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    budget_consumed: f64,
    nonzeros: usize,
}

pub fn shape(s: &Settings) -> Result<()> {
    let p = load_problem(s)?;
    let out = io::output_dir(&require(&s.out, "out")?)?;
    let rep = pgd_solve(&p.task, &p.net, p.horizon, &p.budget, &p.solve).map_err(CliError::numerical)?;
    if !rep.converged {
        warn!(
            "solver stopped after {} iterations without meeting --tol",
            rep.iterations
        );
    }
    let total = with_base(&rep.lambda, &p.base);
    let rows = (0..rep.lambda.len()).map(|u| vec![u.to_string(), num(rep.lambda[u]), num(total[u])]);
    io::write_csv(
        &out.join("allocation.csv"),
        &["user_id", "incentive", "lambda0"],
        rows,
    )?;
    let rows = rep
        .trace
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), num(*v)]);
    io::write_csv(&out.join("trace.csv"), &["iteration", "objective"], rows)?;
    let summary = ShapeSummary {
        task: p.task.name(),
        gamma: p.task.gamma(),
        budget: p.budget.total(),
        horizon: p.horizon,
        objective: rep.objective,
        iterations: rep.iterations,
        converged: rep.converged,
        budget_consumed: rep.budget_consumed,
        nonzeros: rep.nonzeros,
    };
    io::write_json(&out.join("report.json"), &summary)?;
    io::print_lines(&[format!(
        "{} objective {}, budget consumed {} of {}, {} nonzero incentives",
        p.task.name(),
        rep.objective,
        rep.budget_consumed,
        p.budget.total(),
        rep.nonzeros
    )]);
    Ok(())
}

pub fn sweep(s: &Settings) -> Result<()> {
    budget_total(s)?;
    let gammas = require(&s.gammas, "gammas")?;
    if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(CliError::usage("--gammas must be finite and >= 0"));
    }
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::usage("--gammas must be ascending"));
    }
    let p = load_problem(s)?;
    let out = io::output_dir(&require(&s.out, "out")?)?;
    let rows = sparsity_sweep(&p.task, &p.net, p.horizon, &p.budget, &gammas, &p.solve)
        .map_err(CliError::numerical)?;
    let mut table = Vec::with_capacity(rows.len());
    for row in rows {
        let rep = row
            .outcome
            .map_err(|e| CliError::Numerical(format!("gamma {}: {e}", row.gamma)))?;
        table.push(vec![
            num(row.gamma),
            rep.nonzeros.to_string(),
            num(rep.budget_consumed),
            num(rep.objective),
        ]);
    }
    let lines: Vec<String> = table.iter().map(|r| r.join(",")).collect();
    io::write_csv(&out.join("sweep.csv"), &SWEEP_HEADER, table)?;
    io::print_lines(&lines);
    Ok(())
}

pub fn eval(s: &Settings) -> Result<()> {
    let p = load_problem(s)?;
    let out = io::output_dir(&require(&s.out, "out")?)?;
    let schemes = s.schemes.clone().unwrap_or_else(|| {
        let mut d = vec![Scheme::Theoretical, Scheme::Simulated];
        if s.intervals.is_some() {
            d.push(Scheme::Heldout);
        }
        d
    });
    let runs = s.runs.unwrap_or(DEFAULT_EVAL_RUNS);
    let window = positive(s.window.unwrap_or(1.0), "window")?;
    let seed = s.seed.unwrap_or(0);
    let psi = PsiOptions::default();

    let opt = pgd_solve(&p.task, &p.net, p.horizon, &p.budget, &p.solve).map_err(CliError::numerical)?;
    let mut methods = vec![("OPT".to_string(), opt.lambda)];
    for kind in BaselineKind::ALL {
        if kind.needs_target() && p.target.is_none() {
            continue;
        }
        let delta = baseline_allocate(
            kind,
            &p.net,
            p.horizon,
            &p.budget,
            &p.base,
            p.target.as_deref(),
            &psi,
        )
        .map_err(CliError::numerical)?;
        methods.push((kind.name().to_string(), delta.into_inner()));
    }

    let columns: Vec<Scheme> = schemes
        .iter()
        .copied()
        .filter(|sc| *sc != Scheme::Heldout)
        .collect();
    let mut header = vec!["method"];
    header.extend(columns.iter().map(|sc| match sc {
        Scheme::Theoretical => "theoretical",
        _ => "simulated",
    }));
    let mut comparison = Vec::with_capacity(methods.len());
    let mut profile = Vec::new();
    for (name, delta) in &methods {
        let lam = with_base(delta, &p.base);
        let mut row = vec![name.clone()];
        for sc in &columns {
            let value = match sc {
                Scheme::Theoretical => evaluate_theoretical(&p.task, &p.net, p.horizon, &lam, &psi),
                _ => evaluate_simulated(&p.task, &p.net, p.horizon, &lam, runs, window, seed),
            }
            .map_err(CliError::numerical)?;
            row.push(num(value));
        }
        comparison.push(row);
        let mu = psi_apply(&p.net, p.horizon, &lam, &psi).map_err(CliError::numerical)?;
        for (u, v) in mu.iter().enumerate() {
            profile.push(vec![name.clone(), u.to_string(), num(*v)]);
        }
    }
    let lines: Vec<String> = comparison.iter().map(|r| r.join(",")).collect();
    io::write_csv(&out.join("comparison.csv"), &header, comparison)?;
    io::write_csv(&out.join("profile.csv"), &["method", "user_id", "mu"], profile)?;
    io::print_lines(&lines);

    if schemes.contains(&Scheme::Heldout) {
        heldout(s, &p, runs, window, seed, &out)?;
    }
    Ok(())
}

fn heldout(s: &Settings, p: &Problem, runs: usize, window: f64, seed: u64, out: &Path) -> Result<()> {
    let paths = require(&s.intervals, "intervals")?;
    let m = p.net.users();
    let intervals: Vec<EventLog> = paths
        .iter()
        .map(|path| read_log(path, p.horizon, Some(m), 0).map(|(log, _)| log))
        .collect::<Result<_>>()?;
    let opts = HeldoutOptions {
        support: Support::of_network(&p.net),
        runs,
        seed,
        fit: fit_options(s)?,
        solve: SolveOptions {
            base: None,
            ..p.solve.clone()
        },
        ..HeldoutOptions::new(s.omega.unwrap_or(p.net.omega()), window)
    };
    let report = heldout_rank_correlation(&intervals, m, &p.task, &p.budget, p.horizon, &opts)
        .map_err(CliError::numerical)?;
    let mut rows: Vec<Vec<String>> = report
        .outcomes
        .iter()
        .map(|o| vec![o.train.to_string(), num(o.score)])
        .collect();
    rows.push(vec!["mean".to_string(), num(report.mean)]);
    io::write_csv(&out.join("heldout.csv"), &["training", "score"], rows)?;
    io::print_lines(&[format!(
        "held-out rank correlation {} over {} trainings ({} skipped)",
        report.mean,
        report.outcomes.len(),
        report.skipped
    )]);
    Ok(())
}
