//! The five subcommands.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sparsekl::cox::{fitted_intensity, CoxModel};
use sparsekl::fit::{
    fit_cox, fit_regression, fit_svgp, make_features, spread_rows, synthetic_cox, synthetic_regression,
};
use sparsekl::gaussian::Kernel;
use sparsekl::optimize::TraceRow;
use sparsekl::oracle::{run_instance, InstanceReport, Overlap};
use sparsekl::svgp::{log_ndtr, Checkpoint, Likelihood, SvgpState};

use crate::config::{GenerateKind, ModelConfig, RunConfig, Task, Tolerances};
use crate::data::{read_table, write_json, write_serialized, write_table, Table};
use crate::error::{CliError, CliResult};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    match cfg.task {
        Task::FitRegression => regression(cfg),
        Task::FitClassification => classification(cfg),
        Task::FitCox => cox(cfg),
        Task::Verify => verify(cfg),
        Task::Generate => generate(cfg),
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    task: &'static str,
    seed: u64,
    n_data: usize,
    num_inducing: usize,
    final_elbo: f64,
    iterations: usize,
    converged: bool,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    collapsed_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collapsed_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collapsed_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    integrated_intensity: Option<f64>,
}

impl Summary {
    fn new(task: &'static str, cfg: &RunConfig, n: usize, state: &SvgpState, trace: &[TraceRow], converged: bool, t: Instant) -> Self {
        Summary {
            task,
            seed: cfg.seed,
            n_data: n,
            num_inducing: state.num_inducing(),
            final_elbo: trace.last().expect("trace holds the start").objective,
            iterations: trace.len() - 1,
            converged,
            wall_time_s: t.elapsed().as_secs_f64(),
            collapsed_bound: None,
            collapsed_iterations: None,
            collapsed_agreement: None,
            event_count: None,
            integrated_intensity: None,
        }
    }
}

fn config_err(e: sparsekl::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn split_xy(t: &Table) -> CliResult<(DMatrix<f64>, DVector<f64>)> {
    let w = t.values.ncols();
    if w < 2 {
        return Err(CliError::Data("need at least one input column and a target column".into()));
    }
    Ok((t.values.columns(0, w - 1).into_owned(), t.values.column(w - 1).into_owned()))
}

fn ranges(x: &DMatrix<f64>) -> Vec<f64> {
    x.column_iter()
        .map(|c| {
            let r = c.max() - c.min();
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect()
}

fn mean_var(y: &DVector<f64>) -> (f64, f64) {
    let m = y.mean();
    let v = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
    (m, v)
}

/// Kernel from the config, falling back to data-driven defaults.
fn initial_kernel(m: &ModelConfig, widths: &[f64], variance: f64, mean: f64) -> CliResult<Kernel> {
    let ls = match &m.kernel.lengthscales {
        Some(l) if l.len() != widths.len() => {
            return Err(CliError::Config(format!(
                "model.kernel.lengthscales has {} entries for {}-dimensional inputs",
                l.len(),
                widths.len()
            )))
        }
        Some(l) => l.clone(),
        None => widths.iter().map(|w| 0.2 * w).collect(),
    };
    Kernel::squared_exponential(m.kernel.variance.unwrap_or(variance), ls, m.kernel.mean.unwrap_or(mean)).map_err(config_err)
}

fn initial_state(m: &ModelConfig, centers: &DMatrix<f64>, widths: &[f64], kernel: Kernel, lik: Likelihood) -> CliResult<SvgpState> {
    let width = m
        .window_width
        .unwrap_or_else(|| 0.05 * widths.iter().sum::<f64>() / widths.len() as f64);
    let features = make_features(centers, m.feature, width).map_err(config_err)?;
    Ok(SvgpState::from_prior(features, kernel, lik)?)
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn inducing_centers(x: &DMatrix<f64>, m: usize, seed: u64) -> CliResult<DMatrix<f64>> {
    if m > x.nrows() {
        return Err(CliError::Config(format!("model.num_inducing = {m} exceeds the {} data rows", x.nrows())));
    }
    Ok(select_rows(x, &spread_rows(x, m, seed).map_err(config_err)?))
}

fn write_fit(out: &Path, state: &SvgpState, trace: &[TraceRow]) -> CliResult<()> {
    let path = out.join("checkpoint.json");
    std::fs::write(&path, Checkpoint::from(state).to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
    write_serialized(&out.join("trace.csv"), trace)
}

fn headed(header: &[String], extra: &[&str]) -> Vec<String> {
    header.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect()
}

fn regression(cfg: &RunConfig) -> CliResult<()> {
    let table = read_table(cfg.data.as_ref().expect("checked at load"))?;
    let (x, y) = split_xy(&table)?;
    let t = Instant::now();
    let widths = ranges(&x);
    let (ym, yv) = mean_var(&y);
    let yv = if yv > 0.0 { yv } else { 1.0 };
    let kernel = initial_kernel(&cfg.model, &widths, yv, ym)?;
    let noise_var = cfg.model.noise_var.unwrap_or(0.1 * yv);
    let lik = Likelihood::GaussianNoise { noise_var };
    lik.validate().map_err(config_err)?;
    let centers = inducing_centers(&x, cfg.model.num_inducing, cfg.seed)?;
    let start = initial_state(&cfg.model, &centers, &widths, kernel, lik)?;

    let fit = fit_regression(&x, &y, &start, &cfg.optimizer)?;
    let state = &fit.uncollapsed.state;
    let pred = state.predictive_marginals(&x)?;
    write_fit(&cfg.out, state, &fit.uncollapsed.result.trace)?;
    write_serialized(&cfg.out.join("trace_collapsed.csv"), &fit.collapsed.result.trace)?;
    let header = headed(&table.header[..x.ncols()], &["mean", "variance"]);
    write_table(
        &cfg.out.join("predictions.csv"),
        &header,
        (0..x.nrows()).map(|i| x.row(i).iter().copied().chain([pred.mean[i], pred.var[i]]).collect()),
    )?;
    let mut s = Summary::new("fit-regression", cfg, x.nrows(), state, &fit.uncollapsed.result.trace, fit.uncollapsed.result.converged, t);
    s.collapsed_bound = Some(fit.collapsed_bound());
    s.collapsed_iterations = Some(fit.collapsed.result.iterations());
    s.collapsed_agreement = Some(fit.agreement());
    write_json(&cfg.out.join("summary.json"), &s)
}

fn classification(cfg: &RunConfig) -> CliResult<()> {
    let table = read_table(cfg.data.as_ref().expect("checked at load"))?;
    let (x, y) = split_xy(&table)?;
    if let Some(i) = y.iter().position(|v| ![0.0, 1.0, -1.0].contains(v)) {
        return Err(CliError::Data(format!("line {}: labels must be 0, 1 or -1, found {}", i + 2, y[i])));
    }
    let t = Instant::now();
    let widths = ranges(&x);
    let kernel = initial_kernel(&cfg.model, &widths, 1.0, 0.0)?;
    let centers = inducing_centers(&x, cfg.model.num_inducing, cfg.seed)?;
    let start = initial_state(&cfg.model, &centers, &widths, kernel, Likelihood::Bernoulli)?;

    let fit = fit_svgp(&x, &y, &start, &cfg.optimizer)?;
    let pred = fit.state.predictive_marginals(&x)?;
    write_fit(&cfg.out, &fit.state, &fit.result.trace)?;
    let header = headed(&table.header[..x.ncols()], &["mean", "variance", "probability"]);
    write_table(
        &cfg.out.join("predictions.csv"),
        &header,
        (0..x.nrows()).map(|i| {
            let (m, v) = (pred.mean[i], pred.var[i]);
            let p = log_ndtr(m / (1.0 + v).sqrt()).exp();
            x.row(i).iter().copied().chain([m, v, p]).collect()
        }),
    )?;
    let s = Summary::new("fit-classification", cfg, x.nrows(), &fit.state, &fit.result.trace, fit.result.converged, t);
    write_json(&cfg.out.join("summary.json"), &s)
}

/// `g` evenly spaced points per axis, endpoints included.
fn box_grid(domain: &[(f64, f64)], g: usize) -> DMatrix<f64> {
    let axis = |(a, b): (f64, f64)| -> Vec<f64> { (0..g).map(|i| a + (b - a) * i as f64 / (g - 1) as f64).collect() };
    match domain {
        [d] => DMatrix::from_column_slice(g, 1, &axis(*d)),
        [d1, d2] => {
            let (a1, a2) = (axis(*d1), axis(*d2));
            DMatrix::from_fn(g * g, 2, |i, j| if j == 0 { a1[i / g] } else { a2[i % g] })
        }
        _ => unreachable!("domain dimension validated"),
    }
}

fn cox(cfg: &RunConfig) -> CliResult<()> {
    let table = read_table(cfg.data.as_ref().expect("checked at load"))?;
    let domain: Vec<(f64, f64)> = cfg
        .model
        .domain
        .as_ref()
        .ok_or_else(|| CliError::Config("fit-cox needs model.domain".into()))?
        .iter()
        .map(|[a, b]| (*a, *b))
        .collect();
    let events = table.values.clone();
    if events.ncols() != domain.len() {
        return Err(CliError::Data(format!(
            "{} event columns for a {}-dimensional domain",
            events.ncols(),
            domain.len()
        )));
    }
    let n = events.nrows();
    let orders = cfg.model.quad_orders.clone().unwrap_or_else(|| sparsekl::cox::default_quad_orders(domain.len()));
    let model = CoxModel::new(domain.clone(), cfg.model.link, events, orders).map_err(|e| match e {
        sparsekl::Error::EventOutsideDomain { index, .. } => CliError::Data(format!("line {}: {e}", index + 2)),
        other => config_err(other),
    })?;
    let t = Instant::now();
    let widths: Vec<f64> = domain.iter().map(|(a, b)| b - a).collect();
    let log_rate = (n.max(1) as f64 / model.volume()).ln();
    let kernel = initial_kernel(&cfg.model, &widths, 1.0, log_rate)?;
    // inducing locations spread over a candidate grid covering the box
    let candidates = box_grid(&domain, if domain.len() == 1 { 401 } else { 41 });
    let centers = inducing_centers(&candidates, cfg.model.num_inducing, cfg.seed)?;
    // the Cox objective ignores the likelihood record; a unit-bin Poisson marks it
    let start = initial_state(&cfg.model, &centers, &widths, kernel, Likelihood::Poisson { bin_width: 1.0 })?;

    let fit = fit_cox(&model, &start, &cfg.optimizer)?;
    write_fit(&cfg.out, &fit.state, &fit.result.trace)?;
    let g = cfg.model.grid.unwrap_or(if domain.len() == 1 { 200 } else { 50 });
    if g < 2 {
        return Err(CliError::Config("model.grid must be at least 2".into()));
    }
    let grid = box_grid(&domain, g);
    let rho = fitted_intensity(&fit.state, model.link, &grid)?;
    write_table(
        &cfg.out.join("predictions.csv"),
        &headed(&table.header, &["intensity"]),
        (0..grid.nrows()).map(|i| grid.row(i).iter().copied().chain([rho[i]]).collect()),
    )?;
    let (nodes, weights) = model.quad_grid()?;
    let integral = fitted_intensity(&fit.state, model.link, &nodes)?
        .iter()
        .zip(&weights)
        .map(|(r, w)| r * w)
        .sum();
    let mut s = Summary::new("fit-cox", cfg, n, &fit.state, &fit.result.trace, fit.result.converged, t);
    s.event_count = Some(n);
    s.integrated_intensity = Some(integral);
    write_json(&cfg.out.join("summary.json"), &s)
}

#[derive(Debug, Serialize)]
struct Family {
    max_diff: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct AugmentationFamily {
    /// Largest `|gap - closed form|` for the mismatched conditional.
    max_diff: f64,
    /// Largest `|gap|` when the conditional matches the prior.
    max_matched_gap: f64,
    min_gap: f64,
    tolerance: f64,
    min_gap_required: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct PushforwardFamily {
    /// Larger of the two diffs below.
    max_diff: f64,
    max_marginal_diff: f64,
    max_kl_diff: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    seed: u64,
    instances: u64,
    passed: bool,
    tolerances: Tolerances,
    overlaps_covered: Vec<Overlap>,
    equivalence: Family,
    chain_rule: Family,
    augmentation_gap: AugmentationFamily,
    pushforward: PushforwardFamily,
    details: Vec<InstanceReport>,
}

fn max_of(rows: &[InstanceReport], f: impl Fn(&InstanceReport) -> f64) -> f64 {
    rows.iter().map(f).fold(0.0, f64::max)
}

fn verify(cfg: &RunConfig) -> CliResult<()> {
    let tol = cfg.verify.tolerances;
    let rows = (0..cfg.verify.instances)
        .map(|i| run_instance(cfg.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let eq = max_of(&rows, |r| r.equivalence_rel_diff);
    let chain = max_of(&rows, |r| r.chain_diff);
    let aug = max_of(&rows, |r| r.aug_diff);
    let matched = max_of(&rows, |r| r.aug_matched_gap.abs());
    let min_gap = rows.iter().map(|r| r.aug_gap).fold(f64::INFINITY, f64::min);
    let push_m = max_of(&rows, |r| r.push_diff);
    let push_kl = max_of(&rows, |r| r.push_kl_diff);
    let mut overlaps: Vec<Overlap> = Vec::new();
    for r in &rows {
        if !overlaps.contains(&r.overlap) {
            overlaps.push(r.overlap);
        }
    }
    let report = VerifyReport {
        seed: cfg.seed,
        instances: cfg.verify.instances,
        passed: false,
        tolerances: tol,
        overlaps_covered: overlaps,
        equivalence: Family {
            max_diff: eq,
            tolerance: tol.equivalence,
            passed: eq <= tol.equivalence,
        },
        chain_rule: Family {
            max_diff: chain,
            tolerance: tol.chain_rule,
            passed: chain <= tol.chain_rule,
        },
        augmentation_gap: AugmentationFamily {
            max_diff: aug,
            max_matched_gap: matched,
            min_gap,
            tolerance: tol.augmentation,
            min_gap_required: tol.min_gap,
            passed: aug <= tol.augmentation && matched <= tol.augmentation && min_gap > tol.min_gap,
        },
        pushforward: PushforwardFamily {
            max_diff: push_m.max(push_kl),
            max_marginal_diff: push_m,
            max_kl_diff: push_kl,
            tolerance: tol.pushforward,
            passed: push_m.max(push_kl) <= tol.pushforward,
        },
        details: rows,
    };
    let failed: Vec<&str> = [
        ("equivalence", report.equivalence.passed),
        ("chain_rule", report.chain_rule.passed),
        ("augmentation_gap", report.augmentation_gap.passed),
        ("pushforward", report.pushforward.passed),
    ]
    .into_iter()
    .filter(|(_, ok)| !ok)
    .map(|(name, _)| name)
    .collect();
    let report = VerifyReport {
        passed: failed.is_empty(),
        ..report
    };
    write_json(&cfg.out.join("verify_report.json"), &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("families out of tolerance: {}", failed.join(", "))))
    }
}

fn axis_names(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".into()]
    } else {
        (1..=d).map(|a| format!("x{a}")).collect()
    }
}

fn generate(cfg: &RunConfig) -> CliResult<()> {
    let g = &cfg.generate;
    let domain: Vec<(f64, f64)> = g.domain.iter().map(|[a, b]| (*a, *b)).collect();
    let path = cfg.out.join("data.csv");
    match g.kind {
        GenerateKind::Regression => {
            let (x, y) = synthetic_regression(g.n, &domain, g.noise_std, cfg.seed).map_err(config_err)?;
            let header = headed(&axis_names(domain.len()), &["y"]);
            write_table(&path, &header, (0..g.n).map(|i| x.row(i).iter().copied().chain([y[i]]).collect()))
        }
        GenerateKind::Cox => {
            let events = synthetic_cox(g.rate, g.frequency, &domain, cfg.seed)?;
            write_table(&path, &axis_names(domain.len()), (0..events.nrows()).map(|i| events.row(i).iter().copied().collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_the_box() {
        let g = box_grid(&[(0.0, 1.0), (2.0, 4.0)], 3);
        assert_eq!(g.nrows(), 9);
        assert_eq!(g.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 2.0]);
        assert_eq!(g.row(5).iter().copied().collect::<Vec<_>>(), vec![0.5, 4.0]);
        assert_eq!(g.row(8).iter().copied().collect::<Vec<_>>(), vec![1.0, 4.0]);
    }

    #[test]
    fn target_is_the_last_column() {
        let t = Table {
            header: vec!["a".into(), "b".into(), "y".into()],
            values: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let (x, y) = split_xy(&t).unwrap();
        assert_eq!(x.ncols(), 2);
        assert_eq!(y.as_slice(), &[3.0, 6.0]);
    }
}
