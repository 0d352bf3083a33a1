//! Browser bindings: each exported call returns a JSON string for the page
//! to plot. The plain functions underneath are ordinary Rust and are tested
//! natively.

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use sparsekl::cox::{fitted_intensity, CoxModel, Link};
use sparsekl::fit::{cox_truth_intensity, fit_cox, fit_regression, make_features, regression_truth, synthetic_cox, synthetic_regression, FeatureKind};
use sparsekl::gaussian::Kernel;
use sparsekl::optimize::OptimizerConfig;
use sparsekl::oracle::random::{random_instance, Overlap};
use sparsekl::oracle::{augmentation_gap, prior_conditional};
use sparsekl::svgp::{Likelihood, SvgpState};
use sparsekl::Result;

const DOMAIN: (f64, f64) = (0.0, 6.0);
const GRID: usize = 160;
const COX_DOMAIN: (f64, f64) = (0.0, 10.0);

#[derive(Debug, Serialize)]
pub struct RegressionView {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub inducing: Vec<f64>,
    pub collapsed_bound: f64,
    pub elbo: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct CoxView {
    pub events: Vec<f64>,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub fitted: Vec<f64>,
    pub inducing: Vec<f64>,
    pub elbo: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct GapView {
    pub scales: Vec<f64>,
    pub gap: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub kl_x: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn demo_config(max_iters: usize) -> OptimizerConfig {
    OptimizerConfig { max_iters, tol: 1e-7, ..Default::default() }
}

/// Fits `m` inducing features to `n` noisy draws of the sine mixture.
pub fn regression(n: usize, m: usize, noise_std: f64, windows: bool, seed: u64) -> Result<RegressionView> {
    let (x, y) = synthetic_regression(n, &[DOMAIN], noise_std, seed)?;
    let centers = column(&linspace(DOMAIN.0 + 0.3, DOMAIN.1 - 0.3, m));
    let kind = if windows { FeatureKind::Gwindow } else { FeatureKind::Point };
    let features = make_features(&centers, kind, 0.3)?;
    let kernel = Kernel::squared_exponential(1.0, vec![1.0], 0.0)?;
    let start = SvgpState::from_prior(features, kernel, Likelihood::GaussianNoise { noise_var: 0.1 })?;
    let fit = fit_regression(&x, &y, &start, &demo_config(400))?;
    let grid = linspace(DOMAIN.0, DOMAIN.1, GRID);
    let pred = fit.uncollapsed.state.predictive_marginals(&column(&grid))?;
    Ok(RegressionView {
        x: x.column(0).iter().copied().collect(),
        y: y.iter().copied().collect(),
        truth: grid.iter().map(|g| regression_truth(&[*g])).collect(),
        grid,
        mean: pred.mean,
        variance: pred.var,
        inducing: fit.uncollapsed.state.features.iter().map(|f| f.location()[0]).collect(),
        collapsed_bound: fit.collapsed_bound(),
        elbo: fit.elbo(),
        iterations: fit.collapsed.result.iterations() + fit.uncollapsed.result.iterations(),
    })
}

/// Samples events from `rate·(1 + sin(frequency·x))` on `[0, 10]` and fits
/// a log-Gaussian Cox process with `m` inducing points.
pub fn cox(rate: f64, frequency: f64, m: usize, seed: u64) -> Result<CoxView> {
    let events = synthetic_cox(rate, frequency, &[COX_DOMAIN], seed)?;
    let n = events.nrows().max(1) as f64;
    let volume = COX_DOMAIN.1 - COX_DOMAIN.0;
    let model = CoxModel::with_default_quadrature(vec![COX_DOMAIN], Link::Exp, events.clone())?;
    let centers = column(&linspace(COX_DOMAIN.0 + 0.5, COX_DOMAIN.1 - 0.5, m));
    let kernel = Kernel::squared_exponential(1.0, vec![2.0], (n / volume).ln())?;
    let start = SvgpState::from_prior(make_features(&centers, FeatureKind::Point, 0.0)?, kernel, Likelihood::Poisson { bin_width: 1.0 })?;
    let fit = fit_cox(&model, &start, &demo_config(300))?;
    let grid = linspace(COX_DOMAIN.0, COX_DOMAIN.1, GRID);
    let truth = cox_truth_intensity(rate, frequency);
    Ok(CoxView {
        events: events.column(0).iter().copied().collect(),
        truth: grid.iter().map(|g| truth(&[*g])).collect(),
        fitted: fitted_intensity(&fit.state, Link::Exp, &column(&grid))?,
        grid,
        inducing: fit.state.features.iter().map(|f| f.location()[0]).collect(),
        elbo: fit.result.objective,
        iterations: fit.result.iterations(),
    })
}

/// Union-set minus index-set KL when the conditional of two augmentation
/// variables keeps the prior mean but has its covariance scaled by `s`.
pub fn augmentation_gaps(seed: u64, scales: &[f64]) -> Result<GapView> {
    let (model, q) = random_instance(seed, Overlap::for_seed(seed))?;
    let d = model.inputs.ncols();
    let aug = DMatrix::from_fn(2, d, |i, j| 3.6 + 0.8 * i as f64 - 0.3 * j as f64);
    let prior = prior_conditional(&model, &aug)?;
    let mut gap = Vec::with_capacity(scales.len());
    let mut kl_x = 0.0;
    for &s in scales {
        let r = augmentation_gap(&model, &q, &aug, &prior.scale_cov(s))?;
        kl_x = r.kl_x;
        gap.push(r.gap);
    }
    Ok(GapView {
        scales: scales.to_vec(),
        closed_form: scales.iter().map(|s| s - 1.0 - s.ln()).collect(),
        gap,
        kl_x,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = fitRegression)]
pub fn fit_regression_js(n: usize, m: usize, noise_std: f64, windows: bool, seed: u32) -> std::result::Result<String, JsError> {
    to_js(regression(n, m, noise_std, windows, seed.into()))
}

#[wasm_bindgen(js_name = fitCox)]
pub fn fit_cox_js(rate: f64, frequency: f64, m: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(cox(rate, frequency, m, seed.into()))
}

#[wasm_bindgen(js_name = augmentationGaps)]
pub fn augmentation_gaps_js(seed: u32, scales: Vec<f64>) -> std::result::Result<String, JsError> {
    to_js(augmentation_gaps(seed.into(), &scales))
}
