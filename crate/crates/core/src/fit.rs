//! End-to-end fitting workflows shared by the command line and the demo.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cox::{sample_inhomogeneous_pp, CoxModel};
use crate::error::{Error, Result};
use crate::gaussian::kernel::row_vec;
use crate::interdomain::InducingFeature;
use crate::optimize::{
    collapsed_objective, cox_objective, elbo_objective, maximize, BlockName, OptimizeResult, OptimizerConfig,
    SvgpParameterization, FEATURE_BLOCKS, HYPER_BLOCKS, VARIATIONAL_BLOCKS,
};
use crate::svgp::{Likelihood, SvgpState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Point,
    Gwindow,
}

/// Picks `m` spread-out rows of `x` by farthest-point selection from a
/// seeded first row.
pub fn spread_rows(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("cannot pick {m} inducing locations from {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let dist = |i: usize, j: usize| (x.row(i) - x.row(j)).norm_squared();
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(i, chosen[0])).collect();
    while chosen.len() < m {
        // ties go to the lowest index so the choice is reproducible
        let next = (0..n)
            .filter(|i| !chosen.contains(i))
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("m ≤ n leaves a candidate");
        chosen.push(next);
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(dist(i, next));
        }
    }
    Ok(chosen)
}

/// Features centered at `centers` rows; windows get `width` on every axis.
pub fn make_features(centers: &DMatrix<f64>, kind: FeatureKind, width: f64) -> Result<Vec<InducingFeature>> {
    (0..centers.nrows())
        .map(|i| match kind {
            FeatureKind::Point => Ok(InducingFeature::point(row_vec(centers, i))),
            FeatureKind::Gwindow => InducingFeature::window(row_vec(centers, i), vec![width; centers.ncols()]),
        })
        .collect()
}

fn blocks(groups: &[&[BlockName]]) -> Vec<BlockName> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub state: SvgpState,
    pub result: OptimizeResult,
}

/// Two-stage Gaussian-noise fit.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    /// Hyperparameters and features on the collapsed bound.
    pub collapsed: Fit,
    /// Variational parameters on the uncollapsed ELBO, starting from the
    /// prior at the stage-one hyperparameters.
    pub uncollapsed: Fit,
}

impl RegressionFit {
    pub fn collapsed_bound(&self) -> f64 {
        self.collapsed.result.objective
    }

    pub fn elbo(&self) -> f64 {
        self.uncollapsed.result.objective
    }

    /// `|collapsed bound - ELBO|`.
    pub fn agreement(&self) -> f64 {
        (self.collapsed_bound() - self.elbo()).abs()
    }
}

pub fn fit_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    start: &SvgpState,
    config: &OptimizerConfig,
) -> Result<RegressionFit> {
    if !matches!(start.likelihood, Likelihood::GaussianNoise { .. }) {
        return Err(Error::InvalidArgument("regression needs a Gaussian noise likelihood".into()));
    }
    let outer = SvgpParameterization::new(start.clone(), &blocks(&[&HYPER_BLOCKS, &FEATURE_BLOCKS]))?;
    let r1 = maximize(collapsed_objective(&outer, x, y), &outer.pack(start)?, config)?;
    let s1 = outer.unpack(&r1.x)?;

    let reset = SvgpState::from_prior(s1.features.clone(), s1.kernel.clone(), s1.likelihood)?;
    let inner = SvgpParameterization::new(reset.clone(), &VARIATIONAL_BLOCKS)?;
    let r2 = maximize(elbo_objective(&inner, x, y), &inner.pack(&reset)?, config)?;
    let s2 = inner.unpack(&r2.x)?;
    Ok(RegressionFit {
        collapsed: Fit { state: s1, result: r1 },
        uncollapsed: Fit { state: s2, result: r2 },
    })
}

/// Joint fit of every block on the uncollapsed ELBO.
pub fn fit_svgp(x: &DMatrix<f64>, y: &DVector<f64>, start: &SvgpState, config: &OptimizerConfig) -> Result<Fit> {
    let param = SvgpParameterization::new(start.clone(), &blocks(&[&VARIATIONAL_BLOCKS, &HYPER_BLOCKS, &FEATURE_BLOCKS]))?;
    let result = maximize(elbo_objective(&param, x, y), &param.pack(start)?, config)?;
    Ok(Fit {
        state: param.unpack(&result.x)?,
        result,
    })
}

/// Joint fit of every block on the Cox ELBO.
pub fn fit_cox(model: &CoxModel, start: &SvgpState, config: &OptimizerConfig) -> Result<Fit> {
    let param = SvgpParameterization::new(start.clone(), &blocks(&[&VARIATIONAL_BLOCKS, &HYPER_BLOCKS, &FEATURE_BLOCKS]))?;
    let result = maximize(cox_objective(&param, model), &param.pack(start)?, config)?;
    Ok(Fit {
        state: param.unpack(&result.x)?,
        result,
    })
}

/// Mean function of the synthetic regression data: a sine mixture summed
/// over input dimensions.
pub fn regression_truth(x: &[f64]) -> f64 {
    x.iter().map(|v| v.sin() + 0.5 * (2.3 * v).sin()).sum()
}

/// `n` uniform inputs on the box with `y = regression_truth(x) + noise`.
pub fn synthetic_regression(
    n: usize,
    domain: &[(f64, f64)],
    noise_std: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if domain.is_empty() || domain.iter().any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidArgument("domain needs intervals with lo < hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.len();
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        for (j, (a, b)) in domain.iter().enumerate() {
            x[(i, j)] = rng.random_range(*a..*b);
        }
        let eps: f64 = rng.sample(StandardNormal);
        y[i] = regression_truth(&row_vec(&x, i)) + noise_std * eps;
    }
    Ok((x, y))
}

/// `rate·(1 + sin(frequency·x₁))`.
pub fn cox_truth_intensity(rate: f64, frequency: f64) -> impl Fn(&[f64]) -> f64 {
    move |x| rate * (1.0 + (frequency * x[0]).sin())
}

/// Events of a Poisson process with [`cox_truth_intensity`].
pub fn synthetic_cox(rate: f64, frequency: f64, domain: &[(f64, f64)], seed: u64) -> Result<DMatrix<f64>> {
    sample_inhomogeneous_pp(cox_truth_intensity(rate, frequency), 2.0 * rate, domain, seed)
}
