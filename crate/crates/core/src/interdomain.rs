//! Inducing features defined as linear functionals of the latent function.
//!
//! A feature `u = ∫ g(s) f(s) ds` with `g` a Gaussian density window has
//! closed-form covariances under the squared-exponential kernel. Plain
//! inducing points are the delta-window case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::kernel::row_vec;
use crate::gaussian::Kernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum InducingFeature {
    /// Evaluation of the function at `loc`.
    #[serde(rename = "point")]
    Point { loc: Vec<f64> },
    /// Integral against the density `N(s; center, diag(widths²))`.
    #[serde(rename = "gwindow")]
    GaussianWindow { center: Vec<f64>, widths: Vec<f64> },
}

impl InducingFeature {
    pub fn point(loc: Vec<f64>) -> Self {
        InducingFeature::Point { loc }
    }

    pub fn window(center: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        let f = InducingFeature::GaussianWindow { center, widths };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InducingFeature::Point { loc } => {
                if loc.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("point location must be finite".into()));
                }
            }
            InducingFeature::GaussianWindow { center, widths } => {
                if center.len() != widths.len() {
                    return Err(Error::DimensionMismatch {
                        what: "window center vs widths",
                        left: (center.len(), 1),
                        right: (widths.len(), 1),
                    });
                }
                if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::InvalidArgument("window widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Location (or window center).
    pub fn location(&self) -> &[f64] {
        match self {
            InducingFeature::Point { loc } => loc,
            InducingFeature::GaussianWindow { center, .. } => center,
        }
    }

    pub fn dim(&self) -> usize {
        self.location().len()
    }

    /// Squared width per dimension; zero for points.
    fn width2(&self, a: usize) -> f64 {
        match self {
            InducingFeature::Point { .. } => 0.0,
            InducingFeature::GaussianWindow { widths, .. } => widths[a] * widths[a],
        }
    }
}

fn check_dim(k: &Kernel, d: usize) -> Result<()> {
    if k.input_dim() != d {
        return Err(Error::DimensionMismatch {
            what: "feature dimension vs kernel",
            left: (d, 1),
            right: (k.input_dim(), 1),
        });
    }
    Ok(())
}

/// SE convolution of two Gaussians: total extra variance per axis is
/// `extra[a]`, centers `c1`, `c2`.
fn smoothed_se(k: &Kernel, c1: &[f64], c2: &[f64], extra: impl Fn(usize) -> f64) -> f64 {
    let mut log_v = k.variance.ln();
    for (a, l) in k.lengthscales.iter().enumerate() {
        let l2 = l * l;
        let s2 = l2 + extra(a);
        let d = c1[a] - c2[a];
        log_v += 0.5 * (l2 / s2).ln() - 0.5 * d * d / s2;
    }
    log_v.exp()
}

/// `cov(u, f(x))`.
pub fn feature_point_cov(f: &InducingFeature, k: &Kernel, x: &[f64]) -> Result<f64> {
    check_dim(k, f.dim())?;
    check_dim(k, x.len())?;
    Ok(match f {
        InducingFeature::Point { loc } => k.eval(loc, x),
        InducingFeature::GaussianWindow { center, .. } => {
            smoothed_se(k, center, x, |a| f.width2(a))
        }
    })
}

/// `cov(u₁, u₂)`.
pub fn feature_feature_cov(f1: &InducingFeature, f2: &InducingFeature, k: &Kernel) -> Result<f64> {
    check_dim(k, f1.dim())?;
    check_dim(k, f2.dim())?;
    Ok(match (f1, f2) {
        (InducingFeature::Point { loc: a }, InducingFeature::Point { loc: b }) => k.eval(a, b),
        _ => smoothed_se(k, f1.location(), f2.location(), |a| f1.width2(a) + f2.width2(a)),
    })
}

/// Prior mean of a feature. Windows are normalized, so every feature has
/// the kernel's constant mean.
pub fn feature_mean(_f: &InducingFeature, k: &Kernel) -> f64 {
    k.mean
}

/// `K_uu` over a feature list.
pub fn assemble_kuu(features: &[InducingFeature], k: &Kernel) -> Result<DMatrix<f64>> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("at least one inducing feature is required".into()));
    }
    let m = features.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = feature_feature_cov(&features[i], &features[j], k)?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `K_uf` between features and the rows of `x`.
pub fn assemble_kuf(features: &[InducingFeature], k: &Kernel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("at least one inducing feature is required".into()));
    }
    if x.ncols() != k.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "inputs vs kernel",
            left: x.shape(),
            right: (k.input_dim(), 1),
        });
    }
    let rows: Vec<Vec<f64>> = (0..x.nrows()).map(|i| row_vec(x, i)).collect();
    let mut out = DMatrix::zeros(features.len(), x.nrows());
    for (i, f) in features.iter().enumerate() {
        for (j, r) in rows.iter().enumerate() {
            out[(i, j)] = feature_point_cov(f, k, r)?;
        }
    }
    Ok(out)
}

/// Prior mean vector of the features.
pub fn assemble_mean(features: &[InducingFeature], k: &Kernel) -> DVector<f64> {
    DVector::from_iterator(features.len(), features.iter().map(|f| feature_mean(f, k)))
}

/// Linear map taking function values on a quadrature grid to the window
/// features: entry `(i, g) = w_g · g_i(s_g)`. Point features select the
/// grid node nearest to their location.
pub fn grid_functional(features: &[InducingFeature], grid: &[Vec<f64>], weights: &[f64]) -> Result<DMatrix<f64>> {
    if grid.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "grid nodes vs weights",
            left: (grid.len(), 1),
            right: (weights.len(), 1),
        });
    }
    let mut a = DMatrix::zeros(features.len(), grid.len());
    for (i, f) in features.iter().enumerate() {
        match f {
            InducingFeature::GaussianWindow { center, widths } => {
                for (g, (s, w)) in grid.iter().zip(weights).enumerate() {
                    a[(i, g)] = w * window_density(center, widths, s);
                }
            }
            InducingFeature::Point { loc } => {
                let nearest = grid
                    .iter()
                    .enumerate()
                    .map(|(g, s)| (g, s.iter().zip(loc).map(|(p, q)| (p - q).powi(2)).sum::<f64>()))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .map(|(g, _)| g)
                    .ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
                a[(i, nearest)] = 1.0;
            }
        }
    }
    Ok(a)
}

/// `N(s; center, diag(widths²))`.
pub fn window_density(center: &[f64], widths: &[f64], s: &[f64]) -> f64 {
    center
        .iter()
        .zip(widths)
        .zip(s)
        .map(|((c, w), x)| {
            let z = (x - c) / w;
            (-0.5 * z * z).exp() / (w * (2.0 * std::f64::consts::PI).sqrt())
        })
        .product()
}
