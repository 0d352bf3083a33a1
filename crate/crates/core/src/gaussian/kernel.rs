//! Covariance functions.
//!
//! Inputs are stored as `n × d` matrices, one point per row.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
}

/// Squared-exponential kernel with one lengthscale per input dimension and a
/// constant prior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub family: KernelFamily,
    /// Signal variance σ_f².
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    /// Constant prior mean.
    pub mean: f64,
}

impl Kernel {
    pub fn squared_exponential(variance: f64, lengthscales: Vec<f64>, mean: f64) -> Result<Self> {
        let k = Kernel {
            family: KernelFamily::SquaredExponential,
            variance,
            lengthscales,
            mean,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one lengthscale".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!("lengthscale must be positive, got {l}")));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidArgument("kernel mean must be finite".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// k(a, b) for two points given as slices.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        self.variance * (-0.5 * r2).exp()
    }

    /// Scaled squared distance between row `i` of `x1` and row `j` of `x2`.
    fn scaled_dist2(&self, x1: &DMatrix<f64>, i: usize, x2: &DMatrix<f64>, j: usize) -> f64 {
        self.lengthscales
            .iter()
            .enumerate()
            .map(|(a, l)| {
                let t = (x1[(i, a)] - x2[(j, a)]) / l;
                t * t
            })
            .sum()
    }
}

/// Cross-covariance matrix `K(X1, X2)` with entry `(i, j) = k(x1_i, x2_j)`.
pub fn kernel_matrix(k: &Kernel, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = k.input_dim();
    if x1.ncols() != d || x2.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "kernel_matrix inputs",
            left: x1.shape(),
            right: x2.shape(),
        });
    }
    Ok(DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
        k.variance * (-0.5 * k.scaled_dist2(x1, i, x2, j)).exp()
    }))
}

/// Diagonal of `K(X, X)`; constant σ_f² for a stationary kernel.
pub fn kernel_diag(k: &Kernel, x: &DMatrix<f64>) -> Vec<f64> {
    vec![k.variance; x.nrows()]
}

/// Row `i` of an input matrix as an owned vector.
pub fn row_vec(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}
