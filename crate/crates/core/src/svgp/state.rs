use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::likelihood::Likelihood;
use crate::error::{Error, Result};
use crate::gaussian::kernel::kernel_diag;
use crate::gaussian::linalg::{cholesky_jittered, solve_lower, solve_lower_t, DEFAULT_JITTER};
use crate::gaussian::{GaussianDist, Kernel};
use crate::interdomain::{assemble_kuf, assemble_kuu, assemble_mean, InducingFeature};

/// Sparse variational state: `q(u) = N(q_mean, q_chol·q_cholᵀ)` over the
/// inducing features, with the prior conditional carrying it to every
/// other input.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgpState {
    pub features: Vec<InducingFeature>,
    pub q_mean: DVector<f64>,
    pub q_chol: DMatrix<f64>,
    pub kernel: Kernel,
    pub likelihood: Likelihood,
    /// Relative base jitter for factorizing the prior over the features.
    pub jitter: f64,
}

/// Per-point predictive moments of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl SvgpState {
    pub fn new(
        features: Vec<InducingFeature>,
        q_mean: DVector<f64>,
        q_chol: DMatrix<f64>,
        kernel: Kernel,
        likelihood: Likelihood,
    ) -> Result<Self> {
        let s = SvgpState {
            features,
            q_mean,
            q_chol,
            kernel,
            likelihood,
            jitter: DEFAULT_JITTER,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        if !(jitter > 0.0 && jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter must be positive, got {jitter}")));
        }
        self.jitter = jitter;
        Ok(self)
    }

    /// `q(u)` equal to the prior over the features.
    pub fn from_prior(features: Vec<InducingFeature>, kernel: Kernel, likelihood: Likelihood) -> Result<Self> {
        let kuu = assemble_kuu(&features, &kernel)?;
        let (l, _) = cholesky_jittered(&kuu, DEFAULT_JITTER)?;
        let mean = assemble_mean(&features, &kernel);
        Self::new(features, mean, l, kernel, likelihood)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.features.len();
        if m == 0 {
            return Err(Error::InvalidArgument("at least one inducing feature is required".into()));
        }
        self.kernel.validate()?;
        self.likelihood.validate()?;
        for f in &self.features {
            f.validate()?;
            if f.dim() != self.kernel.input_dim() {
                return Err(Error::DimensionMismatch {
                    what: "feature dimension vs kernel",
                    left: (f.dim(), 1),
                    right: (self.kernel.input_dim(), 1),
                });
            }
        }
        if self.q_mean.len() != m || self.q_chol.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                what: "variational parameters vs feature count",
                left: (self.q_mean.len(), m),
                right: self.q_chol.shape(),
            });
        }
        for i in 0..m {
            if !(self.q_chol[(i, i)] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "q_chol diagonal entry {i} must be positive"
                )));
            }
            for j in (i + 1)..m {
                if self.q_chol[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument("q_chol must be lower triangular".into()));
                }
            }
        }
        if self.q_mean.iter().chain(self.q_chol.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("variational parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn num_inducing(&self) -> usize {
        self.features.len()
    }

    /// `S = q_chol · q_cholᵀ`.
    pub fn q_cov(&self) -> DMatrix<f64> {
        &self.q_chol * self.q_chol.transpose()
    }

    pub fn q_u(&self) -> Result<GaussianDist> {
        let mut s = self.q_cov();
        crate::gaussian::linalg::symmetrize(&mut s);
        GaussianDist::with_jitter(self.q_mean.clone(), s, self.jitter)
    }

    /// Prior over the inducing features.
    pub fn p_u(&self) -> Result<GaussianDist> {
        GaussianDist::with_jitter(
            assemble_mean(&self.features, &self.kernel),
            assemble_kuu(&self.features, &self.kernel)?,
            self.jitter,
        )
    }

    /// Predictive mean and variance of the latent function at each row of `x`.
    pub fn predictive_marginals(&self, x: &DMatrix<f64>) -> Result<Predictive> {
        let kuu = assemble_kuu(&self.features, &self.kernel)?;
        let kuf = assemble_kuf(&self.features, &self.kernel, x)?;
        let (l, _) = cholesky_jittered(&kuu, self.jitter)?;
        let mu_u = assemble_mean(&self.features, &self.kernel);
        let a = solve_lower(&l, &kuf);
        // W = Kuu⁻¹ Kuf
        let w = solve_lower_t(&l, &a);
        let resid = &self.q_mean - mu_u;
        let mean_shift = w.transpose() * resid;
        let b = self.q_chol.transpose() * &w;
        let kdiag = kernel_diag(&self.kernel, x);
        let n = x.nrows();
        let mut mean = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for j in 0..n {
            mean.push(self.kernel.mean + mean_shift[j]);
            let v = kdiag[j] - a.column(j).norm_squared() + b.column(j).norm_squared();
            var.push(v.max(0.0));
        }
        Ok(Predictive { mean, var })
    }
}
