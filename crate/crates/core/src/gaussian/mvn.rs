//! Finite-dimensional Gaussian algebra.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::linalg::{
    check_indices, chol_log_det, cholesky_jittered, complement, relative_asymmetry, solve_lower,
    solve_lower_vec, subvector, submatrix, symmetrize, DEFAULT_JITTER,
};
use crate::error::{Error, Result};

/// A multivariate normal with a cached lower factor of `cov + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
    base_jitter: f64,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_jitter(mean, cov, DEFAULT_JITTER)
    }

    /// Like [`GaussianDist::new`] with an explicit relative base jitter.
    pub fn with_jitter(mean: DVector<f64>, mut cov: DMatrix<f64>, base_jitter: f64) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "mean length vs covariance shape",
                left: (mean.len(), 1),
                right: cov.shape(),
            });
        }
        let asym = relative_asymmetry(&cov);
        if asym > 1e-10 {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        symmetrize(&mut cov);
        let (chol, jitter) = cholesky_jittered(&cov, base_jitter)?;
        Ok(GaussianDist {
            mean,
            cov,
            chol,
            jitter,
            base_jitter,
        })
    }

    pub fn standard(n: usize) -> Self {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower factor of `cov + jitter·I`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Absolute jitter added before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn base_jitter(&self) -> f64 {
        self.base_jitter
    }

    pub fn log_det(&self) -> f64 {
        chol_log_det(&self.chol)
    }

    fn rebuild(&self, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_jitter(mean, cov, self.base_jitter)
    }

    /// Affine conditional of the `u` block given the disjoint `v` block.
    pub fn conditional_affine(&self, u: &[usize], v: &[usize]) -> Result<ConditionalGaussian> {
        check_partition(u, v, self.dim())?;
        let s_vv = submatrix(&self.cov, v, v);
        let s_uv = submatrix(&self.cov, u, v);
        let s_uu = submatrix(&self.cov, u, u);
        let (l_v, _) = cholesky_jittered(&s_vv, self.base_jitter)?;
        // gain = S_uv S_vv⁻¹, via W = L_v⁻¹ S_vu
        let w = solve_lower(&l_v, &s_uv.transpose());
        let gain = super::linalg::solve_lower_t(&l_v, &w).transpose();
        let mut cov = s_uu - w.transpose() * &w;
        symmetrize(&mut cov);
        let mu_u = subvector(&self.mean, u);
        let mu_v = subvector(&self.mean, v);
        let offset = mu_u - &gain * mu_v;
        ConditionalGaussian::new(gain, offset, cov)
    }
}

fn check_partition(u: &[usize], v: &[usize], dim: usize) -> Result<()> {
    let all: Vec<usize> = u.iter().chain(v).copied().collect();
    check_indices(&all, dim).map_err(|e| Error::InvalidPartition(e.to_string()))?;
    if u.is_empty() || v.is_empty() {
        return Err(Error::InvalidPartition(format!(
            "blocks of size {} and {} must both be nonempty",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

/// `f_U | f_V = v ~ N(offset + gain·v, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl ConditionalGaussian {
    pub fn new(gain: DMatrix<f64>, offset: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != offset.len() || cov.shape() != (offset.len(), offset.len()) {
            return Err(Error::DimensionMismatch {
                what: "conditional gain/offset/covariance",
                left: gain.shape(),
                right: cov.shape(),
            });
        }
        Ok(ConditionalGaussian { gain, offset, cov })
    }

    /// Dimension of the conditioned block.
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Dimension of the conditioning block.
    pub fn given_dim(&self) -> usize {
        self.gain.ncols()
    }

    /// Same conditional mean with the covariance multiplied by `factor`.
    pub fn scale_cov(&self, factor: f64) -> Self {
        ConditionalGaussian {
            gain: self.gain.clone(),
            offset: self.offset.clone(),
            cov: &self.cov * factor,
        }
    }

    /// Joint of `(f_V, f_U)` when `f_V ~ marginal`; the marginal block comes first.
    pub fn joint_with(&self, marginal: &GaussianDist) -> Result<GaussianDist> {
        if marginal.dim() != self.given_dim() {
            return Err(Error::DimensionMismatch {
                what: "conditional vs marginal",
                left: self.gain.shape(),
                right: (marginal.dim(), marginal.dim()),
            });
        }
        let nv = marginal.dim();
        let nu = self.dim();
        let sigma = marginal.cov();
        let cross = &self.gain * sigma;
        let lower = &cross * self.gain.transpose() + &self.cov;
        let mut cov = DMatrix::zeros(nv + nu, nv + nu);
        cov.view_mut((0, 0), (nv, nv)).copy_from(sigma);
        cov.view_mut((nv, 0), (nu, nv)).copy_from(&cross);
        cov.view_mut((0, nv), (nv, nu)).copy_from(&cross.transpose());
        cov.view_mut((nv, nv), (nu, nu)).copy_from(&lower);
        let mut mean = DVector::zeros(nv + nu);
        mean.rows_mut(0, nv).copy_from(marginal.mean());
        mean.rows_mut(nv, nu)
            .copy_from(&(&self.offset + &self.gain * marginal.mean()));
        // Factor blockwise so the leading block is exactly the marginal's factor.
        let mut cond_cov = self.cov.clone();
        symmetrize(&mut cond_cov);
        let (lc, cond_jitter) = cholesky_jittered(&cond_cov, marginal.base_jitter())?;
        let mut chol = DMatrix::zeros(nv + nu, nv + nu);
        chol.view_mut((0, 0), (nv, nv)).copy_from(marginal.chol());
        chol.view_mut((nv, 0), (nu, nv)).copy_from(&(&self.gain * marginal.chol()));
        chol.view_mut((nv, nv), (nu, nu)).copy_from(&lc);
        Ok(GaussianDist {
            mean,
            cov,
            chol,
            jitter: marginal.jitter().max(cond_jitter),
            base_jitter: marginal.base_jitter(),
        })
    }
}

/// `KL(q ‖ p)` between two Gaussians of equal dimension, through Cholesky
/// solves only.
pub fn mvn_kl(q: &GaussianDist, p: &GaussianDist) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            what: "mvn_kl dimensions",
            left: (q.dim(), q.dim()),
            right: (p.dim(), p.dim()),
        });
    }
    let n = q.dim() as f64;
    let lp = p.chol();
    let trace = solve_lower(lp, q.chol()).norm_squared();
    let diff = p.mean() - q.mean();
    let maha = solve_lower_vec(lp, &diff).norm_squared();
    let kl = 0.5 * (trace + maha - n + p.log_det() - q.log_det());
    Ok(kl.max(0.0))
}

pub fn mvn_logpdf(p: &GaussianDist, x: &DVector<f64>) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            what: "mvn_logpdf point",
            left: (x.len(), 1),
            right: (p.dim(), 1),
        });
    }
    let z = solve_lower_vec(p.chol(), &(x - p.mean()));
    let n = p.dim() as f64;
    Ok(-0.5 * (n * (2.0 * PI).ln() + p.log_det() + z.norm_squared()))
}

pub fn mvn_marginal(p: &GaussianDist, idx: &[usize]) -> Result<GaussianDist> {
    check_indices(idx, p.dim())?;
    p.rebuild(subvector(p.mean(), idx), submatrix(p.cov(), idx, idx))
}

/// Distribution of the unobserved coordinates (in increasing index order)
/// given the values at `obs_idx`.
pub fn mvn_condition(
    joint: &GaussianDist,
    obs_idx: &[usize],
    obs_val: &DVector<f64>,
) -> Result<GaussianDist> {
    check_indices(obs_idx, joint.dim())?;
    if obs_val.len() != obs_idx.len() {
        return Err(Error::DimensionMismatch {
            what: "observed values vs observed indices",
            left: (obs_val.len(), 1),
            right: (obs_idx.len(), 1),
        });
    }
    let rest = complement(obs_idx, joint.dim());
    if rest.is_empty() {
        return Err(Error::InvalidArgument("every coordinate is observed".into()));
    }
    let cond = joint.conditional_affine(&rest, obs_idx)?;
    let mean = &cond.offset + &cond.gain * obs_val;
    joint.rebuild(mean, cond.cov)
}

/// `E_{v ~ q_v}[ KL(q(u|v) ‖ p(u|v)) ]` for two affine Gaussian conditionals.
pub fn expected_conditional_kl(
    q_cond: &ConditionalGaussian,
    p_cond: &ConditionalGaussian,
    q_v: &GaussianDist,
    base_jitter: f64,
) -> Result<f64> {
    if q_cond.gain.shape() != p_cond.gain.shape() || q_cond.given_dim() != q_v.dim() {
        return Err(Error::DimensionMismatch {
            what: "conditional shapes",
            left: q_cond.gain.shape(),
            right: p_cond.gain.shape(),
        });
    }
    let k = q_cond.dim() as f64;
    let (lq, _) = cholesky_jittered(&q_cond.cov, base_jitter)?;
    let (lp, _) = cholesky_jittered(&p_cond.cov, base_jitter)?;
    let trace = solve_lower(&lp, &lq).norm_squared();
    let dgain = &q_cond.gain - &p_cond.gain;
    let dmean = (&q_cond.offset - &p_cond.offset) + &dgain * q_v.mean();
    let maha_mean = solve_lower_vec(&lp, &dmean).norm_squared();
    let maha_spread = solve_lower(&lp, &(&dgain * q_v.chol())).norm_squared();
    let kl = 0.5 * (trace - k + chol_log_det(&lp) - chol_log_det(&lq) + maha_mean + maha_spread);
    Ok(kl.max(0.0))
}
