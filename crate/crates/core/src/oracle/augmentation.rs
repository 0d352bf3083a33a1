//! Augmenting the index set with extra variables, and when doing so leaves
//! the variational objective unchanged.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::model::{exact_posterior, ApproxPosterior, FiniteModel};
use crate::error::{Error, Result};
use crate::gaussian::linalg::{cholesky_jittered, solve_lower, solve_lower_t, symmetrize};
use crate::gaussian::mvn::expected_conditional_kl;
use crate::gaussian::{kernel_matrix, mvn_kl, ConditionalGaussian, GaussianDist};

/// Factor applied to the prior conditional covariance to build the
/// standard mismatched conditional.
pub const MISMATCH_COV_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugmentationGap {
    /// KL on the union of the index set and the augmentation set.
    pub kl_union: f64,
    /// KL on the index set alone.
    pub kl_x: f64,
    /// `kl_union - kl_x`.
    pub gap: f64,
    /// `E_{q_X}[KL(q_{A|X} ‖ p_{A|X})]` in closed form.
    pub closed_form: f64,
}

/// Marginally consistent prior conditional `p(f_A | f_X)` for extra inputs
/// `aug_inputs` under the model's kernel.
pub fn prior_conditional(m: &FiniteModel, aug_inputs: &DMatrix<f64>) -> Result<ConditionalGaussian> {
    let joint = union_prior(m, aug_inputs)?;
    let n = m.num_points();
    let x_idx: Vec<usize> = (0..n).collect();
    let a_idx: Vec<usize> = (n..n + aug_inputs.nrows()).collect();
    joint.conditional_affine(&a_idx, &x_idx)
}

/// Prior over the index set followed by the augmentation inputs.
fn union_prior(m: &FiniteModel, aug_inputs: &DMatrix<f64>) -> Result<GaussianDist> {
    if aug_inputs.ncols() != m.inputs.ncols() || aug_inputs.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            what: "augmentation inputs vs index inputs",
            left: aug_inputs.shape(),
            right: m.inputs.shape(),
        });
    }
    let n = m.num_points();
    let k = aug_inputs.nrows();
    let mut stacked = DMatrix::zeros(n + k, m.inputs.ncols());
    stacked.rows_mut(0, n).copy_from(&m.inputs);
    stacked.rows_mut(n, k).copy_from(aug_inputs);
    let cov = kernel_matrix(&m.kernel, &stacked, &stacked)?;
    GaussianDist::with_jitter(DVector::from_element(n + k, m.kernel.mean), cov, m.base_jitter())
}

fn gap_between(
    m: &FiniteModel,
    q_x: &GaussianDist,
    q_cond: &ConditionalGaussian,
    p_cond: &ConditionalGaussian,
) -> Result<AugmentationGap> {
    if q_cond.gain.shape() != p_cond.gain.shape() {
        return Err(Error::DimensionMismatch {
            what: "augmentation conditional",
            left: q_cond.gain.shape(),
            right: p_cond.gain.shape(),
        });
    }
    let post = exact_posterior(m)?;
    let kl_x = mvn_kl(q_x, &post)?;
    let q_union = q_cond.joint_with(q_x)?;
    let p_union = p_cond.joint_with(&post)?;
    let kl_union = mvn_kl(&q_union, &p_union)?;
    let closed_form = expected_conditional_kl(q_cond, p_cond, q_x, m.base_jitter())?;
    Ok(AugmentationGap {
        kl_union,
        kl_x,
        gap: kl_union - kl_x,
        closed_form,
    })
}

/// Gap between the union-set and index-set divergences when the
/// variational distribution uses `q_cond` for `f_A | f_X`. The posterior
/// side always uses the prior conditional, since the data only touch `X`.
pub fn augmentation_gap(
    m: &FiniteModel,
    q: &ApproxPosterior,
    aug_inputs: &DMatrix<f64>,
    q_cond: &ConditionalGaussian,
) -> Result<AugmentationGap> {
    let p_cond = prior_conditional(m, aug_inputs)?;
    if q_cond.given_dim() != m.num_points() || q_cond.dim() != aug_inputs.nrows() {
        return Err(Error::DimensionMismatch {
            what: "conditional specification",
            left: q_cond.gain.shape(),
            right: (aug_inputs.nrows(), m.num_points()),
        });
    }
    let all: Vec<usize> = (0..m.num_points()).collect();
    let q_x = m.extension(q, &all)?;
    gap_between(m, &q_x, q_cond, &p_cond)
}

/// The standard mismatched conditional: prior conditional mean with the
/// covariance scaled by [`MISMATCH_COV_SCALE`].
pub fn mismatched_conditional(m: &FiniteModel, aug_inputs: &DMatrix<f64>) -> Result<ConditionalGaussian> {
    Ok(prior_conditional(m, aug_inputs)?.scale_cov(MISMATCH_COV_SCALE))
}

/// Gap for the usual construction on an augmented model: `q(f_A)` is free
/// and `f_X | f_A` follows the prior conditional. Unless `q(f_A)` equals
/// the prior, the induced `q(f_A | f_X)` differs from `p(f_A | f_X)`.
pub fn induced_augmentation_gap(
    m: &FiniteModel,
    aug_inputs: &DMatrix<f64>,
    q_a: &GaussianDist,
) -> Result<AugmentationGap> {
    let n = m.num_points();
    let k = aug_inputs.nrows();
    if q_a.dim() != k {
        return Err(Error::DimensionMismatch {
            what: "q(f_A) vs augmentation inputs",
            left: (q_a.dim(), 1),
            right: (k, 1),
        });
    }
    let union = union_prior(m, aug_inputs)?;
    let x_idx: Vec<usize> = (0..n).collect();
    let a_idx: Vec<usize> = (n..n + k).collect();
    let x_given_a = union.conditional_affine(&x_idx, &a_idx)?;
    // (f_A, f_X) under q
    let q_joint = x_given_a.joint_with(q_a)?;
    let a_pos: Vec<usize> = (0..k).collect();
    let x_pos: Vec<usize> = (k..k + n).collect();
    let q_cond = q_joint.conditional_affine(&a_pos, &x_pos)?;
    let q_x = crate::gaussian::mvn_marginal(&q_joint, &x_pos)?;
    let p_cond = union.conditional_affine(&a_idx, &x_idx)?;
    gap_between(m, &q_x, &q_cond, &p_cond)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardReport {
    /// `q(u)` the construction starts from; by construction the `A`
    /// marginal of the joint.
    pub q_a_from_construction: GaussianDist,
    /// Image of the constructed `q(f_X)` under `u = A f`.
    pub q_a_pushforward: GaussianDist,
    /// Largest entrywise difference between the two, means and covariances.
    pub max_diff: f64,
    /// Largest entry of the mean and covariance of `u - A f` under the
    /// constructed joint; zero means `q(u | f_X)` is the point mass at `A f`.
    pub residual: f64,
    /// `KL(q(f_X) ‖ p(f_X))`.
    pub kl_index: f64,
    /// Union-set divergence. Since `q(f_X | u)` is the prior conditional,
    /// the chain rule with `u` first leaves only `KL(q(u) ‖ p(u))`.
    pub kl_union: f64,
}

/// Checks that for a deterministic linear augmentation `u = A f_X`, the
/// approximation `q(f_X, u) = p(f_X | u) q(u)` has `q(u)` as the push-forward
/// of its own `f_X` marginal.
pub fn pushforward_check(prior_x: &GaussianDist, q_a: &GaussianDist, a_map: &DMatrix<f64>) -> Result<PushforwardReport> {
    let n = prior_x.dim();
    let k = a_map.nrows();
    if a_map.ncols() != n || q_a.dim() != k {
        return Err(Error::DimensionMismatch {
            what: "linear map vs distributions",
            left: a_map.shape(),
            right: (q_a.dim(), n),
        });
    }
    check_full_row_rank(a_map)?;
    let jitter = prior_x.base_jitter();
    let sigma = prior_x.cov();
    let mu = prior_x.mean();

    // p(u) = N(Aμ, AΣAᵀ)
    let sigma_at = sigma * a_map.transpose();
    let mut p_aa = a_map * &sigma_at;
    symmetrize(&mut p_aa);
    let p_a = GaussianDist::with_jitter(a_map * mu, p_aa.clone(), jitter)?;
    let (l_aa, _) = cholesky_jittered(&p_aa, jitter)?;
    // G = Σ Aᵀ (AΣAᵀ)⁻¹, the gain of f_X given u
    let gain = solve_lower_t(&l_aa, &solve_lower(&l_aa, &sigma_at.transpose())).transpose();
    let mut resid_cov = sigma - &gain * sigma_at.transpose();
    symmetrize(&mut resid_cov);

    let shift = q_a.mean() - a_map * mu;
    let qx_mean = mu + &gain * &shift;
    let mut qx_cov = &resid_cov + &gain * q_a.cov() * gain.transpose();
    symmetrize(&mut qx_cov);
    let q_x = GaussianDist::with_jitter(qx_mean, qx_cov, jitter)?;

    let mut push_cov = a_map * q_x.cov() * a_map.transpose();
    symmetrize(&mut push_cov);
    let q_a_pushforward = GaussianDist::with_jitter(a_map * q_x.mean(), push_cov, jitter)?;
    let max_diff = (q_a_pushforward.mean() - q_a.mean())
        .amax()
        .max((q_a_pushforward.cov() - q_a.cov()).amax());

    // u - A f_X = (I - AG)(u - Aμ) - A e
    let defect = DMatrix::identity(k, k) - a_map * &gain;
    let r_mean = &defect * &shift;
    let r_cov = &defect * q_a.cov() * defect.transpose() + a_map * &resid_cov * a_map.transpose();
    let residual = r_mean.amax().max(r_cov.amax());

    Ok(PushforwardReport {
        q_a_from_construction: q_a.clone(),
        q_a_pushforward,
        max_diff,
        residual,
        kl_index: mvn_kl(&q_x, prior_x)?,
        kl_union: mvn_kl(q_a, &p_a)?,
    })
}

fn check_full_row_rank(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() > a.ncols() {
        return Err(Error::RankDeficient { pivot: 0.0 });
    }
    let r = a.transpose().qr().r();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let pivot = r.diagonal().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if pivot <= 1e-10 * scale {
        return Err(Error::RankDeficient { pivot });
    }
    Ok(())
}
