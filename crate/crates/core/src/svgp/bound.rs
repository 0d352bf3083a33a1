//! Uncollapsed ELBO and the collapsed bound for Gaussian noise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::likelihood::{Likelihood, DEFAULT_GH_ORDER};
use super::state::SvgpState;
use crate::error::{Error, Result};
use crate::gaussian::kernel::kernel_diag;
use crate::gaussian::linalg::{cholesky_jittered, chol_log_det, solve_lower, solve_lower_vec, DEFAULT_JITTER};
use crate::gaussian::{mvn_kl, Kernel};
use crate::interdomain::{assemble_kuf, assemble_kuu, assemble_mean, InducingFeature};
use crate::quadrature::gauss_hermite;

fn check_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "inputs vs observations",
            left: x.shape(),
            right: (y.len(), 1),
        });
    }
    Ok(())
}

/// `Σ_i E_{q(f_i)}[log p(y_i | f_i)]` with a Gauss–Hermite rule of `order`
/// nodes for the non-conjugate likelihoods.
pub fn expected_log_lik(s: &SvgpState, x: &DMatrix<f64>, y: &DVector<f64>, order: usize) -> Result<f64> {
    check_data(x, y)?;
    let rule = gauss_hermite(order)?;
    let pred = s.predictive_marginals(x)?;
    Ok(pred
        .mean
        .iter()
        .zip(&pred.var)
        .zip(y.iter())
        .map(|((m, v), yi)| s.likelihood.variational_expectation(*m, *v, *yi, &rule))
        .sum())
}

/// `E_q[log p(Y | f)] - KL(q(u) ‖ p(u))`.
pub fn elbo(s: &SvgpState, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    elbo_with_order(s, x, y, DEFAULT_GH_ORDER)
}

pub fn elbo_with_order(s: &SvgpState, x: &DMatrix<f64>, y: &DVector<f64>, order: usize) -> Result<f64> {
    let ell = expected_log_lik(s, x, y, order)?;
    let kl = mvn_kl(&s.q_u()?, &s.p_u()?)?;
    Ok(ell - kl)
}

/// Shared pieces of the collapsed computations.
struct Collapsed {
    l: DMatrix<f64>,
    /// `L⁻¹ K_uf / σ`
    a: DMatrix<f64>,
    /// Lower factor of `I + A Aᵀ`.
    l_b: DMatrix<f64>,
    resid: DVector<f64>,
    mu_u: DVector<f64>,
}

fn collapsed_parts(
    features: &[InducingFeature],
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    jitter: f64,
) -> Result<Collapsed> {
    check_data(x, y)?;
    Likelihood::GaussianNoise { noise_var }.validate()?;
    let kuu = assemble_kuu(features, kernel)?;
    let kuf = assemble_kuf(features, kernel, x)?;
    let (l, _) = cholesky_jittered(&kuu, jitter)?;
    let a = solve_lower(&l, &kuf) / noise_var.sqrt();
    let m = features.len();
    let b = DMatrix::identity(m, m) + &a * a.transpose();
    // B ⪰ I, so jitter is only a fallback
    let l_b = match nalgebra::Cholesky::new(b.clone()) {
        Some(c) => c.unpack(),
        None => cholesky_jittered(&b, jitter)?.0,
    };
    let resid = y.map(|v| v - kernel.mean);
    Ok(Collapsed {
        l,
        a,
        l_b,
        resid,
        mu_u: assemble_mean(features, kernel),
    })
}

/// Optimal Gaussian `q(u)` for Gaussian noise, returned as `(mean, lower factor)`.
pub fn collapsed_optimal_q(
    features: &[InducingFeature],
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    collapsed_optimal_q_with_jitter(features, kernel, x, y, noise_var, DEFAULT_JITTER)
}

pub fn collapsed_optimal_q_with_jitter(
    features: &[InducingFeature],
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    jitter: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let c = collapsed_parts(features, kernel, x, y, noise_var, jitter)?;
    // S = L B⁻¹ Lᵀ = R Rᵀ with R = L L_B⁻ᵀ
    let r = c.l_b
        .solve_lower_triangular(&c.l.transpose())
        .expect("triangular factor has a zero pivot")
        .transpose();
    let upper = r.transpose().qr().r();
    let m = features.len();
    let mut chol = upper.transpose();
    for i in 0..m {
        if chol[(i, i)] < 0.0 {
            for k in 0..m {
                chol[(k, i)] = -chol[(k, i)];
            }
        }
    }
    // m = μ_u + σ⁻¹ L B⁻¹ A r
    let ar = &c.a * &c.resid;
    let binv_ar = c.l_b
        .tr_solve_lower_triangular(&solve_lower_vec(&c.l_b, &ar))
        .expect("triangular factor has a zero pivot");
    let mean = &c.mu_u + (&c.l * binv_ar) / noise_var.sqrt();
    Ok((mean, chol))
}

/// `log N(Y | μ, Q_XX + σ²I) - tr(K_XX - Q_XX) / (2σ²)`.
pub fn collapsed_bound(
    features: &[InducingFeature],
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> Result<f64> {
    collapsed_bound_with_jitter(features, kernel, x, y, noise_var, DEFAULT_JITTER)
}

pub fn collapsed_bound_with_jitter(
    features: &[InducingFeature],
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    jitter: f64,
) -> Result<f64> {
    let c = collapsed_parts(features, kernel, x, y, noise_var, jitter)?;
    let n = y.len() as f64;
    let proj = solve_lower_vec(&c.l_b, &(&c.a * &c.resid));
    let quad = (c.resid.norm_squared() - proj.norm_squared()) / noise_var;
    let log_det = n * noise_var.ln() + chol_log_det(&c.l_b);
    let trace = kernel_diag(kernel, x).iter().sum::<f64>() - noise_var * c.a.norm_squared();
    Ok(-0.5 * (n * (2.0 * PI).ln() + log_det + quad) - 0.5 * trace / noise_var)
}

/// State holding the collapsed optimum for Gaussian noise.
pub fn collapsed_state(
    features: Vec<InducingFeature>,
    kernel: Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> Result<SvgpState> {
    let (m, l) = collapsed_optimal_q(&features, &kernel, x, y, noise_var)?;
    SvgpState::new(features, m, l, kernel, Likelihood::GaussianNoise { noise_var })
}
