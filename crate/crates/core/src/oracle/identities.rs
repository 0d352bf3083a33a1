use serde::Serialize;

use super::model::{exact_posterior, log_marginal_likelihood, ApproxPosterior, FiniteModel};
use crate::error::{Error, Result};
use crate::gaussian::kernel::row_vec;
use crate::gaussian::mvn::expected_conditional_kl;
use crate::gaussian::{mvn_kl, mvn_marginal, GaussianDist};
use crate::interdomain::InducingFeature;
use crate::svgp::{elbo, Likelihood, SvgpState};

/// `KL[q(f_{D∖Z}, f_Z) ‖ p(f_{D∖Z}, f_Z | Y)]` on the union of data and
/// inducing indices.
pub fn titsias_kl(m: &FiniteModel, q: &ApproxPosterior) -> Result<f64> {
    let u = m.data_and_inducing();
    let q_u = m.extension(q, &u)?;
    let post = mvn_marginal(&exact_posterior(m)?, &u)?;
    mvn_kl(&q_u, &post)
}

/// KL between the extended variational distribution over the whole index
/// set and the exact posterior.
pub fn full_kl(m: &FiniteModel, q: &ApproxPosterior) -> Result<f64> {
    let all: Vec<usize> = (0..m.num_points()).collect();
    let q_x = m.extension(q, &all)?;
    mvn_kl(&q_x, &exact_posterior(m)?)
}

/// KL between the data-index marginals of the extended variational
/// distribution and the posterior. Never exceeds [`full_kl`]; equal to it
/// when the inducing indices lie inside the data indices.
pub fn data_marginal_kl(m: &FiniteModel, q: &ApproxPosterior) -> Result<f64> {
    let q_d = m.extension(q, &m.data)?;
    let post = mvn_marginal(&exact_posterior(m)?, &m.data)?;
    mvn_kl(&q_d, &post)
}

/// The sparse-GP state equivalent to `(m, q)`: point features at the
/// inducing inputs and Gaussian noise.
pub fn svgp_state(m: &FiniteModel, q: &ApproxPosterior) -> Result<SvgpState> {
    let features = m
        .inducing
        .iter()
        .map(|&i| InducingFeature::point(row_vec(&m.inputs, i)))
        .collect();
    SvgpState::new(
        features,
        q.q_u.mean().clone(),
        q.q_chol.clone(),
        m.kernel.clone(),
        Likelihood::GaussianNoise { noise_var: m.noise_var },
    )?
    .with_jitter(m.base_jitter())
}

/// Three routes to the same divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub full: f64,
    pub titsias: f64,
    /// `log p(Y) - elbo`.
    pub elbo_gap: f64,
    pub max_abs_diff: f64,
}

impl EquivalenceReport {
    /// Largest pairwise difference relative to `1 + |full|`.
    pub fn relative_diff(&self) -> f64 {
        self.max_abs_diff / (1.0 + self.full.abs())
    }
}

pub fn check_finite_equivalence(m: &FiniteModel, q: &ApproxPosterior) -> Result<EquivalenceReport> {
    let full = full_kl(m, q)?;
    let titsias = titsias_kl(m, q)?;
    let state = svgp_state(m, q)?;
    let elbo_gap = log_marginal_likelihood(m)? - elbo(&state, &m.data_inputs(), &m.y)?;
    let max_abs_diff = (full - titsias)
        .abs()
        .max((full - elbo_gap).abs())
        .max((titsias - elbo_gap).abs());
    Ok(EquivalenceReport {
        full,
        titsias,
        elbo_gap,
        max_abs_diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRuleTerms {
    /// `E_{q_V}[KL(q_{U|V} ‖ p_{U|V})]`
    pub conditional: f64,
    /// `KL(q_V ‖ p_V)`
    pub marginal: f64,
}

impl ChainRuleTerms {
    pub fn total(&self) -> f64 {
        self.conditional + self.marginal
    }
}

/// Splits `KL(q ‖ p)` into the expected conditional divergence of the `u`
/// block given the `v` block plus the divergence of the `v` marginals.
pub fn kl_chain_rule_decompose(
    joint_q: &GaussianDist,
    joint_p: &GaussianDist,
    u: &[usize],
    v: &[usize],
) -> Result<ChainRuleTerms> {
    if joint_q.dim() != joint_p.dim() {
        return Err(Error::DimensionMismatch {
            what: "chain rule joints",
            left: (joint_q.dim(), joint_q.dim()),
            right: (joint_p.dim(), joint_p.dim()),
        });
    }
    if u.len() + v.len() != joint_q.dim() {
        return Err(Error::InvalidPartition(format!(
            "blocks of size {} and {} do not cover {} indices",
            u.len(),
            v.len(),
            joint_q.dim()
        )));
    }
    let q_cond = joint_q.conditional_affine(u, v)?;
    let p_cond = joint_p.conditional_affine(u, v)?;
    let q_v = mvn_marginal(joint_q, v)?;
    let p_v = mvn_marginal(joint_p, v)?;
    Ok(ChainRuleTerms {
        conditional: expected_conditional_kl(&q_cond, &p_cond, &q_v, joint_q.base_jitter())?,
        marginal: mvn_kl(&q_v, &p_v)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Kernel;
    use crate::oracle::random::{random_gaussian_pair, random_instance, Overlap, ORACLE_JITTER};
    use crate::svgp::{collapsed_bound_with_jitter, collapsed_optimal_q_with_jitter};
    use nalgebra::{DMatrix, DVector};

    fn line_model(n: usize, data: Vec<usize>, inducing: Vec<usize>) -> FiniteModel {
        let k = Kernel::squared_exponential(1.2, vec![0.9], 0.3).unwrap();
        let x = DMatrix::from_fn(n, 1, |i, _| 0.45 * i as f64);
        let y = DVector::from_fn(data.len(), |i, _| (1.3 * i as f64).sin());
        FiniteModel::with_jitter(k, x, data, inducing, y, 0.2, ORACLE_JITTER).unwrap()
    }

    fn collapsed_q(m: &FiniteModel) -> ApproxPosterior {
        let feats = svgp_state(m, &m.prior_approx().unwrap()).unwrap().features;
        let (mean, chol) =
            collapsed_optimal_q_with_jitter(&feats, &m.kernel, &m.data_inputs(), &m.y, m.noise_var, ORACLE_JITTER)
                .unwrap();
        ApproxPosterior::from_chol(mean, chol).unwrap()
    }

    #[test]
    fn posterior_on_data_gives_zero() {
        let m = line_model(4, vec![0, 1, 2, 3], vec![0, 1, 2, 3]);
        let q = m.posterior_approx().unwrap();
        assert!(titsias_kl(&m, &q).unwrap().abs() < 1e-9);
        assert!(full_kl(&m, &q).unwrap().abs() < 1e-9);
    }

    #[test]
    fn prior_q_is_strictly_worse() {
        let m = line_model(6, vec![0, 2, 4, 5], vec![1, 3]);
        let q = m.prior_approx().unwrap();
        assert!(titsias_kl(&m, &q).unwrap() > 1e-3);
    }

    #[test]
    fn titsias_matches_full_on_random_instance() {
        let (m, q) = random_instance(11, Overlap::Disjoint).unwrap();
        let r = check_finite_equivalence(&m, &q).unwrap();
        assert!(r.relative_diff() <= 1e-8, "{r:?}");
        assert!((r.full - r.titsias).abs() <= 1e-9 * (1.0 + r.full.abs()));
    }

    #[test]
    fn unobserved_points_leave_full_kl_unchanged() {
        let small = line_model(5, vec![0, 2, 4], vec![1, 3]);
        let q = collapsed_q(&small).clone();
        let q = ApproxPosterior::from_chol(q.q_u.mean() * 0.8, q.q_chol.clone() * 1.3).unwrap();
        let before = full_kl(&small, &q).unwrap();

        let mut inputs = DMatrix::zeros(8, 1);
        inputs.rows_mut(0, 5).copy_from(&small.inputs);
        for (r, v) in [0.2, 1.1, 2.5].iter().enumerate() {
            inputs[(5 + r, 0)] = *v;
        }
        let big = FiniteModel::with_jitter(
            small.kernel.clone(),
            inputs,
            small.data.clone(),
            small.inducing.clone(),
            small.y.clone(),
            small.noise_var,
            ORACLE_JITTER,
        )
        .unwrap();
        let after = full_kl(&big, &q).unwrap();
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn collapsed_q_makes_all_three_equal_the_slack() {
        let m = line_model(7, vec![0, 1, 3, 5, 6], vec![2, 4]);
        let q = collapsed_q(&m);
        let r = check_finite_equivalence(&m, &q).unwrap();
        let feats = svgp_state(&m, &q).unwrap().features;
        let bound =
            collapsed_bound_with_jitter(&feats, &m.kernel, &m.data_inputs(), &m.y, m.noise_var, ORACLE_JITTER)
                .unwrap();
        let slack = log_marginal_likelihood(&m).unwrap() - bound;
        for v in [r.full, r.titsias, r.elbo_gap] {
            assert!((v - slack).abs() <= 1e-8 * (1.0 + slack.abs()), "{v} vs {slack}");
        }
    }

    #[test]
    fn collapsed_q_with_inducing_on_data_is_tight() {
        let m = line_model(5, vec![0, 1, 2, 3, 4], vec![0, 1, 2, 3, 4]);
        let r = check_finite_equivalence(&m, &collapsed_q(&m)).unwrap();
        assert!(r.full.abs() < 1e-8 && r.titsias.abs() < 1e-8 && r.elbo_gap.abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn chain_rule_equal_distributions() {
        let (q, _) = random_gaussian_pair(3, 4).unwrap();
        let t = kl_chain_rule_decompose(&q, &q, &[0, 2], &[1, 3]).unwrap();
        assert!(t.conditional.abs() < 1e-12 && t.marginal.abs() < 1e-12);
    }

    #[test]
    fn chain_rule_independent_block_with_equal_marginal() {
        let p_cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.5, 0.0, 0.0, 0.0, 0.7]);
        let q_cov = DMatrix::from_row_slice(3, 3, &[0.6, -0.1, 0.0, -0.1, 0.9, 0.0, 0.0, 0.0, 0.7]);
        let p = GaussianDist::new(DVector::from_vec(vec![0.0, 0.0, 2.0]), p_cov).unwrap();
        let q = GaussianDist::new(DVector::from_vec(vec![0.5, -0.4, 2.0]), q_cov).unwrap();
        let t = kl_chain_rule_decompose(&q, &p, &[0, 1], &[2]).unwrap();
        assert!(t.marginal.abs() < 1e-9);
        assert!((t.conditional - mvn_kl(&q, &p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn chain_rule_random_five_dimensional() {
        let (q, p) = random_gaussian_pair(99, 5).unwrap();
        let t = kl_chain_rule_decompose(&q, &p, &[4, 0, 2], &[1, 3]).unwrap();
        assert!((t.total() - mvn_kl(&q, &p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn chain_rule_rejects_bad_partitions() {
        let (q, p) = random_gaussian_pair(1, 4).unwrap();
        assert!(matches!(
            kl_chain_rule_decompose(&q, &p, &[0, 1], &[2]),
            Err(Error::InvalidPartition(_))
        ));
        assert!(kl_chain_rule_decompose(&q, &p, &[0, 1], &[1, 2, 3]).is_err());
        assert!(kl_chain_rule_decompose(&q, &p, &[0, 1, 2, 3], &[]).is_err());
    }

    #[test]
    fn data_marginal_equals_full_only_when_inducing_inside_data() {
        let inside = line_model(7, vec![0, 2, 3, 5], vec![2, 5]);
        let q = ApproxPosterior::from_chol(
            DVector::from_vec(vec![0.1, -0.4]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.2, 0.4]),
        )
        .unwrap();
        let (d, f) = (data_marginal_kl(&inside, &q).unwrap(), full_kl(&inside, &q).unwrap());
        assert!((d - f).abs() < 1e-9, "{d} vs {f}");

        let outside = inside.with_inducing(vec![1, 4]).unwrap();
        let (d, f) = (data_marginal_kl(&outside, &q).unwrap(), full_kl(&outside, &q).unwrap());
        assert!(f - d > 1e-3, "{d} vs {f}");
    }
}
