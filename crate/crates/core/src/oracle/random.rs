//! Seeded random instances for the verification sweeps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::augmentation::{augmentation_gap, mismatched_conditional, pushforward_check};
use super::identities::{check_finite_equivalence, kl_chain_rule_decompose};
use super::model::{ApproxPosterior, FiniteModel};
use crate::error::Result;
use crate::gaussian::{kernel_matrix, mvn_kl, GaussianDist, Kernel};

pub const MAX_POINTS: usize = 12;
pub const MAX_DATA: usize = 6;
pub const MAX_INDUCING: usize = 4;

/// Relative base jitter for the random instances. Every covariance is
/// inflated by at least this much, which shifts each divergence by roughly
/// `jitter · condition number`, so it must sit well below the identity
/// tolerances.
pub const ORACLE_JITTER: f64 = 1e-16;

/// Largest prior condition number accepted for a random instance.
const MAX_CONDITION: f64 = 1e6;

/// How the inducing indices relate to the data indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Disjoint,
    Subset,
    Equal,
    Partial,
}

impl Overlap {
    pub const ALL: [Overlap; 4] = [Overlap::Disjoint, Overlap::Subset, Overlap::Equal, Overlap::Partial];

    pub fn for_seed(seed: u64) -> Self {
        Self::ALL[(seed % 4) as usize]
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn shuffled<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let e = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Random lower factor with diagonal in `[0.2, 1.2]·scale`.
pub fn random_chol<R: Rng>(rng: &mut R, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            scale * rng.random_range(0.2..1.2)
        } else if i > j {
            0.3 * scale * normal(rng)
        } else {
            0.0
        }
    })
}

/// A random finite model with `|X| ≤ 12`, `|D| ≤ 6`, `|Z| ≤ 4` and a random
/// Gaussian `q(f_Z)`.
pub fn random_instance(seed: u64, overlap: Overlap) -> Result<(FiniteModel, ApproxPosterior)> {
    let mut rng = rng(seed);
    loop {
        let d = rng.random_range(1..=2usize);
        let lengthscales: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        let kernel = Kernel::squared_exponential(
            rng.random_range(0.5..2.0),
            lengthscales,
            rng.random_range(-1.0..1.0),
        )?;
        let (n_data, n_ind) = match overlap {
            Overlap::Equal => {
                let k = rng.random_range(1..=MAX_INDUCING);
                (k, k)
            }
            Overlap::Subset => {
                let nd = rng.random_range(2..=MAX_DATA);
                (nd, rng.random_range(1..nd.min(MAX_INDUCING + 1)))
            }
            _ => (rng.random_range(1..=MAX_DATA), rng.random_range(1..=MAX_INDUCING)),
        };
        let n_extra = rng.random_range(0..=3usize);
        let n = (n_data + n_ind + n_extra).min(MAX_POINTS);

        let order = shuffled(&mut rng, n);
        let data: Vec<usize> = order[..n_data].to_vec();
        let inducing: Vec<usize> = match overlap {
            Overlap::Equal => data.clone(),
            Overlap::Subset => data[..n_ind].to_vec(),
            Overlap::Disjoint => order[n_data..n_data + n_ind].to_vec(),
            Overlap::Partial => {
                let shared = rng.random_range(0..=n_ind.min(n_data));
                let mut z: Vec<usize> = data[..shared].to_vec();
                z.extend_from_slice(&order[n_data..n_data + (n_ind - shared)]);
                z
            }
        };

        let inputs = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..3.0));
        let cov = kernel_matrix(&kernel, &inputs, &inputs)?;
        if condition_number(&cov) > MAX_CONDITION {
            continue;
        }
        let noise_var = rng.random_range(0.05..0.5);
        let y = DVector::from_fn(n_data, |_, _| kernel.mean + normal(&mut rng));
        let model = FiniteModel::with_jitter(kernel.clone(), inputs, data, inducing, y, noise_var, ORACLE_JITTER)?;

        let m = model.inducing.len();
        let mean = DVector::from_fn(m, |_, _| kernel.mean + 0.7 * normal(&mut rng));
        let chol = random_chol(&mut rng, m, kernel.variance.sqrt());
        let q = ApproxPosterior::from_chol(mean, chol)?;
        return Ok((model, q));
    }
}

/// A random pair of Gaussians of dimension `n`.
pub fn random_gaussian_pair(seed: u64, n: usize) -> Result<(GaussianDist, GaussianDist)> {
    let mut rng = rng(seed);
    let mut one = || -> Result<GaussianDist> {
        let b = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let cov = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
        let mean = DVector::from_fn(n, |_, _| normal(&mut rng));
        GaussianDist::with_jitter(mean, cov, ORACLE_JITTER)
    };
    Ok((one()?, one()?))
}

/// One row of the verification report.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub instance_seed: u64,
    pub overlap: Overlap,
    pub full_kl: f64,
    pub titsias_kl: f64,
    pub elbo_gap: f64,
    pub equivalence_rel_diff: f64,
    pub chain_conditional: f64,
    pub chain_marginal: f64,
    pub chain_joint: f64,
    pub chain_diff: f64,
    pub aug_gap: f64,
    pub aug_closed_form: f64,
    pub aug_diff: f64,
    pub aug_matched_gap: f64,
    pub push_diff: f64,
    pub push_kl_union: f64,
    pub push_kl_index: f64,
    pub push_kl_diff: f64,
}

/// Runs all four identity families on the instance derived from `seed`.
pub fn run_instance(seed: u64) -> Result<InstanceReport> {
    let overlap = Overlap::for_seed(seed);
    let (model, q) = random_instance(seed, overlap)?;
    let eq = check_finite_equivalence(&model, &q)?;

    let mut rng = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dim = rng.random_range(2..=8usize);
    let (gq, gp) = random_gaussian_pair(seed.wrapping_add(1), dim)?;
    let split = rng.random_range(1..dim);
    let order = shuffled(&mut rng, dim);
    let (u, v) = order.split_at(split);
    let chain = kl_chain_rule_decompose(&gq, &gp, u, v)?;
    let joint = mvn_kl(&gq, &gp)?;

    // augmentation inputs placed away from the index inputs
    let d = model.inputs.ncols();
    let n_aug = rng.random_range(1..=3usize);
    let aug_inputs = DMatrix::from_fn(n_aug, d, |i, _| 3.5 + 0.9 * i as f64 + rng.random_range(0.0..0.3));
    let bad = mismatched_conditional(&model, &aug_inputs)?;
    let gap = augmentation_gap(&model, &q, &aug_inputs, &bad)?;
    let matched = augmentation_gap(&model, &q, &aug_inputs, &super::augmentation::prior_conditional(&model, &aug_inputs)?)?;

    // averaging functional over the index set
    let n = model.num_points();
    let k = 1 + (seed as usize % 2).min(n - 1);
    let a_map = averaging_map(n, k);
    let q_a = {
        let chol = random_chol(&mut rng, k, 0.5);
        let mean = DVector::from_fn(k, |_, _| normal(&mut rng));
        GaussianDist::with_jitter(mean, &chol * chol.transpose(), ORACLE_JITTER)?
    };
    let push = pushforward_check(model.prior(), &q_a, &a_map)?;

    Ok(InstanceReport {
        instance_seed: seed,
        overlap,
        full_kl: eq.full,
        titsias_kl: eq.titsias,
        elbo_gap: eq.elbo_gap,
        equivalence_rel_diff: eq.relative_diff(),
        chain_conditional: chain.conditional,
        chain_marginal: chain.marginal,
        chain_joint: joint,
        chain_diff: (chain.total() - joint).abs(),
        aug_gap: gap.gap,
        aug_closed_form: gap.closed_form,
        aug_diff: (gap.gap - gap.closed_form).abs(),
        aug_matched_gap: matched.gap,
        push_diff: push.max_diff,
        push_kl_union: push.kl_union,
        push_kl_index: push.kl_index,
        push_kl_diff: (push.kl_union - push.kl_index).abs(),
    })
}

/// `k` averaging functionals; row `i` averages the indices `j ≡ i (mod k)`.
pub fn averaging_map(n: usize, k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(k, n);
    for i in 0..k {
        let members: Vec<usize> = (0..n).filter(|j| j % k == i).collect();
        for &j in &members {
            a[(i, j)] = 1.0 / members.len() as f64;
        }
    }
    a
}
