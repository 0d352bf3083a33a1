#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use sparsekl::gaussian::GaussianDist;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Exact lower factor of the covariance, without jitter.
pub fn exact_chol(cov: &DMatrix<f64>) -> DMatrix<f64> {
    nalgebra::Cholesky::new(cov.clone()).expect("positive definite").unpack()
}

pub fn sample(rng: &mut ChaCha8Rng, p: &GaussianDist, chol: &DMatrix<f64>) -> DVector<f64> {
    p.mean() + chol * normals(rng, p.dim())
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * ridge
}
