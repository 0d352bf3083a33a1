mod common;

use std::time::Instant;

use common::{exact_chol, rng, sample};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sparsekl::gaussian::{mvn_condition, mvn_logpdf, mvn_marginal, GaussianDist, Kernel};
use sparsekl::oracle::random::{random_instance, Overlap, ORACLE_JITTER};
use sparsekl::oracle::{exact_posterior, log_marginal_likelihood, run_instance, svgp_state, FiniteModel};
use sparsekl::quadrature::tensor_grid;
use sparsekl::svgp::elbo;

#[test]
fn hundred_instance_sweep() {
    let start = Instant::now();
    let mut seen = Vec::new();
    for seed in 0..100 {
        let r = run_instance(seed).unwrap();
        let tol = |v: f64| 1e-8 * (1.0 + v.abs());
        assert!((r.full_kl - r.titsias_kl).abs() <= tol(r.full_kl), "{r:?}");
        assert!((r.full_kl - r.elbo_gap).abs() <= tol(r.full_kl), "{r:?}");
        assert!(r.chain_diff <= 1e-9, "{r:?}");
        assert!(r.aug_gap > 0.01 && r.aug_diff <= 1e-9, "{r:?}");
        assert!(r.aug_gap >= -1e-10 && r.aug_matched_gap.abs() <= 1e-9, "{r:?}");
        assert!(r.push_diff <= 1e-9 && r.push_kl_diff <= 1e-9, "{r:?}");
        if !seen.contains(&r.overlap) {
            seen.push(r.overlap);
        }
    }
    assert_eq!(seen.len(), Overlap::ALL.len());
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn elbo_never_exceeds_evidence() {
    for seed in 0..100 {
        let (m, q) = random_instance(1000 + seed, Overlap::for_seed(seed)).unwrap();
        let s = svgp_state(&m, &q).unwrap();
        let e = elbo(&s, &m.data_inputs(), &m.y).unwrap();
        assert!(e <= log_marginal_likelihood(&m).unwrap() + 1e-9);
    }
}

#[test]
fn report_serializes_expected_fields() {
    let v = serde_json::to_value(run_instance(3).unwrap()).unwrap();
    for key in [
        "instance_seed",
        "full_kl",
        "titsias_kl",
        "elbo_gap",
        "chain_conditional",
        "chain_marginal",
        "aug_gap",
        "push_diff",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

fn small_model(seed: u64, n: usize, data: Vec<usize>) -> FiniteModel {
    let mut r = rng(seed);
    let k = Kernel::squared_exponential(1.1, vec![0.8], 0.2).unwrap();
    let x = DMatrix::from_fn(n, 1, |i, _| 0.5 * i as f64 + r.random_range(0.0..0.2));
    let y = DVector::from_fn(data.len(), |_, _| r.random_range(-1.0..1.0));
    FiniteModel::with_jitter(k, x, data, vec![0], y, 0.4, ORACLE_JITTER).unwrap()
}

#[test]
fn log_marginal_likelihood_matches_monte_carlo() {
    let m = small_model(10, 5, vec![0, 2, 4]);
    let p_d = mvn_marginal(m.prior(), &m.data).unwrap();
    let l = exact_chol(p_d.cov());
    let mut r = rng(11);
    let noise = GaussianDist::new(DVector::zeros(3), DMatrix::identity(3, 3) * m.noise_var).unwrap();
    let logs: Vec<f64> = (0..1_000_000)
        .map(|_| mvn_logpdf(&noise, &(&m.y - sample(&mut r, &p_d, &l))).unwrap())
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let (mean, se) = common::mean_se(&w);
    let est = top + mean.ln();
    let se_log = se / mean;
    let exact = log_marginal_likelihood(&m).unwrap();
    assert!((est - exact).abs() <= 3.0 * se_log, "exact {exact}, mc {est} ± {se_log}");
}

#[test]
fn posterior_matches_grid_bayes_on_two_point_slice() {
    let m = small_model(20, 8, vec![1, 2, 5, 6]);
    // slice: one observed and one unobserved index
    let slice = [2usize, 4];
    let post = mvn_marginal(&exact_posterior(&m).unwrap(), &slice).unwrap();

    // joint over (f_slice, Y)
    let n = m.num_points();
    let prior = m.prior();
    let nd = m.data.len();
    let mut cov = DMatrix::zeros(2 + nd, 2 + nd);
    let mut mean = DVector::zeros(2 + nd);
    let idx: Vec<usize> = slice.iter().chain(&m.data).copied().collect();
    for (a, &i) in idx.iter().enumerate() {
        mean[a] = prior.mean()[i];
        for (b, &j) in idx.iter().enumerate() {
            cov[(a, b)] = prior.cov()[(i, j)];
        }
    }
    for a in 2..2 + nd {
        cov[(a, a)] += m.noise_var;
    }
    assert!(n > 4);
    let joint = GaussianDist::with_jitter(mean, cov, ORACLE_JITTER).unwrap();
    let p_slice = mvn_marginal(&joint, &[0, 1]).unwrap();

    let bounds: Vec<(f64, f64)> = (0..2)
        .map(|i| {
            let h = 9.0 * p_slice.cov()[(i, i)].sqrt();
            (p_slice.mean()[i] - h, p_slice.mean()[i] + h)
        })
        .collect();
    let (nodes, weights) = tensor_grid(&bounds, &[120, 120]).unwrap();
    let mut z = 0.0;
    let mut m1 = DVector::zeros(2);
    let mut m2 = DMatrix::zeros(2, 2);
    for (s, w) in nodes.iter().zip(&weights) {
        let f = DVector::from_column_slice(s);
        let lik = mvn_condition(&joint, &[0, 1], &f).unwrap();
        let lw = mvn_logpdf(&p_slice, &f).unwrap() + mvn_logpdf(&lik, &m.y).unwrap();
        let wt = w * lw.exp();
        z += wt;
        m1 += &f * wt;
        m2 += &f * f.transpose() * wt;
    }
    let gm = m1 / z;
    let gc = m2 / z - &gm * gm.transpose();
    assert!((&gm - post.mean()).amax() < 1e-6, "{gm} vs {}", post.mean());
    assert!((&gc - post.cov()).amax() < 1e-6, "{gc} vs {}", post.cov());
}
