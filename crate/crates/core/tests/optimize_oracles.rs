mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use sparsekl::cox::{CoxModel, Link};
use sparsekl::gaussian::Kernel;
use sparsekl::interdomain::InducingFeature;
use sparsekl::optimize::{
    collapsed_objective, cox_objective, elbo_objective, maximize, maximize_with_callback, numeric_grad, BlockName,
    OptimizeResult, OptimizerConfig, ParamVector, SvgpParameterization, FEATURE_BLOCKS, HYPER_BLOCKS,
    VARIATIONAL_BLOCKS,
};
use sparsekl::oracle::random::{random_chol, ORACLE_JITTER};
use sparsekl::oracle::{check_finite_equivalence, ApproxPosterior, FiniteModel};
use sparsekl::svgp::{collapsed_bound, Likelihood, SvgpState};

fn assert_monotone(r: &OptimizeResult) {
    for w in r.trace.windows(2) {
        assert!(w[1].objective >= w[0].objective, "trace decreased at iter {}", w[1].iter);
    }
}

fn conjugate_data(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = common::rng(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..6.0));
    let noise = common::normals(&mut rng, n);
    let y = DVector::from_fn(n, |i, _| (x[(i, 0)]).sin() + 0.5 * (2.3 * x[(i, 0)]).sin() + 0.2 * noise[i]);
    (x, y)
}

fn points(locs: &[f64]) -> Vec<InducingFeature> {
    locs.iter().map(|z| InducingFeature::point(vec![*z])).collect()
}

fn regression_state(z: &[f64]) -> SvgpState {
    let k = Kernel::squared_exponential(1.0, vec![0.8], 0.0).unwrap();
    SvgpState::from_prior(points(z), k, Likelihood::GaussianNoise { noise_var: 0.05 }).unwrap()
}

fn bound_at(z: &[f64], x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let k = Kernel::squared_exponential(1.0, vec![0.8], 0.0).unwrap();
    collapsed_bound(&points(z), &k, x, y, 0.05).unwrap()
}

#[test]
fn optimized_inducing_locations_beat_random_restarts() {
    let (x, y) = conjugate_data(11, 40);
    let z0 = [0.6, 1.8, 3.0, 4.2, 5.4];
    let param = SvgpParameterization::new(regression_state(&z0), &[BlockName::FeatureCenters]).unwrap();
    let x0 = param.pack(&param.template).unwrap();
    let config = OptimizerConfig {
        max_iters: 400,
        ..Default::default()
    };
    let r = maximize(collapsed_objective(&param, &x, &y), &x0, &config).unwrap();
    assert_monotone(&r);
    let initial = bound_at(&z0, &x, &y);
    assert!(r.objective >= initial);
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let z: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..6.0)).collect();
        let b = bound_at(&z, &x, &y);
        assert!(r.objective >= b, "optimum {} below random restart {}", r.objective, b);
    }
}

#[test]
fn uncollapsed_optimum_reaches_collapsed_bound() {
    let (x, y) = conjugate_data(21, 40);
    let start = regression_state(&[0.3, 1.6, 2.9, 4.2, 5.5]);
    let outer: Vec<BlockName> = HYPER_BLOCKS.iter().chain(&[BlockName::FeatureCenters]).copied().collect();
    let hyper = SvgpParameterization::new(start.clone(), &outer).unwrap();
    let r = maximize(collapsed_objective(&hyper, &x, &y), &hyper.pack(&start).unwrap(), &OptimizerConfig::default()).unwrap();
    assert_monotone(&r);
    let fitted = hyper.unpack(&r.x).unwrap();
    let fitted = SvgpState::from_prior(fitted.features, fitted.kernel, fitted.likelihood).unwrap();

    let inner = SvgpParameterization::new(fitted.clone(), &VARIATIONAL_BLOCKS).unwrap();
    let u = maximize(elbo_objective(&inner, &x, &y), &inner.pack(&fitted).unwrap(), &OptimizerConfig::default()).unwrap();
    assert_monotone(&u);
    assert!(u.objective <= r.objective + 1e-9);
    assert!(
        (r.objective - u.objective).abs() <= 1e-3,
        "collapsed {} vs uncollapsed {}",
        r.objective,
        u.objective
    );
}

/// Largest per-coordinate relative disagreement between steps 1e-4 and 1e-5.
/// Coordinates whose gradient is at the finite-difference noise floor are
/// compared absolutely.
fn richardson_gap<F: FnMut(&ParamVector) -> f64>(f: &mut F, x: &ParamVector) -> f64 {
    let coarse = numeric_grad(f, x, 1e-4).unwrap();
    let fine = numeric_grad(f, x, 1e-5).unwrap();
    coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn random_state(rng: &mut common::Rng, likelihood: Likelihood, d: usize, m: usize, span: f64) -> SvgpState {
    let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.6..1.5) * span / 4.0).collect();
    let k = Kernel::squared_exponential(rng.random_range(0.5..2.0), ls, rng.random_range(-0.5..0.5)).unwrap();
    let features = (0..m)
        .map(|i| {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..span)).collect();
            if i % 2 == 0 {
                InducingFeature::point(c)
            } else {
                InducingFeature::window(c, vec![0.1 * span; d]).unwrap()
            }
        })
        .collect();
    let mean = common::normals(rng, m) * 0.5;
    let chol = random_chol(rng, m, 0.5);
    SvgpState::new(features, mean, chol, k, likelihood).unwrap()
}

fn all_blocks() -> Vec<BlockName> {
    VARIATIONAL_BLOCKS.iter().chain(&HYPER_BLOCKS).chain(&FEATURE_BLOCKS).copied().collect()
}

#[test]
fn elbo_gradients_are_step_consistent() {
    let mut rng = common::rng(31);
    let mut worst: f64 = 0.0;
    for trial in 0..12 {
        let lik = match trial % 3 {
            0 => Likelihood::GaussianNoise { noise_var: 0.1 },
            1 => Likelihood::Bernoulli,
            _ => Likelihood::Poisson { bin_width: 0.5 },
        };
        let s = random_state(&mut rng, lik, 1, 4, 5.0);
        let n = 25;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..5.0));
        let y = DVector::from_fn(n, |_, _| match lik {
            Likelihood::GaussianNoise { .. } => rng.random_range(-1.0..1.0),
            Likelihood::Bernoulli => if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            Likelihood::Poisson { .. } => rng.random_range(0..4) as f64,
        });
        let param = SvgpParameterization::new(s.clone(), &all_blocks()).unwrap();
        let p = param.pack(&s).unwrap();
        worst = worst.max(richardson_gap(&mut elbo_objective(&param, &x, &y), &p));
    }
    assert!(worst <= 1e-3, "elbo Richardson gap {worst:e}");
}

#[test]
fn cox_elbo_gradients_are_step_consistent() {
    let mut rng = common::rng(41);
    let mut worst: f64 = 0.0;
    for trial in 0..6 {
        let d = 1 + trial % 2;
        let s = random_state(&mut rng, Likelihood::Bernoulli, d, 4, 10.0);
        let events = DMatrix::from_fn(30, d, |_, _| rng.random_range(0.0..10.0));
        let model = CoxModel::with_default_quadrature(vec![(0.0, 10.0); d], Link::Exp, events).unwrap();
        let param = SvgpParameterization::new(s.clone(), &all_blocks()).unwrap();
        let p = param.pack(&s).unwrap();
        worst = worst.max(richardson_gap(&mut cox_objective(&param, &model), &p));
    }
    assert!(worst <= 1e-3, "cox_elbo Richardson gap {worst:e}");
}

#[test]
fn identity_holds_at_every_feature_iterate() {
    let (x, y) = conjugate_data(51, 6);
    let noise_var = 0.1;
    let k = Kernel::squared_exponential(1.0, vec![1.0], 0.0).unwrap();
    let z0 = [-1.5, 3.0, 7.5];
    let mut rng = common::rng(52);
    let start = SvgpState::new(
        points(&z0),
        common::normals(&mut rng, 3) * 0.3,
        random_chol(&mut rng, 3, 0.4),
        k.clone(),
        Likelihood::GaussianNoise { noise_var },
    )
    .unwrap();
    let free: Vec<BlockName> = VARIATIONAL_BLOCKS.iter().chain(&[BlockName::FeatureCenters]).copied().collect();
    let param = SvgpParameterization::new(start.clone(), &free).unwrap();
    let config = OptimizerConfig {
        max_iters: 60,
        ..Default::default()
    };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let r = maximize_with_callback(elbo_objective(&param, &x, &y), &param.pack(&start).unwrap(), &config, |p, _| {
        let s = param.unpack(p)?;
        let n = x.nrows();
        let inputs = DMatrix::from_fn(n + 3, 1, |i, _| if i < n { x[(i, 0)] } else { s.features[i - n].location()[0] });
        let m = FiniteModel::with_jitter(k.clone(), inputs, (0..n).collect(), (n..n + 3).collect(), y.clone(), noise_var, ORACLE_JITTER)?;
        let q = ApproxPosterior::from_chol(s.q_mean.clone(), s.q_chol.clone())?;
        worst = worst.max(check_finite_equivalence(&m, &q)?.relative_diff());
        checked += 1;
        Ok(())
    })
    .unwrap();
    assert_monotone(&r);
    assert!(checked > 10, "only {checked} iterates");
    assert!(worst <= 1e-8, "identity broke along the path: {worst:e}");
}
