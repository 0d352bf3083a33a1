use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::linalg::{
    check_indices, cholesky_jittered, solve_lower, subvector, submatrix, symmetrize,
    DEFAULT_JITTER,
};
use crate::gaussian::mvn::mvn_logpdf;
use crate::gaussian::{kernel_matrix, GaussianDist, Kernel};

/// A Gaussian-process model restricted to a finite index set.
///
/// `inputs` holds one location per index. `data` marks the observed
/// indices (aligned with `y`) and `inducing` the indices monitored by the
/// variational distribution; the two may overlap.
#[derive(Debug, Clone)]
pub struct FiniteModel {
    pub kernel: Kernel,
    pub inputs: DMatrix<f64>,
    pub data: Vec<usize>,
    pub inducing: Vec<usize>,
    pub y: DVector<f64>,
    pub noise_var: f64,
    prior: GaussianDist,
}

/// Variational distribution over the inducing indices. Everything else is
/// filled in by the prior conditional.
#[derive(Debug, Clone)]
pub struct ApproxPosterior {
    pub q_u: GaussianDist,
    /// Exact factor of `q_u.cov()`.
    pub q_chol: DMatrix<f64>,
}

impl ApproxPosterior {
    pub fn from_chol(mean: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let mut cov = &chol * chol.transpose();
        symmetrize(&mut cov);
        Ok(ApproxPosterior {
            q_u: GaussianDist::new(mean, cov)?,
            q_chol: chol,
        })
    }

    pub fn new(q_u: GaussianDist) -> Self {
        let q_chol = nalgebra::Cholesky::new(q_u.cov().clone())
            .map(|c| c.unpack())
            .unwrap_or_else(|| q_u.chol().clone());
        ApproxPosterior { q_u, q_chol }
    }

    pub fn dim(&self) -> usize {
        self.q_u.dim()
    }
}

impl FiniteModel {
    pub fn new(
        kernel: Kernel,
        inputs: DMatrix<f64>,
        data: Vec<usize>,
        inducing: Vec<usize>,
        y: DVector<f64>,
        noise_var: f64,
    ) -> Result<Self> {
        Self::with_jitter(kernel, inputs, data, inducing, y, noise_var, DEFAULT_JITTER)
    }

    pub fn with_jitter(
        kernel: Kernel,
        inputs: DMatrix<f64>,
        data: Vec<usize>,
        inducing: Vec<usize>,
        y: DVector<f64>,
        noise_var: f64,
        base_jitter: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = inputs.nrows();
        if data.is_empty() {
            return Err(Error::InvalidArgument("data index set must be nonempty".into()));
        }
        if inducing.is_empty() {
            return Err(Error::InvalidArgument("inducing index set must be nonempty".into()));
        }
        check_indices(&data, n)?;
        check_indices(&inducing, n)?;
        if y.len() != data.len() {
            return Err(Error::DimensionMismatch {
                what: "observations vs data indices",
                left: (y.len(), 1),
                right: (data.len(), 1),
            });
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
        }
        let cov = kernel_matrix(&kernel, &inputs, &inputs)?;
        let prior = GaussianDist::with_jitter(DVector::from_element(n, kernel.mean), cov, base_jitter)?;
        Ok(FiniteModel {
            kernel,
            inputs,
            data,
            inducing,
            y,
            noise_var,
            prior,
        })
    }

    pub fn num_points(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn prior(&self) -> &GaussianDist {
        &self.prior
    }

    pub fn base_jitter(&self) -> f64 {
        self.prior.base_jitter()
    }

    /// Inputs at the data indices.
    pub fn data_inputs(&self) -> DMatrix<f64> {
        select_rows(&self.inputs, &self.data)
    }

    /// Inputs at the inducing indices.
    pub fn inducing_inputs(&self) -> DMatrix<f64> {
        select_rows(&self.inputs, &self.inducing)
    }

    /// Sorted union of the data and inducing indices.
    pub fn data_and_inducing(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.data.iter().chain(&self.inducing).copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    /// Same model with a different set of inducing indices.
    pub fn with_inducing(&self, inducing: Vec<usize>) -> Result<Self> {
        check_indices(&inducing, self.num_points())?;
        if inducing.is_empty() {
            return Err(Error::InvalidArgument("inducing index set must be nonempty".into()));
        }
        let mut m = self.clone();
        m.inducing = inducing;
        Ok(m)
    }

    /// The variational distribution at `targets`: `q(f_Z)` carried through
    /// the prior conditional `p(f_T | f_Z)`.
    pub fn extension(&self, q: &ApproxPosterior, targets: &[usize]) -> Result<GaussianDist> {
        let z = &self.inducing;
        if q.dim() != z.len() {
            return Err(Error::DimensionMismatch {
                what: "q(u) vs inducing indices",
                left: (q.dim(), 1),
                right: (z.len(), 1),
            });
        }
        check_indices(targets, self.num_points())?;
        let t = targets.len();
        let pos_in_z = |i: usize| z.iter().position(|&j| j == i);
        let rest: Vec<usize> = targets.iter().copied().filter(|&i| pos_in_z(i).is_none()).collect();

        let mut gain = DMatrix::zeros(t, z.len());
        let mut offset = DVector::zeros(t);
        let mut resid = DMatrix::zeros(t, t);
        if !rest.is_empty() {
            let cond = self.prior.conditional_affine(&rest, z)?;
            let row_of = |i: usize| targets.iter().position(|&j| j == i).expect("target present");
            for (r, &i) in rest.iter().enumerate() {
                let ti = row_of(i);
                gain.set_row(ti, &cond.gain.row(r));
                offset[ti] = cond.offset[r];
                for (c, &j) in rest.iter().enumerate() {
                    resid[(ti, row_of(j))] = cond.cov[(r, c)];
                }
            }
        }
        for (ti, &i) in targets.iter().enumerate() {
            if let Some(p) = pos_in_z(i) {
                gain[(ti, p)] = 1.0;
            }
        }
        let mean = offset + &gain * q.q_u.mean();
        let mut cov = resid + &gain * q.q_u.cov() * gain.transpose();
        symmetrize(&mut cov);
        GaussianDist::with_jitter(mean, cov, self.base_jitter())
    }

    /// The prior marginal at the inducing indices as an approximate posterior.
    pub fn prior_approx(&self) -> Result<ApproxPosterior> {
        let p = crate::gaussian::mvn_marginal(&self.prior, &self.inducing)?;
        Ok(ApproxPosterior::new(p))
    }

    /// The exact posterior marginal at the inducing indices.
    pub fn posterior_approx(&self) -> Result<ApproxPosterior> {
        let post = exact_posterior(self)?;
        Ok(ApproxPosterior::new(crate::gaussian::mvn_marginal(&post, &self.inducing)?))
    }
}

pub(crate) fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// `p(f_X | Y)` for `Y = f_D + ε`, `ε ~ N(0, noise_var·I)`.
pub fn exact_posterior(m: &FiniteModel) -> Result<GaussianDist> {
    let prior = m.prior();
    let n = m.num_points();
    let all: Vec<usize> = (0..n).collect();
    let mut s_dd = submatrix(prior.cov(), &m.data, &m.data);
    for i in 0..m.data.len() {
        s_dd[(i, i)] += m.noise_var;
    }
    let (l, _) = cholesky_jittered(&s_dd, m.base_jitter())?;
    let s_dx = submatrix(prior.cov(), &m.data, &all);
    let v = solve_lower(&l, &s_dx);
    let innovation = &m.y - subvector(prior.mean(), &m.data);
    let w = solve_lower(&l, &DMatrix::from_column_slice(innovation.len(), 1, innovation.as_slice()));
    let mean = prior.mean() + (v.transpose() * w).column(0);
    let mut cov = prior.cov() - v.transpose() * &v;
    symmetrize(&mut cov);
    GaussianDist::with_jitter(mean, cov, m.base_jitter())
}

/// `log N(Y | μ_D, Σ_DD + noise_var·I)`.
pub fn log_marginal_likelihood(m: &FiniteModel) -> Result<f64> {
    let prior = m.prior();
    let mut s_dd = submatrix(prior.cov(), &m.data, &m.data);
    for i in 0..m.data.len() {
        s_dd[(i, i)] += m.noise_var;
    }
    let marginal = GaussianDist::with_jitter(subvector(prior.mean(), &m.data), s_dd, m.base_jitter())?;
    mvn_logpdf(&marginal, &m.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(y: f64, noise: f64) -> FiniteModel {
        let k = Kernel::squared_exponential(1.0, vec![1.0], 0.0).unwrap();
        FiniteModel::new(k, DMatrix::zeros(1, 1), vec![0], vec![0], DVector::from_vec(vec![y]), noise).unwrap()
    }

    #[test]
    fn conjugate_single_point() {
        let post = exact_posterior(&single(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(post.cov()[(0, 0)], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn single_point_marginal_likelihood() {
        let lml = log_marginal_likelihood(&single(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(lml, -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(lml, -1.26551, epsilon = 1e-5);
    }

    #[test]
    fn huge_noise_leaves_prior() {
        let k = Kernel::squared_exponential(0.8, vec![0.7], 0.4).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.5, 1.2, 2.0]);
        let m = FiniteModel::new(k, x, vec![1, 3], vec![0], DVector::from_vec(vec![3.0, -2.0]), 1e12).unwrap();
        let post = exact_posterior(&m).unwrap();
        let prior = m.prior();
        for i in 0..4 {
            assert!((post.mean()[i] - prior.mean()[i]).abs() <= 1e-4 * prior.mean()[i].abs().max(1.0));
            for j in 0..4 {
                assert!((post.cov()[(i, j)] - prior.cov()[(i, j)]).abs() <= 1e-4 * prior.cov()[(i, i)]);
            }
        }
    }

    #[test]
    fn independent_points_factorize() {
        let k = Kernel::squared_exponential(1.5, vec![0.5], -0.2).unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 100.0]);
        let y = DVector::from_vec(vec![0.7, -1.4]);
        let both = FiniteModel::new(k.clone(), x.clone(), vec![0, 1], vec![0], y.clone(), 0.3).unwrap();
        let one = |i: usize| {
            let xi = DMatrix::from_element(1, 1, x[(i, 0)]);
            let m = FiniteModel::new(k.clone(), xi, vec![0], vec![0], DVector::from_element(1, y[i]), 0.3).unwrap();
            log_marginal_likelihood(&m).unwrap()
        };
        assert_abs_diff_eq!(log_marginal_likelihood(&both).unwrap(), one(0) + one(1), epsilon = 1e-10);
    }

    #[test]
    fn extension_copies_q_on_inducing_rows() {
        let k = Kernel::squared_exponential(1.0, vec![0.6], 0.0).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.4, 1.0, 1.7]);
        let m = FiniteModel::new(k, x, vec![0, 1], vec![3, 1], DVector::from_vec(vec![0.2, 0.1]), 0.1).unwrap();
        let q = ApproxPosterior::from_chol(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]),
        )
        .unwrap();
        let e = m.extension(&q, &[1, 2, 3]).unwrap();
        assert_abs_diff_eq!(e.mean()[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.mean()[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.cov()[(0, 2)], q.q_u.cov()[(1, 0)], epsilon = 1e-12);
        assert!(m.extension(&q, &[1, 1]).is_err());
    }

    #[test]
    fn rejects_invalid_models() {
        let k = Kernel::squared_exponential(1.0, vec![1.0], 0.0).unwrap();
        let x = DMatrix::zeros(3, 1);
        let y = DVector::zeros(1);
        assert!(FiniteModel::new(k.clone(), x.clone(), vec![], vec![0], DVector::zeros(0), 1.0).is_err());
        assert!(FiniteModel::new(k.clone(), x.clone(), vec![5], vec![0], y.clone(), 1.0).is_err());
        assert!(FiniteModel::new(k.clone(), x.clone(), vec![0], vec![1, 1], y.clone(), 1.0).is_err());
        assert!(FiniteModel::new(k, x, vec![0], vec![1], y, 0.0).is_err());
    }
}
