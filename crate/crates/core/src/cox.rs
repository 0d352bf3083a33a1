//! Variational inference for Poisson processes whose log-intensity (or
//! square-root intensity) is a Gaussian process.
//!
//! The likelihood touches the latent function everywhere on the domain
//! through the intensity integral, which is evaluated on a tensor
//! Gauss–Legendre grid after moving the expectation inside it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::mvn_kl;
use crate::quadrature::{gauss_hermite, gaussian_expectation, tensor_grid, Rule};
use crate::svgp::SvgpState;

/// Gauss–Hermite order for `E[log f²]` under the square link.
pub const SQUARE_LINK_GH_ORDER: usize = 64;

/// Floor applied to `log f²` at each quadrature node.
pub const LOG_SQUARE_FLOOR: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// `ρ(f) = e^f`.
    Exp,
    /// `ρ(f) = f²`. Experimental: `E[log f²]` is clamped near `f = 0`.
    Square,
}

impl Link {
    pub fn rho(self, f: f64) -> f64 {
        match self {
            Link::Exp => f.exp(),
            Link::Square => f * f,
        }
    }

    /// `E[ρ(f)]` for `f ~ N(mean, var)`.
    pub fn expected_rho(self, mean: f64, var: f64) -> f64 {
        match self {
            Link::Exp => (mean + 0.5 * var).exp(),
            Link::Square => mean * mean + var,
        }
    }

    /// `E[log ρ(f)]` for `f ~ N(mean, var)`; `rule` is only used by the
    /// square link.
    pub fn expected_log_rho(self, mean: f64, var: f64, rule: &Rule) -> f64 {
        match self {
            Link::Exp => mean,
            Link::Square => gaussian_expectation(rule, mean, var, |f| (f * f).ln().max(LOG_SQUARE_FLOOR)),
        }
    }
}

/// Default Gauss–Legendre order per axis for a domain of dimension `d`.
pub fn default_quad_orders(d: usize) -> Vec<usize> {
    match d {
        1 => vec![50],
        _ => vec![20; d],
    }
}

/// Poisson process on a box with events `events` (one per row).
#[derive(Debug, Clone, PartialEq)]
pub struct CoxModel {
    domain: Vec<(f64, f64)>,
    pub link: Link,
    events: DMatrix<f64>,
    quad_orders: Vec<usize>,
}

fn validate_domain(domain: &[(f64, f64)]) -> Result<()> {
    if !(1..=2).contains(&domain.len()) {
        return Err(Error::InvalidArgument(format!(
            "domain must have 1 or 2 dimensions, got {}",
            domain.len()
        )));
    }
    for (a, (lo, hi)) in domain.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("domain axis {a} must satisfy a < b, got [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn inside(domain: &[(f64, f64)], x: &[f64]) -> bool {
    x.iter().zip(domain).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
}

impl CoxModel {
    pub fn new(domain: Vec<(f64, f64)>, link: Link, events: DMatrix<f64>, quad_orders: Vec<usize>) -> Result<Self> {
        validate_domain(&domain)?;
        let d = domain.len();
        if events.ncols() != d && events.nrows() > 0 {
            return Err(Error::DimensionMismatch {
                what: "events vs domain",
                left: events.shape(),
                right: (d, 1),
            });
        }
        if quad_orders.len() != d {
            return Err(Error::DimensionMismatch {
                what: "quadrature orders vs domain",
                left: (quad_orders.len(), 1),
                right: (d, 1),
            });
        }
        if let Some(o) = quad_orders.iter().find(|&&o| o < 2) {
            return Err(Error::InvalidArgument(format!("quadrature order must be at least 2, got {o}")));
        }
        for i in 0..events.nrows() {
            let row: Vec<f64> = events.row(i).iter().copied().collect();
            if !inside(&domain, &row) {
                return Err(Error::EventOutsideDomain { index: i, location: row });
            }
        }
        let events = if events.nrows() == 0 { DMatrix::zeros(0, d) } else { events };
        Ok(CoxModel {
            domain,
            link,
            events,
            quad_orders,
        })
    }

    /// Model with the default quadrature orders.
    pub fn with_default_quadrature(domain: Vec<(f64, f64)>, link: Link, events: DMatrix<f64>) -> Result<Self> {
        let orders = default_quad_orders(domain.len());
        Self::new(domain, link, events, orders)
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn events(&self) -> &DMatrix<f64> {
        &self.events
    }

    pub fn quad_orders(&self) -> &[usize] {
        &self.quad_orders
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn volume(&self) -> f64 {
        self.domain.iter().map(|(a, b)| b - a).product()
    }

    /// Same model with different quadrature orders.
    pub fn with_quad_orders(&self, quad_orders: Vec<usize>) -> Result<Self> {
        Self::new(self.domain.clone(), self.link, self.events.clone(), quad_orders)
    }

    /// Quadrature nodes (one per row) and weights over the domain.
    pub fn quad_grid(&self) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let (nodes, weights) = tensor_grid(&self.domain, &self.quad_orders)?;
        let d = self.dim();
        Ok((DMatrix::from_fn(nodes.len(), d, |i, j| nodes[i][j]), weights))
    }
}

/// The three parts of the Cox ELBO; `value = data_term - integral_term - kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoxElboTerms {
    pub kl: f64,
    /// `Σ_y E_q[log ρ(f(y))]`
    pub data_term: f64,
    /// `∫ E_q[ρ(f(x))] dx`
    pub integral_term: f64,
    pub value: f64,
}

fn check_state(s: &SvgpState, m: &CoxModel) -> Result<()> {
    if s.kernel.input_dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "kernel vs domain",
            left: (s.kernel.input_dim(), 1),
            right: (m.dim(), 1),
        });
    }
    Ok(())
}

pub fn cox_elbo_terms(s: &SvgpState, m: &CoxModel) -> Result<CoxElboTerms> {
    check_state(s, m)?;
    let kl = mvn_kl(&s.q_u()?, &s.p_u()?)?;
    let rule = match m.link {
        Link::Square => gauss_hermite(SQUARE_LINK_GH_ORDER)?,
        Link::Exp => Rule { nodes: vec![], weights: vec![] },
    };
    let data_term = if m.events.nrows() == 0 {
        0.0
    } else {
        let p = s.predictive_marginals(&m.events)?;
        p.mean.iter().zip(&p.var).map(|(mu, v)| m.link.expected_log_rho(*mu, *v, &rule)).sum()
    };
    let (grid, weights) = m.quad_grid()?;
    let p = s.predictive_marginals(&grid)?;
    let integral_term = p
        .mean
        .iter()
        .zip(&p.var)
        .zip(&weights)
        .map(|((mu, v), w)| w * m.link.expected_rho(*mu, *v))
        .sum();
    Ok(CoxElboTerms {
        kl,
        data_term,
        integral_term,
        value: data_term - integral_term - kl,
    })
}

pub fn cox_elbo(s: &SvgpState, m: &CoxModel) -> Result<f64> {
    Ok(cox_elbo_terms(s, m)?.value)
}

/// `E_q[ρ(f(x))]` at each row of `x`.
pub fn fitted_intensity(s: &SvgpState, link: Link, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = s.predictive_marginals(x)?;
    Ok(p.mean.iter().zip(&p.var).map(|(mu, v)| link.expected_rho(*mu, *v)).collect())
}

/// Draws a Poisson process with the given intensity on `domain` by
/// thinning a homogeneous process of rate `upper_bound`. The bound is
/// checked on the default quadrature grid first.
pub fn sample_inhomogeneous_pp<F: Fn(&[f64]) -> f64>(
    intensity: F,
    upper_bound: f64,
    domain: &[(f64, f64)],
    seed: u64,
) -> Result<DMatrix<f64>> {
    validate_domain(domain)?;
    if !(upper_bound > 0.0 && upper_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("upper bound must be positive, got {upper_bound}")));
    }
    let d = domain.len();
    let (nodes, _) = tensor_grid(domain, &default_quad_orders(d))?;
    for x in nodes {
        let v = intensity(&x);
        if !(v <= upper_bound) || v < 0.0 {
            return Err(Error::BoundViolation {
                point: x,
                value: v,
                bound: upper_bound,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volume: f64 = domain.iter().map(|(a, b)| b - a).product();
    let count = Poisson::new(upper_bound * volume)
        .map_err(|e| Error::InvalidArgument(format!("proposal rate: {e}")))?
        .sample(&mut rng) as usize;
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for _ in 0..count {
        let x: Vec<f64> = domain.iter().map(|(a, b)| rng.random_range(*a..*b)).collect();
        let u: f64 = rng.random();
        if u * upper_bound < intensity(&x) {
            accepted.push(x);
        }
    }
    Ok(DMatrix::from_fn(accepted.len(), d, |i, j| accepted[i][j]))
}
