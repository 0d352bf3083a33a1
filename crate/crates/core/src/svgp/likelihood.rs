//! Factorized observation models and their one-dimensional variational
//! expectations `E_{N(f; μ, σ²)}[log p(y | f)]`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gaussian_expectation, Rule};

/// Default Gauss–Hermite order for non-conjugate expectations.
pub const DEFAULT_GH_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Likelihood {
    GaussianNoise { noise_var: f64 },
    /// Probit link; labels are ±1 (0 is read as -1).
    Bernoulli,
    /// Counts in bins of width `bin_width` with rate `bin_width·e^f`.
    Poisson { bin_width: f64 },
}

impl Likelihood {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Likelihood::GaussianNoise { noise_var } if !(noise_var > 0.0 && noise_var.is_finite()) => {
                Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")))
            }
            Likelihood::Poisson { bin_width } if !(bin_width > 0.0 && bin_width.is_finite()) => {
                Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_width}")))
            }
            _ => Ok(()),
        }
    }

    /// `log p(y | f)` for a single datum.
    pub fn log_density(&self, f: f64, y: f64) -> f64 {
        match *self {
            Likelihood::GaussianNoise { noise_var } => {
                -0.5 * (2.0 * PI * noise_var).ln() - 0.5 * (y - f) * (y - f) / noise_var
            }
            Likelihood::Bernoulli => log_ndtr(sign_label(y) * f),
            Likelihood::Poisson { bin_width } => {
                y * (f + bin_width.ln()) - bin_width * f.exp() - libm::lgamma(y + 1.0)
            }
        }
    }

    /// `E_{N(f; mean, var)}[log p(y | f)]`. Gaussian noise is closed form;
    /// the other kinds use the supplied Gauss–Hermite rule.
    pub fn variational_expectation(&self, mean: f64, var: f64, y: f64, rule: &Rule) -> f64 {
        match *self {
            Likelihood::GaussianNoise { noise_var } => {
                -0.5 * (2.0 * PI * noise_var).ln() - ((y - mean).powi(2) + var) / (2.0 * noise_var)
            }
            _ => gaussian_expectation(rule, mean, var, |f| self.log_density(f, y)),
        }
    }
}

fn sign_label(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `log Φ(x)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_ndtr(x: f64) -> f64 {
    if x > 6.0 {
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * libm::erfc(-x / SQRT_2)).ln()
    } else {
        // Φ(x) = φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + ...)
        let x2 = x * x;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / x2;
            series += term;
        }
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_ndtr_branches_join() {
        assert_abs_diff_eq!(log_ndtr(0.0), 0.5f64.ln(), epsilon = 1e-15);
        for x in [-20.0f64, 6.0] {
            let below = log_ndtr(x - 1e-9);
            let above = log_ndtr(x + 1e-9);
            assert!((below - above).abs() < 1e-6 * below.abs().max(1e-12));
        }
        // Φ(-30): ln ≈ -454.321
        assert_abs_diff_eq!(log_ndtr(-30.0), -454.3212439955, epsilon = 1e-6);
        assert!(log_ndtr(40.0) <= 0.0);
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature() {
        let lik = Likelihood::GaussianNoise { noise_var: 0.3 };
        let rule = gauss_hermite(20).unwrap();
        for (m, v, y) in [(0.0, 1.0, 0.5), (-2.0, 0.01, 1.0), (3.0, 5.0, -1.0)] {
            let closed = lik.variational_expectation(m, v, y, &rule);
            let quad = gaussian_expectation(&rule, m, v, |f| lik.log_density(f, y));
            assert_abs_diff_eq!(closed, quad, epsilon = 1e-10);
        }
    }

    #[test]
    fn poisson_matches_closed_form() {
        // E[y(f + ln w) - w e^f - ln y!] = y(μ + ln w) - w e^{μ+σ²/2} - ln y!
        let lik = Likelihood::Poisson { bin_width: 0.5 };
        let rule = gauss_hermite(20).unwrap();
        let (m, v, y) = (0.4, 0.7, 3.0);
        let exact = y * (m + 0.5f64.ln()) - 0.5 * (m + v / 2.0f64).exp() - 6.0f64.ln();
        assert_abs_diff_eq!(lik.variational_expectation(m, v, y, &rule), exact, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_variance_is_pointwise() {
        let rule = gauss_hermite(20).unwrap();
        let lik = Likelihood::Bernoulli;
        assert_abs_diff_eq!(
            lik.variational_expectation(0.7, 0.0, 1.0, &rule),
            log_ndtr(0.7),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            lik.variational_expectation(0.7, 0.0, 0.0, &rule),
            log_ndtr(-0.7),
            epsilon = 1e-12
        );
    }

    #[test]
    fn validation() {
        assert!(Likelihood::GaussianNoise { noise_var: 0.0 }.validate().is_err());
        assert!(Likelihood::Poisson { bin_width: -1.0 }.validate().is_err());
        assert!(Likelihood::Bernoulli.validate().is_ok());
    }
}
