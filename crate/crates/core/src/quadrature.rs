//! Gauss–Hermite and Gauss–Legendre rules, plus an adaptive Gauss–Legendre
//! integrator.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Physicists' Gauss–Hermite rule for `∫ e^{-x²} g(x) dx`.
///
/// Newton iteration on the orthonormal Hermite recurrence, seeded with the
/// usual asymptotic root estimates.
pub fn gauss_hermite(n: usize) -> Result<Rule> {
    if n < 1 {
        return Err(Error::InvalidArgument("Gauss-Hermite order must be at least 1".into()));
    }
    let pim4 = PI.powf(-0.25);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Rule { nodes, weights })
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<Rule> {
    if n < 1 {
        return Err(Error::InvalidArgument("Gauss-Legendre order must be at least 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Rule { nodes, weights })
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Result<Rule> {
    let base = gauss_legendre(n)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    })
}

/// Tensor-product Gauss–Legendre grid over a hyper-rectangle.
/// Returns `(points, weights)` with points in row-major order (last axis fastest).
pub fn tensor_grid(bounds: &[(f64, f64)], orders: &[usize]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if bounds.len() != orders.len() || bounds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} bounds but {} quadrature orders",
            bounds.len(),
            orders.len()
        )));
    }
    let rules = bounds
        .iter()
        .zip(orders)
        .map(|(&(a, b), &n)| gauss_legendre_on(n, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for rule in &rules {
        let mut np = Vec::with_capacity(points.len() * rule.len());
        let mut nw = Vec::with_capacity(points.len() * rule.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * wx);
            }
        }
        points = np;
        weights = nw;
    }
    Ok((points, weights))
}

/// `E[g(f)]` for `f ~ N(mean, var)` under a Gauss–Hermite rule.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(rule: &Rule, mean: f64, var: f64, g: F) -> f64 {
    let scale = (2.0 * var.max(0.0)).sqrt();
    let norm = PI.sqrt().recip();
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| w * g(mean + scale * x))
        .sum::<f64>()
        * norm
}

/// Adaptive Gauss–Legendre integration of `f` over `[a, b]`.
///
/// Each panel is integrated with 15 and 30 nodes; panels whose two estimates
/// differ by more than their share of `abs_tol` are bisected.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    let coarse = gauss_legendre(15).expect("order > 0");
    let fine = gauss_legendre(30).expect("order > 0");
    adaptive_panel(f, a, b, abs_tol, &coarse, &fine, 0)
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &Rule) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn adaptive_panel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    coarse: &Rule,
    fine: &Rule,
    depth: usize,
) -> f64 {
    let lo = panel(f, a, b, coarse);
    let hi = panel(f, a, b, fine);
    if (hi - lo).abs() <= tol || depth >= 40 {
        return hi;
    }
    let mid = 0.5 * (a + b);
    adaptive_panel(f, a, mid, 0.5 * tol, coarse, fine, depth + 1)
        + adaptive_panel(f, mid, b, 0.5 * tol, coarse, fine, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_integrates_moments() {
        let rule = gauss_hermite(20).unwrap();
        // E[1], E[f²], E[f⁴] under N(0, 1)
        assert_abs_diff_eq!(gaussian_expectation(&rule, 0.0, 1.0, |_| 1.0), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gaussian_expectation(&rule, 0.0, 1.0, |f| f * f), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            gaussian_expectation(&rule, 0.0, 1.0, |f| f.powi(4)),
            3.0,
            epsilon = 1e-11
        );
        // E[e^f] under N(0.3, 2) = e^{0.3 + 1}
        assert_abs_diff_eq!(
            gaussian_expectation(&rule, 0.3, 2.0, f64::exp),
            1.3f64.exp(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn hermite_orders_are_consistent() {
        for n in [1, 2, 3, 7, 20, 40, 64] {
            let r = gauss_hermite(n).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(total, PI.sqrt(), epsilon = 1e-12);
            assert!(r.nodes.windows(2).all(|w| w[0] > w[1]) || n == 1);
        }
        assert!(gauss_hermite(0).is_err());
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let r = gauss_legendre_on(5, 0.0, 2.0).unwrap();
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(9)).sum();
        assert_abs_diff_eq!(v, 2f64.powi(10) / 10.0, epsilon = 1e-10);
        let w: f64 = gauss_legendre(50).unwrap().weights.iter().sum();
        assert_abs_diff_eq!(w, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn tensor_grid_area() {
        let (pts, w) = tensor_grid(&[(0.0, 2.0), (-1.0, 2.0)], &[4, 3]).unwrap();
        assert_eq!(pts.len(), 12);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 6.0, epsilon = 1e-13);
        let xy: f64 = pts.iter().zip(&w).map(|(p, w)| w * p[0] * p[1]).sum();
        // ∫₀² x dx · ∫₋₁² y dy = 2 · 1.5
        assert_abs_diff_eq!(xy, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_handles_narrow_peak() {
        let s = 1e-3;
        let f = |x: f64| (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt());
        let v = integrate_adaptive(&f, -1.0, 1.0, 1e-10);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
    }
}
