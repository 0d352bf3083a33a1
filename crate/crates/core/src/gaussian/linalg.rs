//! Dense factorization helpers. Nothing in the crate forms an explicit
//! inverse; every solve goes through a triangular factor.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter of the first factorization attempt.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-2;

/// Tolerance used by the symmetry precondition.
const SYMMETRY_TOL: f64 = 1e-10;

/// Largest absolute asymmetry `|A_ij - A_ji|` divided by the largest entry.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Lower Cholesky factor of `A + jitter·I`.
///
/// `base_jitter` is relative to the mean of the diagonal. The jitter grows
/// by a factor of ten per failed attempt up to `MAX_RELATIVE_JITTER`. The
/// absolute jitter that succeeded is returned with the factor.
pub fn cholesky_jittered(a: &DMatrix<f64>, base_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            what: "cholesky input must be square",
            left: a.shape(),
            right: (a.ncols(), a.nrows()),
        });
    }
    if !(base_jitter > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "base jitter must be positive, got {base_jitter}"
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mean_diag = a.diagonal().mean();
    if !(mean_diag > 0.0 && mean_diag.is_finite()) {
        return Err(Error::NotPositiveDefinite { jitter: 0.0 });
    }

    let mut rel = base_jitter;
    let mut last = rel * mean_diag;
    while rel <= MAX_RELATIVE_JITTER * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        last = jitter;
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            let l = ch.unpack();
            if l.iter().all(|v| v.is_finite()) {
                return Ok((l, jitter));
            }
        }
        rel *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter: last })
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.solve_lower_triangular(b)
        .expect("triangular factor has a zero pivot")
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b)
        .expect("triangular factor has a zero pivot")
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_t(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("triangular factor has a zero pivot")
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_t_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("triangular factor has a zero pivot")
}

/// Solves `(L Lᵀ) X = B`.
pub fn chol_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    solve_lower_t(l, &solve_lower(l, b))
}

/// Solves `(L Lᵀ) x = b`.
pub fn chol_solve_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_t_vec(l, &solve_lower_vec(l, b))
}

/// `log det(L Lᵀ)`.
pub fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Averages `A` with its transpose in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Rows `rows` and columns `cols` of `a`.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Validates that every index is `< dim` and appears once.
pub fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    for &i in idx {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if seen[i] {
            return Err(Error::DuplicateIndex(i));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Indices of `0..dim` that are not in `idx`, in increasing order.
pub fn complement(idx: &[usize], dim: usize) -> Vec<usize> {
    let mut used = vec![false; dim];
    for &i in idx {
        used[i] = true;
    }
    (0..dim).filter(|&i| !used[i]).collect()
}
