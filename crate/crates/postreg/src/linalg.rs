//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eig_sym(a: &DMatrix<f64>) -> f64 {
    sym(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of the symmetric part of `a`.
pub fn max_eig_sym(a: &DMatrix<f64>) -> f64 {
    sym(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Real parts of the eigenvalues of a square matrix.
pub fn eigenvalue_real_parts(a: &DMatrix<f64>) -> Vec<f64> {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .collect()
}

/// All eigenvalues strictly in the open left half plane.
pub fn is_hurwitz_matrix(a: &DMatrix<f64>) -> bool {
    !a.is_empty() && eigenvalue_real_parts(a).iter().all(|re| *re < 0.0)
}

/// Companion matrix of the monic polynomial
/// `λ^n + c_n λ^{n-1} + … + c_2 λ + c_1`, with `coeffs = (c_1, …, c_n)`
/// ordered by ascending power.
pub fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for (j, c) in coeffs.iter().enumerate() {
        m[(n - 1, j)] = -c;
    }
    m
}

/// Whether `λ^n + c_n λ^{n-1} + … + c_1` (ascending-power `coeffs`) has all
/// roots in the open left half plane.
pub fn is_hurwitz_poly(coeffs: &[f64]) -> bool {
    if coeffs.is_empty() {
        return false;
    }
    is_hurwitz_matrix(&companion(coeffs))
}

/// Coefficients `(h_1, …, h_d)` of `(λ+1)^d = λ^d + h_1 λ^{d-1} + … + h_d`,
/// ordered by descending power as the internal-model convention requires.
pub fn binomial_descending(d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    let mut c = 1.0;
    for i in 1..=d {
        c = c * (d as f64 - i as f64 + 1.0) / i as f64;
        out.push(c);
    }
    out
}

/// Finite-difference weights on the nodes `x` for the `order`-th derivative
/// evaluated at `z` (Fornberg's recursion).
pub fn fd_weights(z: f64, x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > order, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

/// Centered stencil weights for the `order`-th derivative on a uniform grid
/// of step `h` with `width` nodes (odd).
pub fn central_stencil(order: usize, width: usize, h: f64) -> Vec<f64> {
    assert!(width % 2 == 1, "stencil width must be odd");
    let half = (width / 2) as isize;
    let nodes: Vec<f64> = (-half..=half).map(|i| i as f64 * h).collect();
    fd_weights(0.0, &nodes, order)
}

const HALTON_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut f = 1.0 / base as f64;
    while i > 0 {
        inv += (i % base) as f64 * f;
        i /= base;
        f /= base as f64;
    }
    inv
}

/// `count` points of the Halton low-discrepancy sequence in the unit cube of
/// the given dimension (at most 12 axes).
pub fn halton(count: usize, dim: usize) -> Result<Vec<DVector<f64>>> {
    if dim > HALTON_PRIMES.len() {
        return Err(Error::Validation {
            field: "dim",
            reason: format!(
                "halton sampling supports up to {} axes",
                HALTON_PRIMES.len()
            ),
        });
    }
    Ok((0..count)
        .map(|i| DVector::from_fn(dim, |a, _| radical_inverse(i as u64 + 1, HALTON_PRIMES[a])))
        .collect())
}

/// Row-major nested representation used by the reports and the config files.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Inverse of [`matrix_to_rows`]; rejects ragged input.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation {
            field: "matrix",
            reason: "ragged rows".into(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
