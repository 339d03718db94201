//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn mean<'a, I>(rows: I, dim: usize) -> DVector<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut m = DVector::zeros(dim);
    let mut n = 0usize;
    for r in rows {
        for (acc, x) in m.iter_mut().zip(r) {
            *acc += x;
        }
        n += 1;
    }
    if n > 0 {
        m /= n as f64;
    }
    m
}

/// Maximum-likelihood (divide-by-N) covariance around `mean`.
pub fn covariance<'a, I>(rows: I, mean: &DVector<f64>) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let d = mean.len();
    let mut c = DMatrix::zeros(d, d);
    let mut n = 0usize;
    let mut centered = DVector::zeros(d);
    for r in rows {
        for i in 0..d {
            centered[i] = r[i] - mean[i];
        }
        c.syger(1.0, &centered, &centered, 1.0);
        n += 1;
    }
    if n > 0 {
        c /= n as f64;
    }
    c.fill_upper_triangle_with_lower_triangle();
    c
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Inverse symmetric square root of a symmetric positive definite matrix.
///
/// Fails when an eigenvalue is not safely positive relative to the largest one.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let (values, vectors) = sorted_eigen(m.clone());
    let largest = values.first().copied().unwrap_or(0.0);
    let floor = largest.abs() * f64::EPSILON * d as f64;
    if let Some(bad) = values.iter().find(|&&l| !(l > floor) || !l.is_finite()) {
        return Err(Error::Singular(format!("{what}: eigenvalue {bad:e} is not positive")));
    }
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(d, values.iter().map(|l| 1.0 / l.sqrt())));
    let mut out = &vectors * scale * vectors.transpose();
    // symmetrize away roundoff so the stored matrix is exactly symmetric
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

/// Frobenius norm of `m - I`.
pub fn identity_residual(m: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (m[(i, j)] - target).powi(2);
        }
    }
    acc.sqrt()
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
