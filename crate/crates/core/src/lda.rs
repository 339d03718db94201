//! Multi-class linear discriminant analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::types::{IVector, IVectorSet, LabelSet};
use crate::whitening::Ridge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaProjection {
    pub mean: Vec<f64>,
    /// Row-major `d x k`; column `j` is the `j`-th discriminant direction (unit Euclidean norm).
    pub basis: Vec<f64>,
    pub out_dim: usize,
    /// Generalized eigenvalue of each retained direction, descending.
    pub eigenvalues: Vec<f64>,
}

impl LdaProjection {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.in_dim()).map(|i| self.basis[i * self.out_dim + j]).collect()
    }

    pub fn apply_set(&self, set: &IVectorSet) -> Result<IVectorSet> {
        set.try_map(|v| apply_lda(self, v))
    }
}

/// Solves `S_b u = λ (S_w + ridge·I) u` and keeps the top `out_dim` directions.
///
/// Scatter matrices are normalized by the number of labeled vectors; `S_b` is
/// weighted by class counts. Each direction is scaled to unit length and its
/// largest-magnitude entry made positive.
pub fn fit_lda(data: &IVectorSet, labels: &LabelSet, out_dim: usize, ridge: Ridge) -> Result<LdaProjection> {
    let idx = data.label_indices(labels)?;
    let d = data.dim;
    let mut counts = vec![0usize; labels.len()];
    let mut sums = vec![DVector::<f64>::zeros(d); labels.len()];
    for (e, k) in data.entries.iter().zip(&idx) {
        let Some(k) = *k else { continue };
        check_dim(d, e.vector.dim())?;
        counts[k] += 1;
        for (s, x) in sums[k].iter_mut().zip(&e.vector.0) {
            *s += x;
        }
    }
    let present: Vec<usize> = (0..labels.len()).filter(|&k| counts[k] > 0).collect();
    if present.len() < 2 {
        return Err(Error::invalid("LDA needs at least two classes"));
    }
    if out_dim == 0 || out_dim > present.len() - 1 {
        return Err(Error::invalid(format!(
            "LDA output dim must be in 1..={}, got {out_dim}",
            present.len() - 1
        )));
    }
    if out_dim > d {
        return Err(Error::invalid(format!("LDA output dim {out_dim} exceeds input dim {d}")));
    }
    if let Some(&k) = present.iter().find(|&&k| counts[k] < 2) {
        return Err(Error::invalid(format!(
            "class `{}` has fewer than 2 samples",
            labels.get(k).unwrap()
        )));
    }
    let n: usize = counts.iter().sum();
    let class_means: Vec<DVector<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { s.clone() })
        .collect();
    let mean = sums.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n as f64;

    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut diff = DVector::<f64>::zeros(d);
    for (e, k) in data.entries.iter().zip(&idx) {
        let Some(k) = *k else { continue };
        for i in 0..d {
            diff[i] = e.vector.0[i] - class_means[k][i];
        }
        sw.syger(1.0, &diff, &diff, 1.0);
    }
    sw.fill_upper_triangle_with_lower_triangle();
    sw /= n as f64;
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for &k in &present {
        let dm = &class_means[k] - &mean;
        sb += (&dm * dm.transpose()) * counts[k] as f64;
    }
    sb /= n as f64;

    let r = ridge.resolve(&sw);
    for i in 0..d {
        sw[(i, i)] += r;
    }
    // reduce to a symmetric problem: W S_b W v = λ v with W = S_w^{-1/2}, u = W v
    let w = linalg::inv_sqrt_spd(&sw, "within-class scatter")?;
    let mut m = &w * sb * &w;
    m = (&m + m.transpose()) * 0.5;
    let (values, vectors) = linalg::sorted_eigen(m);

    let mut basis = vec![0.0; d * out_dim];
    for j in 0..out_dim {
        let mut u = &w * vectors.column(j);
        let nrm = u.norm();
        if nrm == 0.0 {
            return Err(Error::Singular("degenerate discriminant direction".into()));
        }
        u /= nrm;
        let pivot = (0..d).fold(0, |best, i| if u[i].abs() > u[best].abs() { i } else { best });
        if u[pivot] < 0.0 {
            u = -u;
        }
        for i in 0..d {
            basis[i * out_dim + j] = u[i];
        }
    }
    Ok(LdaProjection {
        mean: mean.iter().copied().collect(),
        basis,
        out_dim,
        eigenvalues: values[..out_dim].to_vec(),
    })
}

/// `basisᵀ (v − mean)`.
pub fn apply_lda(p: &LdaProjection, v: &IVector) -> Result<IVector> {
    check_dim(p.in_dim(), v.dim())?;
    let mut out = vec![0.0; p.out_dim];
    for (i, (x, m)) in v.0.iter().zip(&p.mean).enumerate() {
        let c = x - m;
        let row = &p.basis[i * p.out_dim..][..p.out_dim];
        for (o, b) in out.iter_mut().zip(row) {
            *o += b * c;
        }
    }
    Ok(IVector(out))
}
