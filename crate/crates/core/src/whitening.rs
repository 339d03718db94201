//! Whitening transforms, length normalization and recursive whitening chains.
//!
//! A chain alternates `whiten -> length-normalize` for every stage. Stage 1 is
//! fit on the primary (training) set; each later stage is refit on the matched
//! set after pushing it through all earlier stages, which removes the
//! non-whiteness that length normalization reintroduces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::types::{IVector, IVectorSet};

pub const DEFAULT_MAX_DEPTH: usize = 3;

/// Diagonal loading added to the covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ridge {
    Absolute(f64),
    /// Multiple of `trace(C) / d`.
    Relative(f64),
}

impl Ridge {
    pub fn resolve(self, cov: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Absolute(r) => r,
            Ridge::Relative(f) => f * cov.trace() / cov.nrows() as f64,
        }
    }
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningStage {
    pub mean: Vec<f64>,
    /// Row-major `d x d` symmetric positive definite matrix.
    pub matrix: Vec<f64>,
}

impl WhiteningStage {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        WhiteningStage {
            mean: vec![0.0; dim],
            matrix,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.matrix)
    }
}

pub fn fit_whitener(data: &IVectorSet, ridge: Ridge) -> Result<WhiteningStage> {
    if data.len() < 2 {
        return Err(Error::invalid("whitening needs at least 2 vectors"));
    }
    if data.dim == 0 {
        return Err(Error::invalid("whitening needs dim >= 1"));
    }
    for v in data.vectors() {
        check_dim(data.dim, v.dim())?;
    }
    let rows = || data.vectors().map(IVector::as_slice);
    let mean = linalg::mean(rows(), data.dim);
    let mut cov = linalg::covariance(rows(), &mean);
    let r = ridge.resolve(&cov);
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("ridge must be nonnegative, got {r}")));
    }
    for i in 0..data.dim {
        cov[(i, i)] += r;
    }
    let m = linalg::inv_sqrt_spd(&cov, "whitening covariance")?;
    Ok(WhiteningStage {
        mean: mean.iter().copied().collect(),
        matrix: linalg::to_row_major(&m),
    })
}

/// `matrix * (v - mean)`.
pub fn apply_stage(stage: &WhiteningStage, v: &IVector) -> Result<IVector> {
    let d = stage.dim();
    check_dim(d, v.dim())?;
    let centered: Vec<f64> = v.0.iter().zip(&stage.mean).map(|(x, m)| x - m).collect();
    let out = stage
        .matrix
        .chunks_exact(d)
        .map(|row| linalg::dot(row, &centered))
        .collect();
    Ok(IVector(out))
}

pub fn length_normalize(v: &IVector) -> Result<IVector> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(IVector(v.0.iter().map(|x| x / n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitSubset {
    Primary,
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningChain {
    pub stages: Vec<WhiteningStage>,
    pub fit_subsets: Vec<FitSubset>,
}

impl WhiteningChain {
    pub fn single(stage: WhiteningStage) -> Self {
        WhiteningChain {
            stages: vec![stage],
            fit_subsets: vec![FitSubset::Primary],
        }
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.stages.first().map_or(0, WhiteningStage::dim)
    }

    pub fn apply_set(&self, set: &IVectorSet) -> Result<IVectorSet> {
        set.try_map(|v| apply_chain(self, v))
    }
}

pub fn fit_recursive_chain(
    primary: &IVectorSet,
    matched: &IVectorSet,
    depth: usize,
    ridge: Ridge,
) -> Result<WhiteningChain> {
    if depth == 0 || depth > DEFAULT_MAX_DEPTH {
        return Err(Error::invalid(format!(
            "whitening depth must be in 1..={DEFAULT_MAX_DEPTH}, got {depth}"
        )));
    }
    if primary.is_empty() || matched.is_empty() {
        return Err(Error::invalid("recursive whitening needs non-empty primary and matched sets"));
    }
    check_dim(primary.dim, matched.dim)?;

    let mut chain = WhiteningChain::single(fit_whitener(primary, ridge)?);
    if depth == 1 {
        return Ok(chain);
    }
    let mut current = matched.try_map(|v| length_normalize(&apply_stage(&chain.stages[0], v)?))?;
    for level in 1..depth {
        let stage = fit_whitener(&current, ridge)?;
        if level + 1 < depth {
            current = current.try_map(|v| length_normalize(&apply_stage(&stage, v)?))?;
        }
        chain.stages.push(stage);
        chain.fit_subsets.push(FitSubset::Matched);
    }
    Ok(chain)
}

pub fn apply_chain(chain: &WhiteningChain, v: &IVector) -> Result<IVector> {
    if chain.stages.is_empty() {
        return Err(Error::invalid("empty whitening chain"));
    }
    let mut cur = v.clone();
    for stage in &chain.stages {
        cur = length_normalize(&apply_stage(stage, &cur)?)?;
    }
    Ok(cur)
}

/// `‖cov − I‖_F` of a set, using the divide-by-N covariance.
pub fn whiteness_residual(set: &IVectorSet) -> f64 {
    let rows = || set.vectors().map(IVector::as_slice);
    let mean: DVector<f64> = linalg::mean(rows(), set.dim);
    linalg::identity_residual(&linalg::covariance(rows(), &mean))
}

/// Residual of `set` after each prefix `1..=k` of the chain (whiten + normalize per stage).
pub fn stage_residuals(chain: &WhiteningChain, set: &IVectorSet) -> Result<Vec<f64>> {
    let mut cur = set.clone();
    let mut out = Vec::with_capacity(chain.depth());
    for stage in &chain.stages {
        cur = cur.try_map(|v| length_normalize(&apply_stage(stage, v)?))?;
        out.push(whiteness_residual(&cur));
    }
    Ok(out)
}
