//! One-vs-rest linear SVM trained with a Pegasos-style subgradient method.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::text_features::FeatureVector;
use crate::types::{IVectorSet, LabelSet, ScoreTable};

pub const DEFAULT_C: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: DEFAULT_C,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub labels: LabelSet,
    /// One weight vector per label, in label order.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub c: f64,
    pub penalty: Penalty,
    pub dim: usize,
}

/// Weight vector kept as `scale * v` so the per-step shrink is O(1). The bias is not shrunk.
struct ScaledWeights {
    v: Vec<f64>,
    bias: f64,
    scale: f64,
}

impl ScaledWeights {
    fn margin(&self, x: &FeatureVector) -> f64 {
        self.scale * x.entries.iter().map(|&(i, val)| self.v[i] * val).sum::<f64>() + self.bias
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.v.iter_mut().for_each(|w| *w = 0.0);
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    fn add(&mut self, x: &FeatureVector, step: f64) {
        let s = step / self.scale;
        for &(i, val) in &x.entries {
            self.v[i] += s * val;
        }
        self.bias += step;
    }
}

/// Trains one binary classifier per label on `(features[i], targets[i])`.
///
/// Each binary problem minimizes `½‖w‖² + C·Σ hinge(y(w·x + b))` with an
/// unpenalized bias, using step size `1/(λt)` with `λ = 1/(C·n)` over seeded
/// shuffled epochs.
pub fn train_linear_svm(
    features: &[FeatureVector],
    targets: &[usize],
    labels: &LabelSet,
    config: &SvmConfig,
) -> Result<LinearSvmModel> {
    check_dim(features.len(), targets.len())?;
    if !(config.c > 0.0) || !config.c.is_finite() {
        return Err(Error::invalid(format!("C must be positive, got {}", config.c)));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be positive"));
    }
    let dim = features.first().map_or(0, |f| f.dim);
    for f in features {
        check_dim(dim, f.dim)?;
        f.check()?;
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= labels.len()) {
        return Err(Error::invalid(format!("target index {t} outside label set")));
    }
    let mut present = targets.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::invalid("SVM training needs at least two labels"));
    }

    let n = features.len();
    let lambda = 1.0 / (config.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let orders: Vec<Vec<usize>> = (0..config.epochs)
        .map(|_| {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();

    let mut weights = Vec::with_capacity(labels.len());
    let mut bias = Vec::with_capacity(labels.len());
    for k in 0..labels.len() {
        let mut w = ScaledWeights {
            v: vec![0.0; dim],
            bias: 0.0,
            scale: 1.0,
        };
        let mut t = 0usize;
        for order in &orders {
            for &i in order {
                t += 1;
                let y = if targets[i] == k { 1.0 } else { -1.0 };
                let eta = 1.0 / (lambda * t as f64);
                let margin = y * w.margin(&features[i]);
                w.shrink(1.0 - 1.0 / t as f64);
                if margin < 1.0 {
                    w.add(&features[i], eta * y);
                }
            }
        }
        let s = w.scale;
        let wk: Vec<f64> = w.v.iter().map(|x| x * s).collect();
        if wk.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("svm weights".into()));
        }
        weights.push(wk);
        bias.push(w.bias);
    }
    Ok(LinearSvmModel {
        labels: labels.clone(),
        weights,
        bias,
        c: config.c,
        penalty: Penalty::L2,
        dim,
    })
}

/// `w_label · x + b_label` for every label.
pub fn svm_decision(model: &LinearSvmModel, x: &FeatureVector) -> Result<Vec<f64>> {
    check_dim(model.dim, x.dim)?;
    Ok(model
        .weights
        .iter()
        .zip(&model.bias)
        .map(|(w, b)| x.entries.iter().map(|&(i, v)| w[i] * v).sum::<f64>() + b)
        .collect())
}

/// Dense features and label indices of the labeled entries of a set.
pub fn set_features(set: &IVectorSet, labels: &LabelSet) -> Result<(Vec<FeatureVector>, Vec<usize>)> {
    let idx = set.label_indices(labels)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (e, k) in set.entries.iter().zip(idx) {
        if let Some(k) = k {
            xs.push(FeatureVector::from_dense(&e.vector.0));
            ys.push(k);
        }
    }
    Ok((xs, ys))
}

pub fn score_set(model: &LinearSvmModel, set: &IVectorSet, system_id: &str) -> Result<ScoreTable> {
    let mut t = ScoreTable::new(system_id, model.labels.clone());
    for e in &set.entries {
        t.push_row(e.utt.id.clone(), svm_decision(model, &FeatureVector::from_dense(&e.vector.0))?)?;
    }
    Ok(t)
}
