//! Linear score calibration into [0, 1] and linear fusion of calibrated systems.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::types::{DialectLabel, ScoreTable};

/// Fusion weights for the i-vector, character and phone systems.
pub const DEFAULT_FUSION_WEIGHTS: [f64; 3] = [0.7, 0.2, 0.1];

/// Smallest admissible calibration slope.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub system_id: String,
    pub scale: f64,
    pub offset: f64,
    /// Free-form description of the data the map was fit on.
    pub fit_on: String,
}

/// Least-squares fit of `a·s + b` to one-hot targets over every labeled cell.
///
/// Rows without a label in `truth` are ignored. A non-positive slope is
/// replaced by a tiny positive one (offset refit), keeping the map order-preserving.
pub fn fit_calibration(
    scores: &ScoreTable,
    truth: &HashMap<String, DialectLabel>,
    fit_on: &str,
) -> Result<CalibrationParams> {
    let mut s_sum = 0.0;
    let mut t_sum = 0.0;
    let mut n = 0usize;
    let mut cells = Vec::new();
    for row in &scores.rows {
        let Some(label) = truth.get(&row.utt_id) else { continue };
        let k = scores
            .labels
            .index_of(label)
            .ok_or_else(|| Error::LabelMismatch(format!("`{label}` not in table labels")))?;
        for (j, &s) in row.scores.iter().enumerate() {
            let t = if j == k { 1.0 } else { 0.0 };
            s_sum += s;
            t_sum += t;
            n += 1;
            cells.push((s, t));
        }
    }
    if n == 0 {
        return Err(Error::invalid(format!("no labeled rows to calibrate `{}`", scores.system_id)));
    }
    let s_mean = s_sum / n as f64;
    let t_mean = t_sum / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (s, t) in cells {
        sxx += (s - s_mean) * (s - s_mean);
        sxy += (s - s_mean) * (t - t_mean);
    }
    if !(sxx > 0.0) {
        return Err(Error::Singular(format!("scores of `{}` have zero variance", scores.system_id)));
    }
    let scale = (sxy / sxx).max(MIN_SCALE);
    Ok(CalibrationParams {
        system_id: scores.system_id.clone(),
        scale,
        offset: t_mean - scale * s_mean,
        fit_on: fit_on.to_string(),
    })
}

/// `clamp(a·s + b, 0, 1)` on every cell.
pub fn apply_calibration(p: &CalibrationParams, t: &ScoreTable) -> Result<ScoreTable> {
    if p.system_id != t.system_id {
        return Err(Error::invalid(format!(
            "calibration for `{}` applied to `{}`",
            p.system_id, t.system_id
        )));
    }
    let mut out = t.clone();
    for row in &mut out.rows {
        for s in &mut row.scores {
            *s = (p.scale * *s + p.offset).clamp(0.0, 1.0);
        }
    }
    out.calibrated = true;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub weights: Vec<(String, f64)>,
}

impl FusionWeights {
    pub fn new(weights: Vec<(String, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("no fusion weights"));
        }
        let mut seen = HashSet::new();
        for (id, w) in &weights {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate system `{id}` in fusion weights")));
            }
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("weight for `{id}` must be >= 0, got {w}")));
            }
        }
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("fusion weights sum to {sum}, not 1")));
        }
        Ok(FusionWeights { weights })
    }

    pub fn get(&self, system_id: &str) -> Option<f64> {
        self.weights.iter().find(|(id, _)| id == system_id).map(|(_, w)| *w)
    }
}

pub const FUSED_SYSTEM_ID: &str = "fusion";

/// Cell-wise weighted sum of calibrated tables.
///
/// Tables are matched to weights by system id and must share labels and row
/// order. Terms are summed in system-id order, so the result does not depend
/// on the order of `tables`.
pub fn fuse(tables: &[ScoreTable], w: &FusionWeights) -> Result<ScoreTable> {
    let first = tables.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    if tables.len() != w.weights.len() {
        return Err(Error::invalid(format!(
            "{} tables but {} fusion weights",
            tables.len(),
            w.weights.len()
        )));
    }
    let mut ordered: Vec<(&ScoreTable, f64)> = Vec::with_capacity(tables.len());
    for t in tables {
        if !t.calibrated {
            return Err(Error::invalid(format!("table `{}` is not calibrated", t.system_id)));
        }
        t.check()?;
        let weight = w
            .get(&t.system_id)
            .ok_or_else(|| Error::invalid(format!("no fusion weight for `{}`", t.system_id)))?;
        if t.labels != first.labels {
            return Err(Error::LabelMismatch(format!("`{}` uses different labels", t.system_id)));
        }
        if t.rows.len() != first.rows.len() || t.rows.iter().zip(&first.rows).any(|(a, b)| a.utt_id != b.utt_id) {
            return Err(Error::invalid(format!("rows of `{}` are not aligned", t.system_id)));
        }
        ordered.push((t, weight));
    }
    ordered.sort_by(|a, b| a.0.system_id.cmp(&b.0.system_id));

    let mut out = ScoreTable::new(FUSED_SYSTEM_ID, first.labels.clone());
    for (i, row) in first.rows.iter().enumerate() {
        let scores = (0..first.labels.len())
            .map(|j| {
                let s: f64 = ordered.iter().map(|(t, wt)| wt * t.rows[i].scores[j]).sum();
                s.clamp(0.0, 1.0)
            })
            .collect();
        out.push_row(row.utt_id.clone(), scores)?;
    }
    out.calibrated = true;
    Ok(out)
}

/// Exhaustive search over simplex weights on a grid of `1/steps`, maximizing
/// accuracy on `truth`. Earlier grid points win ties.
pub fn fit_fusion_weights(
    tables: &[ScoreTable],
    truth: &HashMap<String, DialectLabel>,
    steps: usize,
) -> Result<FusionWeights> {
    if tables.is_empty() || steps == 0 {
        return Err(Error::invalid("fusion grid needs tables and steps >= 1"));
    }
    let mut best: Option<(f64, FusionWeights)> = None;
    let mut grid = vec![0usize; tables.len()];
    visit_compositions(&mut grid, 0, steps, &mut |parts| -> Result<()> {
        let ids = tables.iter().map(|t| t.system_id.clone());
        let mut weights: Vec<(String, f64)> = ids.zip(parts.iter().map(|&p| p as f64 / steps as f64)).collect();
        // exact sum of 1 regardless of rounding in the divisions
        let rest: f64 = weights[..weights.len() - 1].iter().map(|(_, w)| w).sum();
        weights.last_mut().unwrap().1 = (1.0 - rest).max(0.0);
        let w = FusionWeights::new(weights)?;
        let fused = fuse(tables, &w)?;
        let acc = metrics::evaluate_table(&fused, truth)?.accuracy;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, w));
        }
        Ok(())
    })?;
    Ok(best.expect("grid is non-empty").1)
}

fn visit_compositions(
    parts: &mut Vec<usize>,
    i: usize,
    remaining: usize,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if i + 1 == parts.len() {
        parts[i] = remaining;
        return f(parts);
    }
    for p in (0..=remaining).rev() {
        parts[i] = p;
        visit_compositions(parts, i + 1, remaining - p, f)?;
    }
    Ok(())
}
