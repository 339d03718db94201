//! Dialect enrollment models and cosine distance scoring.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::types::{DialectLabel, Domain, IVector, IVectorSet, LabelSet, ScoreTable};

/// Interpolation weight on the in-domain models, tuned on DEV.
pub const DEFAULT_GAMMA: f64 = 0.91;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Averaged { domains: Vec<Domain> },
    Interpolated { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialectModelSet {
    pub labels: LabelSet,
    /// Unit-norm model vector per label, in label order.
    pub models: Vec<Vec<f64>>,
    pub provenance: Provenance,
    pub n_per_dialect: Vec<usize>,
}

impl DialectModelSet {
    pub fn dim(&self) -> usize {
        self.models.first().map_or(0, Vec::len)
    }
}

fn unit(v: Vec<f64>) -> Result<Vec<f64>> {
    let n = linalg::norm(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

/// Per-dialect mean of the (already post-processed) vectors, unit-normalized.
pub fn fit_dialect_means(data: &IVectorSet, labels: &LabelSet) -> Result<DialectModelSet> {
    let idx = data.label_indices(labels)?;
    let mut sums = vec![vec![0.0; data.dim]; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    let mut domains = Vec::new();
    for (e, k) in data.entries.iter().zip(idx) {
        let Some(k) = k else { continue };
        check_dim(data.dim, e.vector.dim())?;
        for (s, x) in sums[k].iter_mut().zip(&e.vector.0) {
            *s += x;
        }
        counts[k] += 1;
        if !domains.contains(&e.utt.domain) {
            domains.push(e.utt.domain);
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "dialect `{}` has no utterances",
            labels.get(k).unwrap()
        )));
    }
    domains.sort();
    let models = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| unit(s.into_iter().map(|x| x / n as f64).collect()))
        .collect::<Result<_>>()?;
    Ok(DialectModelSet {
        labels: labels.clone(),
        models,
        provenance: Provenance::Averaged { domains },
        n_per_dialect: counts,
    })
}

/// `(1 − γ)·trn + γ·dev` per dialect, unit-normalized. The endpoints return the inputs unchanged.
pub fn interpolate_models(trn: &DialectModelSet, dev: &DialectModelSet, gamma: f64) -> Result<DialectModelSet> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must be in [0, 1], got {gamma}")));
    }
    if trn.labels != dev.labels {
        return Err(Error::LabelMismatch("train and dev models use different label sets".into()));
    }
    check_dim(trn.dim(), dev.dim())?;
    let models = if gamma == 0.0 {
        trn.models.clone()
    } else if gamma == 1.0 {
        dev.models.clone()
    } else {
        trn.models
            .iter()
            .zip(&dev.models)
            .map(|(a, b)| unit(a.iter().zip(b).map(|(x, y)| (1.0 - gamma) * x + gamma * y).collect()))
            .collect::<Result<_>>()?
    };
    Ok(DialectModelSet {
        labels: trn.labels.clone(),
        models,
        provenance: Provenance::Interpolated { gamma },
        n_per_dialect: trn.n_per_dialect.iter().zip(&dev.n_per_dialect).map(|(a, b)| a + b).collect(),
    })
}

/// Cosine similarity of `v` against every dialect model.
pub fn cds_score(models: &DialectModelSet, v: &IVector) -> Result<Vec<f64>> {
    check_dim(models.dim(), v.dim())?;
    models.models.iter().map(|m| linalg::cosine(&v.0, m)).collect()
}

pub fn score_set(models: &DialectModelSet, data: &IVectorSet, system_id: &str) -> Result<ScoreTable> {
    let mut t = ScoreTable::new(system_id, models.labels.clone());
    for e in &data.entries {
        t.push_row(e.utt.id.clone(), cds_score(models, &e.vector)?)?;
    }
    Ok(t)
}

fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::invalid("empty cohort"));
    }
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Singular("cohort standard deviation is zero".into()));
    }
    Ok((mu, sd))
}

/// Symmetric score normalization.
///
/// `per_model[k]` are cohort scores of model `k`; `per_test[i]` are cohort
/// scores of the test vector in row `i`.
pub fn snorm_scores(raw: &ScoreTable, per_model: &[Vec<f64>], per_test: &[Vec<f64>]) -> Result<ScoreTable> {
    check_dim(raw.labels.len(), per_model.len())?;
    check_dim(raw.rows.len(), per_test.len())?;
    let model_stats = per_model.iter().map(|c| mean_std(c)).collect::<Result<Vec<_>>>()?;
    let mut out = ScoreTable::new(raw.system_id.clone(), raw.labels.clone());
    for (row, cohort) in raw.rows.iter().zip(per_test) {
        let (mt, st) = mean_std(cohort)?;
        let scores = row
            .scores
            .iter()
            .zip(&model_stats)
            .map(|(s, (mm, sm))| 0.5 * ((s - mm) / sm + (s - mt) / st))
            .collect();
        out.push_row(row.utt_id.clone(), scores)?;
    }
    Ok(out)
}

/// Cohort score lists for [`snorm_scores`]: every model and every test vector is scored against every cohort vector.
pub fn snorm_cohorts(
    models: &DialectModelSet,
    cohort: &IVectorSet,
    tests: &IVectorSet,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let per_model = models
        .models
        .iter()
        .map(|m| cohort.vectors().map(|c| linalg::cosine(m, &c.0)).collect())
        .collect::<Result<_>>()?;
    let per_test = tests
        .vectors()
        .map(|t| cohort.vectors().map(|c| linalg::cosine(&t.0, &c.0)).collect())
        .collect::<Result<_>>()?;
    Ok((per_model, per_test))
}

/// Index of the largest score; the first index wins ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if !(*s > scores[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn classify(labels: &LabelSet, scores: &[f64]) -> Result<DialectLabel> {
    if scores.is_empty() {
        return Err(Error::invalid("empty score vector"));
    }
    check_dim(labels.len(), scores.len())?;
    let i = argmax(scores).expect("non-empty");
    Ok(labels.get(i).expect("index in range").clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Utterance;
    use proptest::prelude::*;

    fn labels(n: usize) -> LabelSet {
        LabelSet::new((0..n).map(|i| format!("L{i}"))).unwrap()
    }

    fn data(rows: &[(&str, &[f64])]) -> IVectorSet {
        let mut s = IVectorSet::new(rows[0].1.len());
        for (i, (l, v)) in rows.iter().enumerate() {
            s.push(Utterance::new(format!("u{i}"), Domain::Trn, Some((*l).into())), IVector(v.to_vec()));
        }
        s
    }

    #[test]
    fn mean_of_single_utterance() {
        let ls = LabelSet::new(["A"]).unwrap();
        let m = fit_dialect_means(&data(&[("A", &[3.0, 4.0])]), &ls).unwrap();
        assert_eq!(m.models[0], vec![0.6, 0.8]);
        assert_eq!(m.n_per_dialect, vec![1]);
    }

    #[test]
    fn mean_of_two_orthogonal() {
        let ls = LabelSet::new(["A"]).unwrap();
        let m = fit_dialect_means(&data(&[("A", &[1.0, 0.0]), ("A", &[0.0, 1.0])]), &ls).unwrap();
        let h = 0.5f64.sqrt();
        assert!((m.models[0][0] - h).abs() < 1e-15 && (m.models[0][1] - h).abs() < 1e-15);
    }

    #[test]
    fn missing_dialect_is_an_error() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        assert!(fit_dialect_means(&data(&[("A", &[1.0, 0.0])]), &ls).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_default() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let trn = fit_dialect_means(&data(&[("A", &[1.0, 0.2]), ("B", &[0.1, 1.0])]), &ls).unwrap();
        let dev = fit_dialect_means(&data(&[("A", &[0.3, 1.0]), ("B", &[1.0, -0.5])]), &ls).unwrap();
        assert_eq!(interpolate_models(&trn, &dev, 0.0).unwrap().models, trn.models);
        assert_eq!(interpolate_models(&trn, &dev, 1.0).unwrap().models, dev.models);
        let mid = interpolate_models(&trn, &dev, DEFAULT_GAMMA).unwrap();
        assert_eq!(mid.provenance, Provenance::Interpolated { gamma: 0.91 });
        for m in &mid.models {
            assert!((linalg::norm(m) - 1.0).abs() < 1e-12);
        }
        assert!(interpolate_models(&trn, &dev, 1.5).is_err());
        let other = fit_dialect_means(
            &data(&[("A", &[1.0, 0.0]), ("C", &[0.0, 1.0])]),
            &LabelSet::new(["A", "C"]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            interpolate_models(&trn, &other, 0.5),
            Err(Error::LabelMismatch(_))
        ));
    }

    #[test]
    fn cds_identical_orthogonal_antipodal() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let m = fit_dialect_means(&data(&[("A", &[1.0, 0.0]), ("B", &[0.0, 1.0])]), &ls).unwrap();
        assert_eq!(cds_score(&m, &IVector(vec![1.0, 0.0])).unwrap(), vec![1.0, 0.0]);
        assert_eq!(cds_score(&m, &IVector(vec![-1.0, 0.0])).unwrap()[0], -1.0);
        assert!(matches!(cds_score(&m, &IVector(vec![0.0, 0.0])), Err(Error::ZeroVector)));
    }

    #[test]
    fn snorm_identity_and_centered() {
        let ls = LabelSet::new(["A"]).unwrap();
        let mut t = ScoreTable::new("s", ls);
        t.push_row("u", vec![0.7]).unwrap();
        // cohort {-1, 1}: mean 0, population std 1
        let unit = vec![vec![-1.0, 1.0]];
        assert_eq!(snorm_scores(&t, &unit, &unit).unwrap().rows[0].scores, vec![0.7]);
        let centered = vec![vec![0.6, 0.8]];
        let out = snorm_scores(&t, &centered, &centered).unwrap();
        assert!(out.rows[0].scores[0].abs() < 1e-15);
        assert!(snorm_scores(&t, &[vec![0.5, 0.5]], &unit).is_err());
    }

    #[test]
    fn snorm_three_score_cohort() {
        // model cohort {0.1, 0.2, 0.6}: mean 0.3, var ((0.04+0.01+0.09)/3) = 0.14/3
        // test cohort {0.0, 0.3, 0.3}: mean 0.2, var (0.04+0.01+0.01)/3 = 0.02
        let mut t = ScoreTable::new("s", LabelSet::new(["A"]).unwrap());
        t.push_row("u", vec![0.5]).unwrap();
        let out = snorm_scores(&t, &[vec![0.1, 0.2, 0.6]], &[vec![0.0, 0.3, 0.3]]).unwrap();
        let expect = 0.5 * ((0.5 - 0.3) / (0.14f64 / 3.0).sqrt() + (0.5 - 0.2) / 0.02f64.sqrt());
        assert!((out.rows[0].scores[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn classify_tie_rules() {
        let ls = labels(5);
        assert_eq!(classify(&ls, &[0.9, 0.1, 0.1, 0.1, 0.1]).unwrap().as_str(), "L0");
        assert_eq!(classify(&ls, &[0.0, 0.5, 0.1, 0.5, 0.2]).unwrap().as_str(), "L1");
        assert_eq!(classify(&ls, &[0.3; 5]).unwrap().as_str(), "L0");
        assert!(classify(&ls, &[]).is_err());
    }

    proptest! {
        #[test]
        fn cds_is_scale_invariant(v in prop::collection::vec(-5.0f64..5.0, 4), c in 0.01f64..100.0) {
            prop_assume!(linalg::norm(&v) > 1e-3);
            let ls = labels(3);
            let m = fit_dialect_means(&data(&[
                ("L0", &[1.0, 0.5, 0.0, -1.0]),
                ("L1", &[0.0, 1.0, 2.0, 0.0]),
                ("L2", &[-1.0, 0.0, 0.3, 0.4]),
            ]), &ls).unwrap();
            let a = cds_score(&m, &IVector(v.clone())).unwrap();
            let b = cds_score(&m, &IVector(v.iter().map(|x| x * c).collect())).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(argmax(&a), argmax(&b));
        }

        #[test]
        fn each_model_is_its_own_nearest(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 4)) {
            let ls = labels(4);
            let named: Vec<(String, Vec<f64>)> = rows.iter().enumerate().map(|(i, r)| (format!("L{i}"), r.clone())).collect();
            prop_assume!(rows.iter().all(|r| linalg::norm(r) > 1e-3));
            let refs: Vec<(&str, &[f64])> = named.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect();
            let m = fit_dialect_means(&data(&refs), &ls).unwrap();
            // pairwise non-identical models
            for i in 0..4 { for j in (i + 1)..4 {
                prop_assume!(m.models[i] != m.models[j]);
            }}
            for (k, model) in m.models.iter().enumerate() {
                let s = cds_score(&m, &IVector(model.clone())).unwrap();
                prop_assert_eq!(classify(&ls, &s).unwrap(), ls.get(k).unwrap().clone());
            }
        }
    }
}
