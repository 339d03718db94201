//! Accuracy, macro-averaged precision and recall, confusion matrices.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DialectLabel, LabelSet, ScoreTable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: LabelSet,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tallies predictions against truth. Both lists must cover the same utterance ids.
pub fn confusion(
    labels: &LabelSet,
    truth: &[(String, DialectLabel)],
    pred: &[(String, DialectLabel)],
) -> Result<ConfusionMatrix> {
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let index = |l: &DialectLabel| {
        labels
            .index_of(l)
            .ok_or_else(|| Error::LabelMismatch(format!("`{l}` is not in the label set")))
    };
    let mut predicted: HashMap<&str, &DialectLabel> = HashMap::with_capacity(pred.len());
    for (u, l) in pred {
        if predicted.insert(u.as_str(), l).is_some() {
            return Err(Error::invalid(format!("duplicate prediction for `{u}`")));
        }
    }
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labeled utterances",
            predicted.len(),
            truth.len()
        )));
    }
    for (u, t) in truth {
        let p = predicted
            .get(u.as_str())
            .ok_or_else(|| Error::invalid(format!("no prediction for `{u}`")))?;
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.clone(),
        counts,
    })
}

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Accuracy plus precision and recall averaged without weights over the labels
/// that occur in the truth. A label never predicted has precision 0.
pub fn evaluate(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let k = cm.labels.len();
    let trace: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut present = 0usize;
    for i in 0..k {
        let row: u64 = cm.counts[i].iter().sum();
        if row == 0 {
            continue;
        }
        let col: u64 = (0..k).map(|r| cm.counts[r][i]).sum();
        let diag = cm.counts[i][i] as f64;
        recall += diag / row as f64;
        precision += if col == 0 { 0.0 } else { diag / col as f64 };
        present += 1;
    }
    Ok(Metrics {
        accuracy: 100.0 * trace as f64 / total as f64,
        precision: 100.0 * precision / present as f64,
        recall: 100.0 * recall / present as f64,
    })
}

/// Confusion matrix of a score table's argmax decisions. Every row needs a label in `truth`.
pub fn table_confusion(table: &ScoreTable, truth: &HashMap<String, DialectLabel>) -> Result<ConfusionMatrix> {
    let pred = table.predictions()?;
    let t = pred
        .iter()
        .map(|(u, _)| {
            truth
                .get(u)
                .cloned()
                .map(|l| (u.clone(), l))
                .ok_or_else(|| Error::MissingLabel(u.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    confusion(&table.labels, &t, &pred)
}

pub fn evaluate_table(table: &ScoreTable, truth: &HashMap<String, DialectLabel>) -> Result<Metrics> {
    evaluate(&table_confusion(table, truth)?)
}

/// One aligned row per system.
pub fn format_summary(rows: &[(String, Metrics)]) -> String {
    let mut s = String::new();
    let name_w = rows.iter().map(|(id, _)| id.len()).max().unwrap_or(0).max("System".len());
    let _ = writeln!(
        s,
        "{:<name_w$}  {:>12}  {:>13}  {:>10}",
        "System", "Accuracy (%)", "Precision (%)", "Recall (%)"
    );
    for (id, m) in rows {
        let _ = writeln!(
            s,
            "{:<name_w$}  {:>12.2}  {:>13.2}  {:>10.2}",
            id, m.accuracy, m.precision, m.recall
        );
    }
    s
}

/// Aligned table, confusion matrix, then `key=value` lines.
pub fn format_report(system_id: &str, m: &Metrics, cm: &ConfusionMatrix) -> String {
    let mut s = format_summary(&[(system_id.to_string(), *m)]);
    let _ = writeln!(s);
    let label_w = cm.labels.iter().map(|l| l.as_str().len()).max().unwrap_or(0).max(6);
    let head = "true\\pred";
    let row_w = label_w.max(head.len());
    let _ = write!(s, "{head:<row_w$}");
    for l in cm.labels.iter() {
        let _ = write!(s, " {:>label_w$}", l.as_str());
    }
    let _ = writeln!(s);
    for (l, row) in cm.labels.iter().zip(&cm.counts) {
        let _ = write!(s, "{:<row_w$}", l.as_str());
        for c in row {
            let _ = write!(s, " {c:>label_w$}");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "system={system_id}");
    let _ = writeln!(s, "accuracy={:.4}", m.accuracy);
    let _ = writeln!(s, "precision={:.4}", m.precision);
    let _ = writeln!(s, "recall={:.4}", m.recall);
    let _ = writeln!(s, "total={}", cm.total());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(ls: &[&str]) -> Vec<(String, DialectLabel)> {
        ls.iter().enumerate().map(|(i, l)| (format!("u{i}"), (*l).into())).collect()
    }

    #[test]
    fn perfect_predictions() {
        let labels = LabelSet::new(["A", "B", "C"]).unwrap();
        let t = pairs(&["A", "B", "C", "A"]);
        let cm = confusion(&labels, &t, &t).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = evaluate(&cm).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (100.0, 100.0, 100.0));
    }

    #[test]
    fn swapped_pair_is_anti_diagonal() {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        let cm = confusion(&labels, &pairs(&["A", "B"]), &pairs(&["B", "A"])).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn six_utterance_tally() {
        let labels = LabelSet::new(["A", "B", "C"]).unwrap();
        let truth = pairs(&["A", "A", "B", "B", "C", "C"]);
        let pred = pairs(&["A", "B", "B", "C", "C", "A"]);
        let cm = confusion(&labels, &truth, &pred).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]);
        assert_eq!(cm.total(), 6);
    }

    #[test]
    fn three_utterance_example() {
        let labels = LabelSet::new(["A", "B", "C"]).unwrap();
        let cm = confusion(&labels, &pairs(&["A", "A", "B"]), &pairs(&["A", "B", "B"])).unwrap();
        let m = evaluate(&cm).unwrap();
        assert_eq!(format!("{:.2}", m.accuracy), "66.67");
        assert_eq!(m.precision, 75.0);
        assert_eq!(m.recall, 75.0);
    }

    #[test]
    fn never_predicted_label_counts_zero_precision() {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        let cm = confusion(&labels, &pairs(&["A", "B"]), &pairs(&["A", "A"])).unwrap();
        let m = evaluate(&cm).unwrap();
        assert_eq!(m.precision, 25.0);
        assert_eq!(m.recall, 50.0);
    }

    #[test]
    fn mismatch_and_empty() {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        assert!(confusion(&labels, &pairs(&["A", "B"]), &pairs(&["A"])).is_err());
        let empty = confusion(&labels, &[], &[]).unwrap();
        assert!(evaluate(&empty).is_err());
    }

    #[test]
    fn symmetric_matrix_has_equal_macro_precision_and_recall() {
        let labels = LabelSet::new(["A", "B", "C"]).unwrap();
        let cm = ConfusionMatrix {
            labels,
            counts: vec![vec![5, 2, 1], vec![2, 7, 3], vec![1, 3, 4]],
        };
        let m = evaluate(&cm).unwrap();
        assert!((m.precision - m.recall).abs() < 1e-12);
    }

    #[test]
    fn report_has_both_layouts() {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        let cm = confusion(&labels, &pairs(&["A", "B"]), &pairs(&["A", "B"])).unwrap();
        let r = format_report("sys", &evaluate(&cm).unwrap(), &cm);
        assert!(r.contains("Accuracy (%)  Precision (%)  Recall (%)"));
        assert!(r.contains("accuracy=100.0000\n"));
    }
}
