//! Shared data model: labels, utterances, i-vector sets and score tables.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dialect names used when no label set is configured.
pub const DEFAULT_LABELS: [&str; 5] = ["EGY", "LEV", "GLF", "NOR", "MSA"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialectLabel(String);

impl DialectLabel {
    pub fn new(name: impl Into<String>) -> Self {
        DialectLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DialectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DialectLabel {
    fn from(s: &str) -> Self {
        DialectLabel(s.to_string())
    }
}

/// Ordered, duplicate-free set of labels fixed for one experiment.
///
/// The order matters: it is the column order of score tables and the
/// tie-breaking order of [`classify`](crate::dialect_model::classify).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<DialectLabel>,
}

impl LabelSet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<DialectLabel>,
    {
        let labels: Vec<DialectLabel> = names.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("label set is empty"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.as_str().is_empty() || l.as_str() == "-" || l.as_str().contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid label name `{l}`")));
            }
            if !seen.insert(l) {
                return Err(Error::invalid(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &DialectLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, i: usize) -> Option<&DialectLabel> {
        self.labels.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DialectLabel> {
        self.labels.iter()
    }

    pub fn as_slice(&self) -> &[DialectLabel] {
        &self.labels
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::new(DEFAULT_LABELS).expect("default labels are valid")
    }
}

impl From<String> for DialectLabel {
    fn from(s: String) -> Self {
        DialectLabel(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Trn,
    Dev,
    Tst,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Trn => "TRN",
            Domain::Dev => "DEV",
            Domain::Tst => "TST",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TRN" => Ok(Domain::Trn),
            "DEV" => Ok(Domain::Dev),
            "TST" => Ok(Domain::Tst),
            _ => Err(Error::invalid(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub domain: Domain,
    /// Absent for blind test data.
    pub label: Option<DialectLabel>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, domain: Domain, label: Option<DialectLabel>) -> Self {
        Utterance {
            id: id.into(),
            domain,
            label,
        }
    }
}

/// A fixed-length embedding vector (i-vector or any post-processed form of it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IVector(pub Vec<f64>);

impl IVector {
    pub fn new(values: Vec<f64>) -> Self {
        IVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        IVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.0)
    }
}

impl From<Vec<f64>> for IVector {
    fn from(v: Vec<f64>) -> Self {
        IVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub utt: Utterance,
    pub vector: IVector,
}

/// Labeled collection of equal-length vectors.
///
/// Construction does not enforce the invariants so that malformed files can
/// still be loaded and reported on; call [`validate_dataset`] (or
/// [`IVectorSet::validated`]) before computing with a set.
#[derive(Debug, Clone, PartialEq)]
pub struct IVectorSet {
    pub dim: usize,
    pub entries: Vec<Entry>,
}

impl IVectorSet {
    pub fn new(dim: usize) -> Self {
        IVectorSet {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, utt: Utterance, vector: IVector) {
        self.entries.push(Entry { utt, vector });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &IVector> {
        self.entries.iter().map(|e| &e.vector)
    }

    /// Returns the set unchanged if it validates, else the first violation as an error.
    pub fn validated(self) -> Result<Self> {
        match validate_dataset(&self) {
            ValidationReport::Ok => Ok(self),
            ValidationReport::Violations(v) => Err(Error::invalid(v[0].to_string())),
        }
    }

    /// Maps every vector through `f`, keeping utterance metadata. `f` may change the dimension.
    pub fn try_map<F>(&self, mut f: F) -> Result<IVectorSet>
    where
        F: FnMut(&IVector) -> Result<IVector>,
    {
        let mut entries = Vec::with_capacity(self.entries.len());
        let mut dim = None;
        for e in &self.entries {
            let v = f(&e.vector)?;
            dim.get_or_insert(v.dim());
            entries.push(Entry {
                utt: e.utt.clone(),
                vector: v,
            });
        }
        Ok(IVectorSet {
            dim: dim.unwrap_or(self.dim),
            entries,
        })
    }

    /// Concatenates two sets of the same dimension.
    pub fn concat(&self, other: &IVectorSet) -> Result<IVectorSet> {
        crate::error::check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        out.entries.extend(other.entries.iter().cloned());
        Ok(out)
    }

    pub fn filter_domain(&self, domain: Domain) -> IVectorSet {
        IVectorSet {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .filter(|e| e.utt.domain == domain)
                .cloned()
                .collect(),
        }
    }

    /// Label index of every labeled entry, failing on labels outside `labels`.
    pub fn label_indices(&self, labels: &LabelSet) -> Result<Vec<Option<usize>>> {
        self.entries
            .iter()
            .map(|e| match &e.utt.label {
                None => Ok(None),
                Some(l) => labels
                    .index_of(l)
                    .map(Some)
                    .ok_or_else(|| Error::LabelMismatch(format!("`{l}` on `{}` is not in the label set", e.utt.id))),
            })
            .collect()
    }

    /// Map from utterance id to label, for labeled entries only.
    pub fn truth(&self) -> HashMap<String, DialectLabel> {
        self.entries
            .iter()
            .filter_map(|e| e.utt.label.clone().map(|l| (e.utt.id.clone(), l)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimMismatch { id: String, expected: usize, got: usize },
    DuplicateId { id: String },
    NonFinite { id: String, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimMismatch { id, expected, got } => {
                write!(f, "dim mismatch for `{id}`: expected {expected}, got {got}")
            }
            Violation::DuplicateId { id } => write!(f, "duplicate id `{id}`"),
            Violation::NonFinite { id, index } => write!(f, "non-finite entry in `{id}` at index {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationReport {
    Ok,
    Violations(Vec<Violation>),
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValidationReport::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ValidationReport::Ok => &[],
            ValidationReport::Violations(v) => v,
        }
    }
}

/// Collects every invariant violation of `set`, in entry order.
pub fn validate_dataset(set: &IVectorSet) -> ValidationReport {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for e in &set.entries {
        let id = &e.utt.id;
        if !seen.insert(id.as_str()) {
            out.push(Violation::DuplicateId { id: id.clone() });
        }
        if e.vector.dim() != set.dim {
            out.push(Violation::DimMismatch {
                id: id.clone(),
                expected: set.dim,
                got: e.vector.dim(),
            });
        }
        // one report per vector is enough to locate the problem
        if let Some(index) = e.vector.0.iter().position(|x| !x.is_finite()) {
            out.push(Violation::NonFinite { id: id.clone(), index });
        }
    }
    if out.is_empty() {
        ValidationReport::Ok
    } else {
        ValidationReport::Violations(out)
    }
}

/// Utterances × labels score matrix produced by one system.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub system_id: String,
    pub labels: LabelSet,
    pub rows: Vec<ScoreRow>,
    pub calibrated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub utt_id: String,
    pub scores: Vec<f64>,
}

impl ScoreTable {
    pub fn new(system_id: impl Into<String>, labels: LabelSet) -> Self {
        ScoreTable {
            system_id: system_id.into(),
            labels,
            rows: Vec::new(),
            calibrated: false,
        }
    }

    pub fn push_row(&mut self, utt_id: impl Into<String>, scores: Vec<f64>) -> Result<()> {
        crate::error::check_dim(self.labels.len(), scores.len())?;
        self.rows.push(ScoreRow {
            utt_id: utt_id.into(),
            scores,
        });
        Ok(())
    }

    /// Checks the row-width invariant and, for calibrated tables, the [0, 1] range.
    pub fn check(&self) -> Result<()> {
        for r in &self.rows {
            crate::error::check_dim(self.labels.len(), r.scores.len())?;
            if r.scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("score for `{}`", r.utt_id)));
            }
            if self.calibrated && r.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::invalid(format!(
                    "calibrated score outside [0, 1] for `{}`",
                    r.utt_id
                )));
            }
        }
        Ok(())
    }

    /// Predicted label per row, using the tie rule of [`classify`](crate::dialect_model::classify).
    pub fn predictions(&self) -> Result<Vec<(String, DialectLabel)>> {
        self.rows
            .iter()
            .map(|r| {
                let label = crate::dialect_model::classify(&self.labels, &r.scores)?;
                Ok((r.utt_id.clone(), label))
            })
            .collect()
    }
}
