//! N-gram and phone-duration featurizers for word, character and phone transcripts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Out-of-vocabulary marker emitted by the word recognizer.
pub const OOV_MARKER: &str = "<UNK>";
/// Character-mode replacement for [`OOV_MARKER`].
pub const CHAR_UNK: &str = "<unk>";
/// Character-mode word boundary.
pub const CHAR_SPACE: &str = "<sp>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenMode {
    Word,
    Char,
    Phone,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub utt_id: String,
    pub tokens: Vec<String>,
    pub source: TokenMode,
}

impl Transcript {
    pub fn new(utt_id: impl Into<String>, tokens: Vec<String>, source: TokenMode) -> Self {
        Transcript {
            utt_id: utt_id.into(),
            tokens,
            source,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSequence {
    pub utt_id: String,
    /// `(symbol, duration in seconds)`.
    pub phones: Vec<(String, f64)>,
}

/// Splits words into characters, mapping the OOV marker to [`CHAR_UNK`] and
/// separating words with [`CHAR_SPACE`].
pub fn normalize_for_chars(t: &Transcript) -> Vec<String> {
    let mut out = Vec::new();
    for (i, word) in t.tokens.iter().enumerate() {
        if i > 0 {
            out.push(CHAR_SPACE.to_string());
        }
        if word == OOV_MARKER {
            out.push(CHAR_UNK.to_string());
        } else {
            out.extend(word.chars().map(String::from));
        }
    }
    out
}

pub type Ngram = Vec<String>;

/// Sliding-window n-gram counts, keyed in lexicographic token order.
pub fn count_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Result<BTreeMap<Ngram, usize>> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be >= 1"));
    }
    let mut counts = BTreeMap::new();
    for w in tokens.windows(n) {
        let key: Ngram = w.iter().map(|s| s.as_ref().to_string()).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramVocab {
    pub n: usize,
    pub mode: TokenMode,
    /// Sorted n-grams; position is the feature index.
    pub ngrams: Vec<Ngram>,
}

impl NgramVocab {
    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn index_of(&self, g: &Ngram) -> Option<usize> {
        self.ngrams.binary_search(g).ok()
    }
}

/// Tokens of a transcript in the given mode; word transcripts are split when `mode` is `Char`.
pub fn tokens_for(t: &Transcript, mode: TokenMode) -> Vec<String> {
    match (t.source, mode) {
        (TokenMode::Word, TokenMode::Char) => normalize_for_chars(t),
        _ => t.tokens.clone(),
    }
}

/// Vocabulary of all n-grams with corpus count `>= min_count`.
///
/// The caller decides the corpus (TRN, or TRN+DEV); test transcripts must not be included.
pub fn build_vocab(corpus: &[Transcript], n: usize, mode: TokenMode, min_count: usize) -> Result<NgramVocab> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let mut total: BTreeMap<Ngram, usize> = BTreeMap::new();
    for t in corpus {
        for (g, c) in count_ngrams(&tokens_for(t, mode), n)? {
            *total.entry(g).or_insert(0) += c;
        }
    }
    let ngrams: Vec<Ngram> = total
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(g, _)| g)
        .collect();
    if ngrams.is_empty() {
        return Err(Error::invalid(format!("no {n}-gram reaches min_count {min_count}")));
    }
    Ok(NgramVocab { n, mode, ngrams })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    Raw,
    L1,
    #[default]
    L2,
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
    pub normalization: Normalization,
}

impl FeatureVector {
    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dim: values.len(),
            entries: values.iter().copied().enumerate().collect(),
            normalization: Normalization::Raw,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let mut prev = None;
        for &(i, v) in &self.entries {
            if i >= self.dim || prev.is_some_and(|p| i <= p) {
                return Err(Error::invalid(format!("feature index {i} out of order or range")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature {i}")));
            }
            prev = Some(i);
        }
        Ok(())
    }
}

/// Projects counts onto `vocab`, dropping unknown n-grams, then normalizes.
///
/// An all-OOV input yields an empty vector (see [`FeatureVector::is_empty`]).
pub fn vectorize(counts: &BTreeMap<Ngram, usize>, vocab: &NgramVocab, norm: Normalization) -> FeatureVector {
    let mut entries: Vec<(usize, f64)> = counts
        .iter()
        .filter_map(|(g, &c)| vocab.index_of(g).map(|i| (i, c as f64)))
        .collect();
    entries.sort_by_key(|&(i, _)| i);
    let z = match norm {
        Normalization::Raw => 1.0,
        Normalization::L1 => entries.iter().map(|(_, v)| v.abs()).sum(),
        Normalization::L2 => entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt(),
    };
    if z > 0.0 {
        for e in &mut entries {
            e.1 /= z;
        }
    }
    FeatureVector {
        dim: vocab.len(),
        entries,
        normalization: norm,
    }
}

/// Sorted set of phone symbols seen in `seqs`.
pub fn phone_inventory(seqs: &[PhoneSequence]) -> Vec<String> {
    seqs.iter()
        .flat_map(|s| s.phones.iter().map(|(p, _)| p.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Per-phone duration statistics, three features per inventory phone:
/// share of total duration, mean duration in seconds, share of occurrences.
///
/// Phones outside the inventory are ignored; totals cover inventory phones only.
pub fn phone_duration_stats(seq: &PhoneSequence, inventory: &[String]) -> Result<FeatureVector> {
    if seq.phones.is_empty() {
        return Err(Error::invalid(format!("empty phone sequence for `{}`", seq.utt_id)));
    }
    if let Some((p, d)) = seq.phones.iter().find(|(_, d)| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::invalid(format!("phone `{p}` has non-positive duration {d}")));
    }
    let mut dur = vec![0.0; inventory.len()];
    let mut count = vec![0usize; inventory.len()];
    for (p, d) in &seq.phones {
        if let Some(i) = inventory.iter().position(|q| q == p) {
            dur[i] += d;
            count[i] += 1;
        }
    }
    let total_dur: f64 = dur.iter().sum();
    let total_count: usize = count.iter().sum();
    if total_count == 0 {
        return Err(Error::invalid(format!("no inventory phones in `{}`", seq.utt_id)));
    }
    let mut entries = Vec::new();
    for i in 0..inventory.len() {
        if count[i] == 0 {
            continue;
        }
        entries.push((3 * i, dur[i] / total_dur));
        entries.push((3 * i + 1, dur[i] / count[i] as f64));
        entries.push((3 * i + 2, count[i] as f64 / total_count as f64));
    }
    Ok(FeatureVector {
        dim: 3 * inventory.len(),
        entries,
        normalization: Normalization::Raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> Transcript {
        Transcript::new("u", ws.iter().map(|s| s.to_string()).collect(), TokenMode::Word)
    }

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn gram(v: &[&str]) -> Ngram {
        strs(v)
    }

    #[test]
    fn char_normalization() {
        assert_eq!(normalize_for_chars(&words(&["ab", "cd"])), strs(&["a", "b", "<sp>", "c", "d"]));
        assert_eq!(normalize_for_chars(&words(&["<UNK>"])), strs(&["<unk>"]));
        assert_eq!(normalize_for_chars(&words(&["a"])), strs(&["a"]));
        assert_eq!(
            normalize_for_chars(&words(&["مر", "<UNK>"])),
            strs(&["م", "ر", "<sp>", "<unk>"])
        );
    }

    #[test]
    fn ngram_counts() {
        let c = count_ngrams(&["a", "b", "a"], 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[&gram(&["a", "b"])], 1);
        assert_eq!(c[&gram(&["b", "a"])], 1);
        assert!(count_ngrams(&["a"], 2).unwrap().is_empty());
        assert_eq!(count_ngrams(&["a", "a", "a"], 1).unwrap()[&gram(&["a"])], 3);
        assert!(count_ngrams(&["a"], 0).is_err());
    }

    #[test]
    fn vocab_from_two_documents() {
        // doc1 bigrams: (x y) (y x) (x y); doc2: (y y) (y x)
        let corpus = vec![words(&["x", "y", "x", "y"]), words(&["y", "y", "x"])];
        let all = build_vocab(&corpus, 2, TokenMode::Word, 1).unwrap();
        assert_eq!(all.ngrams, vec![gram(&["x", "y"]), gram(&["y", "x"]), gram(&["y", "y"])]);
        let pruned = build_vocab(&corpus, 2, TokenMode::Word, 2).unwrap();
        assert_eq!(pruned.ngrams, vec![gram(&["x", "y"]), gram(&["y", "x"])]);
        assert!(build_vocab(&corpus, 2, TokenMode::Word, 3).is_err());
        assert!(build_vocab(&[], 2, TokenMode::Word, 1).is_err());
        let chars = build_vocab(&[words(&["ab"])], 1, TokenMode::Char, 1).unwrap();
        assert_eq!(chars.ngrams, vec![gram(&["a"]), gram(&["b"])]);
    }

    #[test]
    fn vectorize_cases() {
        let vocab = NgramVocab {
            n: 2,
            mode: TokenMode::Word,
            ngrams: vec![gram(&["a", "b"]), gram(&["b", "a"])],
        };
        let mut c = BTreeMap::new();
        c.insert(gram(&["a", "b"]), 3);
        assert_eq!(vectorize(&c, &vocab, Normalization::L1).entries, vec![(0, 1.0)]);
        let mut oov = BTreeMap::new();
        oov.insert(gram(&["z", "z"]), 5);
        assert!(vectorize(&oov, &vocab, Normalization::L2).is_empty());
        c.insert(gram(&["b", "a"]), 4);
        let v = vectorize(&c, &vocab, Normalization::L2);
        assert!((v.entries[0].1 - 0.6).abs() < 1e-15 && (v.entries[1].1 - 0.8).abs() < 1e-15);
        assert_eq!(vectorize(&c, &vocab, Normalization::Raw).entries, vec![(0, 3.0), (1, 4.0)]);
    }

    fn phones(ps: &[(&str, f64)]) -> PhoneSequence {
        PhoneSequence {
            utt_id: "u".into(),
            phones: ps.iter().map(|(p, d)| (p.to_string(), *d)).collect(),
        }
    }

    #[test]
    fn duration_stats_cases() {
        let inv = strs(&["a", "b"]);
        let one = phone_duration_stats(&phones(&[("a", 1.0)]), &inv).unwrap();
        assert_eq!(one.to_dense(), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let two = phone_duration_stats(&phones(&[("a", 0.2), ("b", 0.2)]), &inv).unwrap();
        assert_eq!(two.to_dense()[0], 0.5);
        assert_eq!(two.to_dense()[3], 0.5);
        // a:0.1, b:0.3, a:0.2, b:0.4 -> total 1.0; a: share 0.3, mean 0.15, rate 0.5
        let four = phone_duration_stats(&phones(&[("a", 0.1), ("b", 0.3), ("a", 0.2), ("b", 0.4)]), &inv).unwrap();
        let d = four.to_dense();
        let expect = [0.3, 0.15, 0.5, 0.7, 0.35, 0.5];
        for (x, e) in d.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!(phone_duration_stats(&phones(&[("a", 0.0)]), &inv).is_err());
        assert!(phone_duration_stats(&phones(&[]), &inv).is_err());
    }
}
