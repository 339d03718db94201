//! Text file formats.
//!
//! * i-vectors: first line `dim=<d>`, then `utt_id<TAB>label_or_-<TAB>v1 v2 … vd`.
//! * score tables: header `system_id<TAB>label1<TAB>…<TAB>labelK`, then
//!   `utt_id<TAB>s1<TAB>…<TAB>sK`, scores printed with 12 significant digits.
//! * transcripts: `utt_id<TAB>token token …`.
//! * phone sequences: `utt_id<TAB>phone:duration phone:duration …`.
//! * labels: `utt_id<TAB>label` (an i-vector file is accepted as well).
//! * configs: `key=value` lines, `#` comments.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text_features::{PhoneSequence, TokenMode, Transcript};
use crate::types::{DialectLabel, Domain, IVector, IVectorSet, LabelSet, ScoreTable, Utterance};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: name.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Lines with their 1-based numbers, skipping blank ones.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_ivectors(text: &str, domain: Domain, name: &str) -> Result<IVectorSet> {
    let mut it = lines(text);
    let (n, header) = it.next().ok_or_else(|| parse_err(name, 1, "missing `dim=` header"))?;
    let dim = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .ok_or_else(|| parse_err(name, n, format!("expected `dim=<d>`, found `{header}`")))?;
    let mut set = IVectorSet::new(dim);
    for (n, line) in it {
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(values)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(name, n, "expected three tab-separated fields"));
        };
        if id.is_empty() {
            return Err(parse_err(name, n, "empty utterance id"));
        }
        let label = match label {
            "-" => None,
            "" => return Err(parse_err(name, n, "empty label (use `-` for unlabeled)")),
            l => Some(DialectLabel::new(l)),
        };
        let values = values
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(name, n, format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        set.push(Utterance::new(id, domain, label), IVector(values));
    }
    Ok(set)
}

/// Shortest round-trip decimal form of every value, so a reload is exact.
pub fn format_ivectors(set: &IVectorSet) -> String {
    let mut s = format!("dim={}\n", set.dim);
    for e in &set.entries {
        s.push_str(&e.utt.id);
        s.push('\t');
        s.push_str(e.utt.label.as_ref().map_or("-", DialectLabel::as_str));
        s.push('\t');
        let vals: Vec<String> = e.vector.0.iter().map(|x| x.to_string()).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_ivectors(path: &Path, domain: Domain) -> Result<IVectorSet> {
    parse_ivectors(&read_text(path)?, domain, &path.display().to_string())
}

pub fn write_ivectors(path: &Path, set: &IVectorSet) -> Result<()> {
    write_text(path, &format_ivectors(set))
}

/// Plain decimal with 12 significant digits.
pub fn format_score(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0.00000000000".to_string() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn format_scores(t: &ScoreTable) -> String {
    let mut s = t.system_id.clone();
    for l in t.labels.iter() {
        s.push('\t');
        s.push_str(l.as_str());
    }
    s.push('\n');
    for r in &t.rows {
        s.push_str(&r.utt_id);
        for x in &r.scores {
            s.push('\t');
            s.push_str(&format_score(*x));
        }
        s.push('\n');
    }
    s
}

/// Parses a score table. The result is marked uncalibrated; the format does not carry that flag.
pub fn parse_scores(text: &str, name: &str) -> Result<ScoreTable> {
    let mut it = lines(text);
    let (n, header) = it.next().ok_or_else(|| parse_err(name, 1, "missing header"))?;
    let mut fields = header.split('\t');
    let system_id = fields.next().unwrap_or_default();
    if system_id.is_empty() {
        return Err(parse_err(name, n, "empty system id"));
    }
    let labels = LabelSet::new(fields).map_err(|e| parse_err(name, n, e.to_string()))?;
    let mut t = ScoreTable::new(system_id, labels);
    for (n, line) in it {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let scores = fields
            .map(|f| f.trim().parse::<f64>().map_err(|_| parse_err(name, n, format!("bad score `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        t.push_row(id, scores).map_err(|e| parse_err(name, n, e.to_string()))?;
    }
    Ok(t)
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    parse_scores(&read_text(path)?, &path.display().to_string())
}

pub fn write_scores(path: &Path, t: &ScoreTable) -> Result<()> {
    write_text(path, &format_scores(t))
}

pub fn parse_transcripts(text: &str, source: TokenMode, name: &str) -> Result<Vec<Transcript>> {
    lines(text)
        .map(|(n, line)| {
            let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
            if id.is_empty() {
                return Err(parse_err(name, n, "empty utterance id"));
            }
            Ok(Transcript::new(id, rest.split_whitespace().map(String::from).collect(), source))
        })
        .collect()
}

pub fn parse_phones(text: &str, name: &str) -> Result<Vec<PhoneSequence>> {
    lines(text)
        .map(|(n, line)| {
            let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
            let phones = rest
                .split_whitespace()
                .map(|tok| {
                    let (p, d) = tok
                        .rsplit_once(':')
                        .ok_or_else(|| parse_err(name, n, format!("expected phone:duration, found `{tok}`")))?;
                    let d: f64 = d.parse().map_err(|_| parse_err(name, n, format!("bad duration `{d}`")))?;
                    Ok((p.to_string(), d))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PhoneSequence {
                utt_id: id.to_string(),
                phones,
            })
        })
        .collect()
}

/// Reads `utt_id<TAB>label` lines, or the labeled entries of an i-vector file.
pub fn read_labels(path: &Path) -> Result<HashMap<String, DialectLabel>> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    if text.starts_with("dim=") {
        return Ok(parse_ivectors(&text, Domain::Tst, &name)?.truth());
    }
    let mut out = HashMap::new();
    for (n, line) in lines(&text) {
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&name, n, "expected `utt_id<TAB>label`"))?;
        let label = label.trim();
        if label != "-" {
            out.insert(id.to_string(), DialectLabel::new(label));
        }
    }
    Ok(out)
}

/// `key=value` pairs in file order, with their line numbers.
pub fn parse_kv(text: &str, name: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (n, raw) in lines(text) {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(name, n, format!("expected key=value, found `{line}`")))?;
        let k = k.trim();
        if out.iter().any(|(_, seen, _)| seen == k) {
            return Err(Error::Config {
                key: k.to_string(),
                msg: format!("repeated at line {n}"),
            });
        }
        out.push((n, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
