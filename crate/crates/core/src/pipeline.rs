//! Composed systems: whitening chain, optional projection, then a dialect
//! back-end. Trained systems persist to a directory of JSON artifacts that
//! all carry the same config fingerprint.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{self, CalibrationParams, FusionWeights};
use crate::dialect_model::{self, DialectModelSet};
use crate::error::{check_dim, Error, Result};
use crate::io;
use crate::lda::{self, LdaProjection};
use crate::metrics::{self, Metrics};
use crate::siamese::{self, SiameseArch, SiameseParams, TrainConfig};
use crate::svm::{self, LinearSvmModel, SvmConfig};
use crate::synth::SynthData;
use crate::types::{DialectLabel, Domain, IVectorSet, LabelSet, ScoreTable};
use crate::whitening::{self, Ridge, WhiteningChain, DEFAULT_MAX_DEPTH};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const TRN_FILE: &str = "trn.ivec";
pub const DEV_FILE: &str = "dev.ivec";
pub const TST_FILE: &str = "tst.ivec";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    BaselineSvm,
    Cds,
    LdaCds,
    SiamCds,
}

impl Recipe {
    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::BaselineSvm => "baseline_svm",
            Recipe::Cds => "cds",
            Recipe::LdaCds => "lda_cds",
            Recipe::SiamCds => "siam_cds",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Recipe::BaselineSvm, Recipe::Cds, Recipe::LdaCds, Recipe::SiamCds]
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown recipe `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub recipe: Recipe,
    pub whiten_depth: usize,
    /// Interpolation weight of the DEV models; requires `use_dev`.
    pub gamma: Option<f64>,
    /// Use DEV for whitening stages after the first and as training data.
    pub use_dev: bool,
    pub seed: u64,
    pub labels: LabelSet,
    /// Relative whitening and LDA ridge.
    pub ridge: f64,
    /// Defaults to one less than the number of labels.
    pub lda_dim: Option<usize>,
    pub svm: SvmConfig,
    pub siam_output_dim: usize,
    pub siamese: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            recipe: Recipe::Cds,
            whiten_depth: 1,
            gamma: None,
            use_dev: false,
            seed: 0,
            labels: LabelSet::default(),
            ridge: 1e-6,
            lda_dim: None,
            svm: SvmConfig::default(),
            siam_output_dim: 200,
            siamese: TrainConfig::default(),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), msg });
        if !(1..=DEFAULT_MAX_DEPTH).contains(&self.whiten_depth) {
            return bad("whiten_depth", format!("must be in 1..={DEFAULT_MAX_DEPTH}"));
        }
        if let Some(g) = self.gamma {
            if !self.use_dev {
                return bad("gamma", "interpolation needs use_dev".into());
            }
            if !(0.0..=1.0).contains(&g) {
                return bad("gamma", format!("must be in [0, 1], got {g}"));
            }
            if self.recipe == Recipe::BaselineSvm {
                return bad("gamma", "baseline_svm has no dialect-mean models to interpolate".into());
            }
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return bad("ridge", "must be a finite value >= 0".into());
        }
        if self.lda_dim.is_some() && self.recipe != Recipe::LdaCds {
            return bad("lda_dim", format!("not used by recipe {}", self.recipe));
        }
        Ok(())
    }

    /// Sha256 over the options plus the input dimension and label set.
    pub fn fingerprint(&self, dim: usize) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            options: &'a TrainOptions,
            dim: usize,
        }
        let bytes = serde_json::to_vec(&Keyed { options: self, dim }).expect("options serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    None,
    Lda(LdaProjection),
    Siamese(SiameseParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Cds(DialectModelSet),
    Svm(LinearSvmModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub options: TrainOptions,
    pub dim: usize,
    pub chain: WhiteningChain,
    pub projection: Projection,
    pub backend: Backend,
    /// Per-epoch Siamese loss, empty for other recipes.
    pub history: Vec<f64>,
}

fn project(p: &Projection, set: &IVectorSet) -> Result<IVectorSet> {
    match p {
        Projection::None => Ok(set.clone()),
        Projection::Lda(l) => l.apply_set(set)?.try_map(whitening::length_normalize),
        Projection::Siamese(s) => siamese::embed_set(s, set),
    }
}

/// Fits every stage of the recipe. `dev` is required when `use_dev` is set.
pub fn train_system(trn: &IVectorSet, dev: Option<&IVectorSet>, options: &TrainOptions) -> Result<TrainedSystem> {
    options.validate()?;
    let trn = trn.clone().validated()?;
    let dev = match (options.use_dev, dev) {
        (true, Some(d)) => {
            check_dim(trn.dim, d.dim)?;
            Some(d.clone().validated()?)
        }
        (true, None) => return Err(Error::invalid("use_dev is set but no DEV set was given")),
        (false, _) => None,
    };
    let labels = &options.labels;
    // reject unknown labels up front
    trn.label_indices(labels)?;
    if let Some(d) = &dev {
        d.label_indices(labels)?;
    }

    let ridge = Ridge::Relative(options.ridge);
    let matched = dev.as_ref().unwrap_or(&trn);
    let chain = whitening::fit_recursive_chain(&trn, matched, options.whiten_depth, ridge)?;
    let trn_w = chain.apply_set(&trn)?;
    let dev_w = dev.as_ref().map(|d| chain.apply_set(d)).transpose()?;
    let pool = match &dev_w {
        Some(d) => trn_w.concat(d)?,
        None => trn_w.clone(),
    };

    let mut history = Vec::new();
    let projection = match options.recipe {
        Recipe::BaselineSvm | Recipe::Cds => Projection::None,
        Recipe::LdaCds => {
            let k = options.lda_dim.unwrap_or(labels.len().saturating_sub(1));
            Projection::Lda(lda::fit_lda(&pool, labels, k, ridge)?)
        }
        Recipe::SiamCds => {
            let arch = SiameseArch::conv_default(trn.dim, options.siam_output_dim)?;
            let init = siamese::init_params(&arch, options.seed)?;
            let config = TrainConfig {
                seed: options.seed,
                ..options.siamese.clone()
            };
            let out = siamese::train(&init, &pool, labels, &config)?;
            history = out.history;
            Projection::Siamese(out.params)
        }
    };

    let backend = match options.recipe {
        Recipe::BaselineSvm => {
            let (x, y) = svm::set_features(&pool, labels)?;
            let config = SvmConfig {
                seed: options.seed,
                ..options.svm
            };
            Backend::Svm(svm::train_linear_svm(&x, &y, labels, &config)?)
        }
        _ => {
            let trn_p = project(&projection, &trn_w)?;
            match (options.gamma, &dev_w) {
                (Some(g), Some(d)) => {
                    let dev_p = project(&projection, d)?;
                    let mt = dialect_model::fit_dialect_means(&trn_p, labels)?;
                    let md = dialect_model::fit_dialect_means(&dev_p, labels)?;
                    Backend::Cds(dialect_model::interpolate_models(&mt, &md, g)?)
                }
                _ => Backend::Cds(dialect_model::fit_dialect_means(&project(&projection, &pool)?, labels)?),
            }
        }
    };
    Ok(TrainedSystem {
        options: options.clone(),
        dim: trn.dim,
        chain,
        projection,
        backend,
        history,
    })
}

impl TrainedSystem {
    pub fn fingerprint(&self) -> String {
        self.options.fingerprint(self.dim)
    }

    pub fn labels(&self) -> &LabelSet {
        &self.options.labels
    }

    /// One row per utterance, in input order. Labeled utterances must use the system's labels.
    pub fn score(&self, data: &IVectorSet, system_id: &str) -> Result<ScoreTable> {
        check_dim(self.dim, data.dim)?;
        let data = data.clone().validated()?;
        data.label_indices(self.labels())?;
        if data.is_empty() {
            return Ok(ScoreTable::new(system_id, self.labels().clone()));
        }
        let x = project(&self.projection, &self.chain.apply_set(&data)?)?;
        match &self.backend {
            Backend::Cds(m) => dialect_model::score_set(m, &x, system_id),
            Backend::Svm(m) => svm::score_set(m, &x, system_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fingerprint: String,
    pub dim: usize,
    pub options: TrainOptions,
    pub artifacts: Vec<ArtifactEntry>,
    pub history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    fingerprint: String,
    payload: T,
}

const CHAIN_FILE: &str = "whitening.json";
const PROJECTION_FILE: &str = "projection.json";
const BACKEND_FILE: &str = "backend.json";

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn artifact_json<T: Serialize>(fingerprint: &str, payload: &T) -> Result<String> {
    to_json(&Artifact {
        fingerprint: fingerprint.to_string(),
        payload,
    })
}

pub fn save_system(system: &TrainedSystem, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fingerprint = system.fingerprint();
    let mut artifacts = Vec::new();
    let mut put = |file: &str, text: String| -> Result<()> {
        io::write_text(&dir.join(file), &text)?;
        artifacts.push(ArtifactEntry {
            file: file.to_string(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
        Ok(())
    };
    put(CHAIN_FILE, artifact_json(&fingerprint, &system.chain)?)?;
    put(PROJECTION_FILE, artifact_json(&fingerprint, &system.projection)?)?;
    put(BACKEND_FILE, artifact_json(&fingerprint, &system.backend)?)?;
    let manifest = Manifest {
        version: MODEL_FORMAT_VERSION,
        fingerprint,
        dim: system.dim,
        options: system.options.clone(),
        artifacts,
        history: system.history.clone(),
    };
    io::write_text(&dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
    Ok(manifest)
}

fn load_artifact<T: DeserializeOwned>(dir: &Path, manifest: &Manifest, file: &str) -> Result<T> {
    let entry = manifest
        .artifacts
        .iter()
        .find(|a| a.file == file)
        .ok_or_else(|| Error::invalid(format!("manifest does not list `{file}`")))?;
    let path = dir.join(file);
    let text = io::read_text(&path)?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    if digest != entry.sha256 {
        return Err(Error::FingerprintMismatch {
            expected: entry.sha256.clone(),
            got: format!("{digest} (content of {file})"),
        });
    }
    let a: Artifact<T> = serde_json::from_str(&text)?;
    if a.fingerprint != manifest.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: manifest.fingerprint.clone(),
            got: a.fingerprint,
        });
    }
    Ok(a.payload)
}

/// Loads a saved system, refusing artifacts whose fingerprints or digests disagree with the manifest.
pub fn load_system(dir: &Path) -> Result<TrainedSystem> {
    let manifest: Manifest = serde_json::from_str(&io::read_text(&dir.join(MANIFEST_FILE))?)?;
    if manifest.version != MODEL_FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported model format version {}", manifest.version)));
    }
    let recomputed = manifest.options.fingerprint(manifest.dim);
    if recomputed != manifest.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: manifest.fingerprint.clone(),
            got: recomputed,
        });
    }
    let chain: WhiteningChain = load_artifact(dir, &manifest, CHAIN_FILE)?;
    let projection = load_artifact(dir, &manifest, PROJECTION_FILE)?;
    let backend = load_artifact(dir, &manifest, BACKEND_FILE)?;
    if chain.dim() != manifest.dim {
        return Err(Error::DimMismatch {
            expected: manifest.dim,
            got: chain.dim(),
        });
    }
    Ok(TrainedSystem {
        options: manifest.options,
        dim: manifest.dim,
        chain,
        projection,
        backend,
        history: manifest.history,
    })
}

/// Writes the three splits as i-vector files plus the ground truth as JSON.
pub fn write_dataset(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_ivectors(&dir.join(TRN_FILE), &data.trn)?;
    io::write_ivectors(&dir.join(DEV_FILE), &data.dev)?;
    io::write_ivectors(&dir.join(TST_FILE), &data.tst)?;
    io::write_text(&dir.join(TRUTH_FILE), &to_json(&data.truth)?)
}

/// Reads `trn.ivec` and, if present, `dev.ivec` from a data directory.
pub fn read_training_data(dir: &Path) -> Result<(IVectorSet, Option<IVectorSet>)> {
    let trn = io::read_ivectors(&dir.join(TRN_FILE), Domain::Trn)?;
    let dev_path = dir.join(DEV_FILE);
    let dev = if dev_path.exists() {
        Some(io::read_ivectors(&dev_path, Domain::Dev)?)
    } else {
        None
    };
    Ok((trn, dev))
}

/// Per-system and fused results of [`calibrate_fuse`].
#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    pub calibrations: Vec<CalibrationParams>,
    pub weights: FusionWeights,
    pub calibrated: Vec<ScoreTable>,
    pub fused: ScoreTable,
}

/// Calibrates each system on its table in `calib`, matched by system id, then fuses.
///
/// `weights` follow the order of `tables`; without them the simplex grid with
/// `grid_steps` divisions is searched on the calibrated `calib` tables.
pub fn calibrate_fuse(
    tables: &[ScoreTable],
    calib: &[ScoreTable],
    calib_truth: &HashMap<String, DialectLabel>,
    weights: Option<&[f64]>,
    grid_steps: usize,
) -> Result<FuseOutcome> {
    if tables.is_empty() {
        return Err(Error::invalid("no score tables to fuse"));
    }
    let mut calibrations = Vec::with_capacity(tables.len());
    let mut calibrated = Vec::with_capacity(tables.len());
    let mut calib_calibrated = Vec::with_capacity(tables.len());
    for t in tables {
        let c = calib
            .iter()
            .find(|c| c.system_id == t.system_id)
            .ok_or_else(|| Error::invalid(format!("no calibration scores for system `{}`", t.system_id)))?;
        let p = calibration::fit_calibration(c, calib_truth, "calibration split")?;
        calibrated.push(calibration::apply_calibration(&p, t)?);
        calib_calibrated.push(calibration::apply_calibration(&p, c)?);
        calibrations.push(p);
    }
    let weights = match weights {
        Some(w) => {
            if w.len() != tables.len() {
                return Err(Error::invalid(format!("{} weights for {} systems", w.len(), tables.len())));
            }
            FusionWeights::new(tables.iter().map(|t| t.system_id.clone()).zip(w.iter().copied()).collect())?
        }
        None => calibration::fit_fusion_weights(&calib_calibrated, calib_truth, grid_steps)?,
    };
    let fused = calibration::fuse(&calibrated, &weights)?;
    Ok(FuseOutcome {
        calibrations,
        weights,
        calibrated,
        fused,
    })
}

/// Summary table over several systems followed by the full report of the last one.
pub fn fusion_report(tables: &[&ScoreTable], truth: &HashMap<String, DialectLabel>) -> Result<String> {
    let mut rows: Vec<(String, Metrics)> = Vec::with_capacity(tables.len());
    for t in tables {
        rows.push((t.system_id.clone(), metrics::evaluate_table(t, truth)?));
    }
    let last = tables.last().ok_or_else(|| Error::invalid("nothing to report"))?;
    let cm = metrics::table_confusion(last, truth)?;
    let (_, m) = rows.last().expect("non-empty");
    let mut s = metrics::format_summary(&rows);
    s.push('\n');
    s.push_str(&metrics::format_report(&last.system_id, m, &cm));
    Ok(s)
}

pub fn evaluation_report(table: &ScoreTable, truth: &HashMap<String, DialectLabel>) -> Result<String> {
    let cm = metrics::table_confusion(table, truth)?;
    Ok(metrics::format_report(&table.system_id, &metrics::evaluate(&cm)?, &cm))
}
