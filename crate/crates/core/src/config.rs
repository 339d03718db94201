//! `key=value` experiment configs. Unknown keys are rejected.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{Recipe, TrainOptions};
use crate::synth::SynthConfig;
use crate::types::LabelSet;

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        msg: format!("cannot parse `{raw}`"),
    })
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config {
            key: key.to_string(),
            msg: format!("expected true or false, found `{raw}`"),
        }),
    }
}

fn labels(key: &str, raw: &str) -> Result<LabelSet> {
    LabelSet::new(raw.split(',').map(str::trim)).map_err(|e| Error::Config {
        key: key.to_string(),
        msg: e.to_string(),
    })
}

fn unknown(key: &str) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: "unknown key".into(),
    }
}

pub fn parse_synth_config(text: &str, name: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    for (_, k, v) in io::parse_kv(text, name)? {
        let k = k.as_str();
        match k {
            "dim" => cfg.dim = value(k, &v)?,
            "labels" => cfg.labels = labels(k, &v)?,
            "n_trn" => cfg.n_trn = value(k, &v)?,
            "n_dev" => cfg.n_dev = value(k, &v)?,
            "n_tst" => cfg.n_tst = value(k, &v)?,
            "sigma_dialect" => cfg.sigma_dialect = value(k, &v)?,
            "sigma_within" => cfg.sigma_within = value(k, &v)?,
            "sigma_channel" => cfg.sigma_channel = value(k, &v)?,
            "nuisance_rank" => cfg.nuisance_rank = value(k, &v)?,
            "sigma_nuisance" => cfg.sigma_nuisance = value(k, &v)?,
            "seed" => cfg.seed = value(k, &v)?,
            _ => return Err(unknown(k)),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    parse_synth_config(&io::read_text(path)?, &path.display().to_string())
}

/// Applies config keys on top of `opts`. `gamma=none` clears the interpolation weight.
pub fn apply_train_config(opts: &mut TrainOptions, text: &str, name: &str) -> Result<()> {
    for (_, k, v) in io::parse_kv(text, name)? {
        let k = k.as_str();
        match k {
            "recipe" => opts.recipe = value::<Recipe>(k, &v)?,
            "whiten_depth" => opts.whiten_depth = value(k, &v)?,
            "gamma" => opts.gamma = if v == "none" { None } else { Some(value(k, &v)?) },
            "use_dev" => opts.use_dev = flag(k, &v)?,
            "seed" => opts.seed = value(k, &v)?,
            "labels" => opts.labels = labels(k, &v)?,
            "ridge" => opts.ridge = value(k, &v)?,
            "lda_dim" => opts.lda_dim = Some(value(k, &v)?),
            "svm_c" => opts.svm.c = value(k, &v)?,
            "svm_epochs" => opts.svm.epochs = value(k, &v)?,
            "siam_output_dim" => opts.siam_output_dim = value(k, &v)?,
            "siam_epochs" => opts.siamese.epochs = value(k, &v)?,
            "siam_batch_size" => opts.siamese.batch_size = value(k, &v)?,
            "siam_learning_rate" => opts.siamese.learning_rate = value(k, &v)?,
            "siam_momentum" => opts.siamese.momentum = value(k, &v)?,
            "siam_pairs" => opts.siamese.pairs.n_pairs = value(k, &v)?,
            "siam_positive_fraction" => opts.siamese.pairs.positive_fraction = value(k, &v)?,
            "siam_dev_emphasis" => opts.siamese.pairs.dev_emphasis = value(k, &v)?,
            _ => return Err(unknown(k)),
        }
    }
    Ok(())
}
