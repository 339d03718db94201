//! Synthetic labeled i-vector sets with a train/test channel shift.
//!
//! Each dialect has a Gaussian mean; every utterance adds isotropic noise and,
//! optionally, a component in a shared low-rank nuisance subspace. DEV and TST
//! utterances additionally carry one common channel offset that TRN lacks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Domain, IVector, IVectorSet, LabelSet, Utterance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub labels: LabelSet,
    /// Utterances per dialect in each split.
    pub n_trn: usize,
    pub n_dev: usize,
    pub n_tst: usize,
    /// Std of dialect means around the origin.
    pub sigma_dialect: f64,
    /// Std of isotropic within-dialect noise.
    pub sigma_within: f64,
    /// Std of the channel offset shared by DEV and TST.
    pub sigma_channel: f64,
    /// Rank of the within-dialect nuisance subspace (0 disables it).
    pub nuisance_rank: usize,
    pub sigma_nuisance: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 100,
            labels: LabelSet::default(),
            n_trn: 200,
            n_dev: 60,
            n_tst: 60,
            sigma_dialect: 0.35,
            sigma_within: 1.0,
            sigma_channel: 2.0,
            nuisance_rank: 0,
            sigma_nuisance: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config {
            key: key.to_string(),
            msg: msg.to_string(),
        });
        if self.dim == 0 {
            return bad("dim", "must be >= 1");
        }
        for (key, n) in [("n_trn", self.n_trn), ("n_dev", self.n_dev), ("n_tst", self.n_tst)] {
            if n == 0 {
                return bad(key, "must be >= 1");
            }
        }
        for (key, s) in [
            ("sigma_dialect", self.sigma_dialect),
            ("sigma_within", self.sigma_within),
            ("sigma_channel", self.sigma_channel),
            ("sigma_nuisance", self.sigma_nuisance),
        ] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(key, "must be a finite value >= 0");
            }
        }
        if self.nuisance_rank > self.dim {
            return bad("nuisance_rank", "must not exceed dim");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Dialect means, in label order.
    pub means: Vec<Vec<f64>>,
    pub channel_offset: Vec<f64>,
    /// Unit-norm nuisance directions.
    pub nuisance_basis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub trn: IVectorSet,
    pub dev: IVectorSet,
    pub tst: IVectorSet,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let means: Vec<Vec<f64>> = (0..cfg.labels.len()).map(|_| gaussian(&mut rng, d, cfg.sigma_dialect)).collect();
    let channel_offset = gaussian(&mut rng, d, cfg.sigma_channel);
    let nuisance_basis: Vec<Vec<f64>> = (0..cfg.nuisance_rank)
        .map(|_| {
            let v = gaussian(&mut rng, d, 1.0);
            let n = crate::linalg::norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let nuisance = Normal::new(0.0, cfg.sigma_nuisance).map_err(|e| Error::invalid(e.to_string()))?;

    let mut split = |domain: Domain, n: usize, offset: Option<&[f64]>| {
        let mut set = IVectorSet::new(d);
        for (k, label) in cfg.labels.iter().enumerate() {
            for i in 0..n {
                let mut v = gaussian(&mut rng, d, cfg.sigma_within);
                for (x, m) in v.iter_mut().zip(&means[k]) {
                    *x += m;
                }
                for dir in &nuisance_basis {
                    let z = nuisance.sample(&mut rng);
                    for (x, b) in v.iter_mut().zip(dir) {
                        *x += z * b;
                    }
                }
                if let Some(off) = offset {
                    for (x, o) in v.iter_mut().zip(off) {
                        *x += o;
                    }
                }
                let id = format!("{}_{}_{:05}", domain.as_str().to_ascii_lowercase(), label, i);
                set.push(Utterance::new(id, domain, Some(label.clone())), IVector(v));
            }
        }
        set
    };
    let trn = split(Domain::Trn, cfg.n_trn, None);
    let dev = split(Domain::Dev, cfg.n_dev, Some(&channel_offset));
    let tst = split(Domain::Tst, cfg.n_tst, Some(&channel_offset));
    Ok(SynthData {
        trn,
        dev,
        tst,
        truth: GroundTruth {
            means,
            channel_offset,
            nuisance_basis,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_trn_equals_means() {
        let cfg = SynthConfig {
            sigma_within: 0.0,
            sigma_channel: 0.0,
            n_trn: 3,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        for e in &data.trn.entries {
            let k = cfg.labels.index_of(e.utt.label.as_ref().unwrap()).unwrap();
            assert_eq!(e.vector.0, data.truth.means[k]);
        }
    }

    #[test]
    fn without_channel_dev_matches_trn_per_dialect() {
        let cfg = SynthConfig {
            sigma_channel: 0.0,
            n_trn: 2000,
            n_dev: 2000,
            dim: 5,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        assert!(data.truth.channel_offset.iter().all(|&x| x == 0.0));
        for k in 0..cfg.labels.len() {
            let mean = |s: &IVectorSet| {
                let rows: Vec<&IVector> = s.entries[k * 2000..(k + 1) * 2000].iter().map(|e| &e.vector).collect();
                (0..5).map(|i| rows.iter().map(|v| v.0[i]).sum::<f64>() / 2000.0).collect::<Vec<_>>()
            };
            let (a, b) = (mean(&data.trn), mean(&data.dev));
            // two-sample mean difference std is sqrt(2/2000) ~ 0.032 per coordinate
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 0.15);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig::default();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().trn, generate(&other).unwrap().trn);
    }

    #[test]
    fn dev_and_tst_share_offset() {
        let cfg = SynthConfig {
            sigma_within: 0.0,
            sigma_channel: 3.0,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let first = |s: &IVectorSet| s.entries[0].vector.0.clone();
        let off: Vec<f64> = first(&data.dev).iter().zip(&data.truth.means[0]).map(|(x, m)| x - m).collect();
        let off2: Vec<f64> = first(&data.tst).iter().zip(&data.truth.means[0]).map(|(x, m)| x - m).collect();
        for ((a, b), c) in off.iter().zip(&off2).zip(&data.truth.channel_offset) {
            assert!((a - c).abs() < 1e-12 && (b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_config_names_key() {
        let cfg = SynthConfig {
            sigma_within: -1.0,
            ..SynthConfig::default()
        };
        match generate(&cfg) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sigma_within"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
