use adi_core::dialect_model::{fit_dialect_means, interpolate_models, score_set, snorm_scores};
use adi_core::metrics::evaluate_table;
use adi_core::synth::{generate, SynthConfig, SynthData};
use adi_core::whitening::{fit_recursive_chain, Ridge};
use adi_core::{IVectorSet, LabelSet, ScoreTable};

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn models_point_at_generating_means() {
    let cfg = SynthConfig {
        sigma_dialect: 1.0,
        n_trn: 500,
        seed: 5,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let m = fit_dialect_means(&data.trn, &cfg.labels).unwrap();
    for (model, truth) in m.models.iter().zip(&data.truth.means) {
        let a = angle_deg(model, truth);
        assert!(a < 10.0, "angle {a}");
    }
}

#[test]
fn snorm_three_score_cohort() {
    let labels = LabelSet::new(["A"]).unwrap();
    let mut raw = ScoreTable::new("s", labels);
    raw.push_row("u", vec![0.4]).unwrap();
    let out = snorm_scores(&raw, &[vec![0.1, 0.2, 0.3]], &[vec![0.0, 0.5, 1.0]]).unwrap();
    // model side: mean 0.2, std sqrt(0.02/3); test side: mean 0.5, std sqrt(0.5/3)
    let expected = 0.5 * (0.2 / (0.02f64 / 3.0).sqrt() + (-0.1) / (0.5f64 / 3.0).sqrt());
    assert!((out.rows[0].scores[0] - expected).abs() < 1e-12);
    assert!((expected - 1.102_270_384_3).abs() < 1e-9);
}

fn accuracy(models: &adi_core::dialect_model::DialectModelSet, set: &IVectorSet) -> f64 {
    evaluate_table(&score_set(models, set, "cds").unwrap(), &set.truth()).unwrap().accuracy
}

/// Whitens with a chain fit on TRN (stage 1) and DEV (later stages).
fn whitened(data: &SynthData, depth: usize) -> (IVectorSet, IVectorSet, IVectorSet) {
    let chain = fit_recursive_chain(&data.trn, &data.dev, depth, Ridge::default()).unwrap();
    (
        chain.apply_set(&data.trn).unwrap(),
        chain.apply_set(&data.dev).unwrap(),
        chain.apply_set(&data.tst).unwrap(),
    )
}

#[test]
fn dev_accuracy_is_not_best_at_gamma_zero() {
    let labels = LabelSet::default();
    let mut sweep = vec![0.0; 11];
    for seed in 0..10 {
        let data = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let (trn, dev, _) = whitened(&data, 3);
        let mt = fit_dialect_means(&trn, &labels).unwrap();
        let md = fit_dialect_means(&dev, &labels).unwrap();
        for (i, acc) in sweep.iter_mut().enumerate() {
            *acc += accuracy(&interpolate_models(&mt, &md, i as f64 / 10.0).unwrap(), &dev) / 10.0;
        }
    }
    let best = sweep.iter().cloned().fold(f64::MIN, f64::max);
    assert!(best > sweep[0], "{sweep:?}");
}

#[test]
fn channel_shift_hurts_trn_models_and_dev_interpolation_recovers() {
    let labels = LabelSet::default();
    let (mut matched, mut shifted, mut recovered) = (0.0, 0.0, 0.0);
    for seed in 0..10 {
        for (sigma_channel, out) in [(0.0, &mut matched), (3.0, &mut shifted)] {
            let data = generate(&SynthConfig {
                sigma_channel,
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            let (trn, dev, tst) = whitened(&data, 1);
            let mt = fit_dialect_means(&trn, &labels).unwrap();
            *out += accuracy(&mt, &tst) / 10.0;
            if sigma_channel > 0.0 {
                let md = fit_dialect_means(&dev, &labels).unwrap();
                recovered += accuracy(&interpolate_models(&mt, &md, 0.9).unwrap(), &tst) / 10.0;
            }
        }
    }
    assert!(shifted < matched, "shifted {shifted} matched {matched}");
    assert!(recovered > shifted, "recovered {recovered} shifted {shifted}");
}
