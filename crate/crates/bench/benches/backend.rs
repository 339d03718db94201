use std::hint::black_box;

use adi_core::dialect_model::{fit_dialect_means, score_set};
use adi_core::siamese::{grad, init_params, sample_pairs, SiameseArch};
use adi_core::svm::{set_features, train_linear_svm, SvmConfig};
use adi_core::synth::{generate, SynthConfig};
use adi_core::whitening::{fit_recursive_chain, fit_whitener, Ridge};
use adi_core::LabelSet;
use criterion::{criterion_group, criterion_main, Criterion};

fn data() -> adi_core::synth::SynthData {
    generate(&SynthConfig::default()).unwrap()
}

fn whitening(c: &mut Criterion) {
    let d = data();
    c.bench_function("whitening/fit_stage", |b| {
        b.iter(|| fit_whitener(black_box(&d.trn), Ridge::default()).unwrap())
    });
    c.bench_function("whitening/fit_chain_depth3", |b| {
        b.iter(|| fit_recursive_chain(black_box(&d.trn), &d.dev, 3, Ridge::default()).unwrap())
    });
}

fn siamese(c: &mut Criterion) {
    let d = data();
    let labels = LabelSet::default();
    let arch = SiameseArch::conv_default(d.trn.dim, 200).unwrap();
    let params = init_params(&arch, 0).unwrap();
    let pairs = sample_pairs(&d.trn, &labels, 32, 0.5, 0, 0.0).unwrap();
    c.bench_function("siamese/grad_batch32", |b| b.iter(|| grad(black_box(&params), &pairs).unwrap()));
}

fn cds(c: &mut Criterion) {
    let d = data();
    let models = fit_dialect_means(&d.trn, &LabelSet::default()).unwrap();
    c.bench_function("cds/score_tst", |b| b.iter(|| score_set(black_box(&models), &d.tst, "cds").unwrap()));
}

fn svm(c: &mut Criterion) {
    let d = data();
    let labels = LabelSet::default();
    let (x, y) = set_features(&d.trn, &labels).unwrap();
    let config = SvmConfig {
        epochs: 20,
        ..SvmConfig::default()
    };
    c.bench_function("svm/train_20_epochs", |b| {
        b.iter(|| train_linear_svm(black_box(&x), &y, &labels, &config).unwrap())
    });
}

criterion_group!(benches, whitening, siamese, cds, svm);
criterion_main!(benches);
