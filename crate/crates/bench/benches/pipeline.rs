use std::hint::black_box;

use binstylo::disasm::{detect_dialect, parse_listing, tokenize, SourceKind};
use binstylo::features::{extract_assembly_ngrams, extract_sample, BaseSample, ExtractOptions, SampleArtifacts};
use binstylo::fuzzyc::lex_pseudo_c;
use binstylo::infogain::select_nonzero;
use binstylo::pipeline::fold_data;
use binstylo::synth::{generate, SynthConfig, SynthSample};
use binstylo::{
    discretize_mdl, parse_pseudo_c, predict_proba, train, ArtifactKind, FeatureMatrix, ForestConfig, SelectionMode,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn samples() -> Vec<SynthSample> {
    generate(&SynthConfig::noisy(10, 9))
}

fn base(samples: &[SynthSample]) -> Vec<BaseSample> {
    samples
        .iter()
        .map(|s| {
            let artifacts = SampleArtifacts { texts: s.texts.clone() };
            let (counts, node_keys) = extract_sample(&artifacts, ExtractOptions::default()).unwrap();
            BaseSample { sample_id: s.sample_id.clone(), author_id: s.author_id.clone(), counts, node_keys }
        })
        .collect()
}

fn matrix(base: &[BaseSample]) -> FeatureMatrix {
    let all: Vec<usize> = (0..base.len()).collect();
    fold_data(base, &all, &[], &SelectionMode::WithinFold).unwrap().train
}

fn parsing(c: &mut Criterion) {
    let s = &samples()[0];
    let pseudo = &s.texts[&ArtifactKind::PseudoC];
    let listing = &s.texts[&ArtifactKind::ListingLinear];
    c.bench_function("lex_and_parse_pseudo_c", |b| b.iter(|| parse_pseudo_c(&lex_pseudo_c(black_box(pseudo)))));
    let lines = parse_listing(listing, detect_dialect(listing)).unwrap();
    let stream = tokenize(&lines, SourceKind::Linear, false);
    c.bench_function("assembly_ngrams", |b| b.iter(|| extract_assembly_ngrams(black_box(&stream))));
    let artifacts = SampleArtifacts { texts: s.texts.clone() };
    c.bench_function("extract_sample", |b| {
        b.iter(|| extract_sample(black_box(&artifacts), ExtractOptions::default()).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let base = base(&samples());
    let all: Vec<usize> = (0..base.len()).collect();
    let full = fold_data(&base, &all, &[], &SelectionMode::AllFeatures).unwrap().train;
    c.bench_function("select_nonzero_90_samples", |b| b.iter(|| select_nonzero(black_box(&full)).unwrap()));
    let labels: Vec<usize> = (0..900).map(|i| i % 10).collect();
    let values: Vec<f64> = (0..900).map(|i| ((i * 37) % 101) as f64).collect();
    c.bench_function("discretize_mdl_900", |b| b.iter(|| discretize_mdl(black_box(&values), &labels).unwrap()));
}

fn forest(c: &mut Criterion) {
    let m = matrix(&base(&samples()));
    let mut g = c.benchmark_group("forest");
    g.sample_size(10);
    g.bench_function("train_500_trees", |b| b.iter(|| train(black_box(&m), &ForestConfig::default()).unwrap()));
    let f = train(&m, &ForestConfig::default()).unwrap();
    g.bench_function("predict_90_rows", |b| {
        b.iter(|| m.rows.iter().map(|r| predict_proba(&f, r).unwrap()).collect::<Vec<_>>())
    });
    g.finish();
}

criterion_group!(benches, parsing, selection, forest);
criterion_main!(benches);
