use std::collections::BTreeSet;

use binstylo::corpus::{load_manifest, stratify_folds, write_manifest};
use binstylo::eval::cross_validate_folds;
use binstylo::features::{extract_base, ExtractOptions};
use binstylo::forest::with_jobs;
use binstylo::pipeline::fold_data;
use binstylo::synth::{write_corpus, SynthConfig};
use binstylo::{train, AttributionModel, EvalConfig, Forest, ForestConfig, SelectionMode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn model_hash(forest: &Forest) -> String {
    hex::encode(Sha256::digest(forest.to_json().unwrap()))
}

#[test]
fn deleting_the_test_fold_leaves_the_model_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), &SynthConfig::noisy(6, 9)).unwrap();
    let opts = ExtractOptions::default();
    let forest_cfg = ForestConfig::default().with_trees(60).with_seed(4);
    let plan = stratify_folds(&corpus, 9).unwrap();
    let base = extract_base(&corpus, opts).unwrap();
    let test: BTreeSet<String> = plan.fold(3).into_iter().map(String::from).collect();
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..base.len()).partition(|&i| test.contains(&base[i].sample_id));
    let fold = fold_data(&base, &train_idx, &test_idx, &SelectionMode::WithinFold).unwrap();
    let in_fold = train(&fold.train, &forest_cfg).unwrap();

    for id in &test {
        std::fs::remove_dir_all(dir.path().join(id)).unwrap();
    }
    let reduced = corpus.filter(|s| !test.contains(&s.sample_id)).unwrap();
    let manifest = dir.path().join("train.json");
    write_manifest(&reduced, &manifest).unwrap();
    let (alone, _) =
        AttributionModel::fit(&load_manifest(&manifest).unwrap(), &SelectionMode::WithinFold, &forest_cfg, opts)
            .unwrap();
    assert_eq!(model_hash(&alone.forest), model_hash(&in_fold));
}

#[test]
fn cross_validation_equals_manual_train_and_test() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), &SynthConfig::noisy(5, 9)).unwrap();
    let config = EvalConfig {
        repetitions: 1,
        seed: 12,
        forest: ForestConfig::default().with_trees(50),
        ..EvalConfig::default()
    };
    let plan = stratify_folds(&corpus, config.k).unwrap();
    let base = extract_base(&corpus, config.extract).unwrap();
    let report = cross_validate_folds(&base, &plan, &config).unwrap();
    for f in [0, 5] {
        let test: BTreeSet<&str> = plan.fold(f).into_iter().collect();
        let train_base: Vec<_> = base.iter().filter(|s| !test.contains(s.sample_id.as_str())).cloned().collect();
        let (model, _) = AttributionModel::fit_base(
            &train_base,
            &SelectionMode::WithinFold,
            &config.forest.with_seed(config.seed),
            config.extract,
        )
        .unwrap();
        for s in base.iter().filter(|s| test.contains(s.sample_id.as_str())) {
            let got = model.attribute_counts(&s.counts).unwrap();
            let inst = report.instances.iter().find(|i| i.sample_id == s.sample_id && i.fold == f).unwrap();
            assert_eq!((got.predicted.as_str(), got.margin), (inst.predicted.as_str(), inst.margin), "{}", s.sample_id);
        }
    }
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), &SynthConfig::noisy(10, 9)).unwrap();
    // Selection typically keeps nothing once labels are shuffled, so train on every feature.
    let config = EvalConfig {
        repetitions: 2,
        forest: ForestConfig::default().with_trees(100),
        selection: SelectionMode::AllFeatures,
        ..EvalConfig::default()
    };
    let plan = stratify_folds(&corpus, config.k).unwrap();
    let mut base = extract_base(&corpus, config.extract).unwrap();
    let mut authors: Vec<String> = base.iter().map(|s| s.author_id.clone()).collect();
    authors.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    for (s, a) in base.iter_mut().zip(authors) {
        s.author_id = a;
    }
    let report = cross_validate_folds(&base, &plan, &config).unwrap();
    assert!(report.mean_accuracy < 0.3, "accuracy {} on shuffled labels", report.mean_accuracy);
}

#[test]
fn training_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), &SynthConfig::noisy(4, 9)).unwrap();
    let cfg = ForestConfig::default().with_trees(40);
    let fit = |jobs| {
        with_jobs(Some(jobs), || {
            AttributionModel::fit(&corpus, &SelectionMode::WithinFold, &cfg, ExtractOptions::default()).unwrap().0
        })
        .unwrap()
    };
    let (a, b) = (fit(1), fit(3));
    assert_eq!(model_hash(&a.forest), model_hash(&b.forest));
    assert_eq!(a.vocabulary.hash(), b.vocabulary.hash());
}

fn schema() -> jsonschema::Validator {
    let text = include_str!("../schema/forest.schema.json");
    jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
}

#[test]
fn model_file_matches_the_shipped_schema() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), &SynthConfig::separable(3, 3)).unwrap();
    let cfg = ForestConfig::default().with_trees(5);
    let (model, _) =
        AttributionModel::fit(&corpus, &SelectionMode::AllFeatures, &cfg, ExtractOptions::default()).unwrap();
    let value: serde_json::Value = serde_json::from_str(&model.forest.to_json().unwrap()).unwrap();
    let validator = schema();
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");

    let mut missing = value.clone();
    missing.as_object_mut().unwrap().remove("vocabulary_hash");
    assert!(!validator.is_valid(&missing));
    let mut extra = value;
    extra["trees"][0]["weight"] = serde_json::json!(1);
    assert!(!validator.is_valid(&extra));
}
