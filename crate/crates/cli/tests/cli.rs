use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use binstylo::synth::{write_corpus, SynthConfig};
use serde_json::Value;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Separable corpus of `authors` authors under `<tmp>/<name>`.
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn corpus(&self, name: &str, config: &SynthConfig) -> PathBuf {
        let root = self.dir.path().join(name);
        std::fs::create_dir_all(&root).unwrap();
        write_corpus(&root, config).unwrap();
        root
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn binstylo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binstylo")).args(args).env("BINSTYLO_OUTPUT_DIR", out).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = binstylo(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(out: &Path, args: &[&str]) -> i32 {
    binstylo(out, args).status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_on_separable_fixture() {
    let fx = Fixture::new();
    let corpus = fx.corpus("a", &SynthConfig::separable(10, 9));
    let out = fx.out("out");
    let manifest = corpus.join("manifest.json");
    let stdout =
        ok(&out, &["evaluate", "--manifest", s(&manifest), "--folds", "9", "--trees", "500", "--repetitions", "2"]);
    assert!(stdout.contains("programmers"), "{stdout}");
    let report = json(&out.join("report.json"));
    let acc = report["mean_accuracy"].as_f64().unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
    let csv = std::fs::read_to_string(out.join("topn.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.trim_end().ends_with("10,1"), "{csv}");
}

#[test]
fn attribute_and_verify() {
    let fx = Fixture::new();
    let known = fx.corpus("known", &SynthConfig::separable(10, 9));
    let held = fx.corpus("held", &SynthConfig::separable(5, 9).with_authors(10, 5));
    let out = fx.out("out");
    ok(&out, &["train", "--manifest", s(&known.join("manifest.json"))]);
    assert!(out.join("model.vocab.tsv").is_file() && out.join("model.docfreq.json").is_file());

    let samples = ["author000_problem00", "author004_problem03", "author009_problem08"];
    let mut args = vec!["attribute".to_string(), "--top-n".into(), "3".into()];
    for id in samples {
        args.extend(["--sample".into(), known.join(id).to_str().unwrap().to_string()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&out, &args);
    let records = json(&out.join("attribution.json"));
    for (r, id) in records.as_array().unwrap().iter().zip(samples) {
        assert_eq!(r["predicted"].as_str().unwrap(), &id[..9]);
        assert_eq!(r["ranking"].as_array().unwrap().len(), 3);
    }

    let held_dirs: Vec<String> = std::fs::read_dir(&held)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|p| p.to_str().unwrap().to_string())
        .collect();
    let mut args = vec!["verify".to_string(), "--threshold".into(), "0.4".into()];
    for d in &held_dirs {
        args.extend(["--sample".into(), d.clone()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let stdout = ok(&out, &args);
    assert_eq!(stdout.lines().count(), 45);
    let records = json(&out.join("verification.json"));
    let rejected = records.as_array().unwrap().iter().filter(|r| r["accepted"] == Value::Bool(false)).count();
    assert!(rejected * 10 >= held_dirs.len() * 9, "{rejected}/{} rejected", held_dirs.len());
}

#[test]
fn artifacts_are_reproducible_across_runs_and_jobs() {
    let fx = Fixture::new();
    let corpus = fx.corpus("a", &SynthConfig::noisy(4, 9));
    let manifest = corpus.join("manifest.json");
    let (one, two) = (fx.out("one"), fx.out("two"));
    for (out, jobs) in [(&one, "1"), (&two, "3")] {
        ok(out, &["--jobs", jobs, "features", "--manifest", s(&manifest)]);
        ok(out, &["--jobs", jobs, "select"]);
        ok(out, &["--jobs", jobs, "--seed", "5", "train", "--manifest", s(&manifest), "--trees", "50"]);
    }
    for name in [
        "features.triplets",
        "features.vocab.tsv",
        "features.rows.tsv",
        "features.docfreq.json",
        "selection.tsv",
        "model.json",
        "model.vocab.tsv",
        "model.docfreq.json",
    ] {
        let a = std::fs::read(one.join(name)).unwrap();
        let b = std::fs::read(two.join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn frozen_selection_carries_over() {
    let fx = Fixture::new();
    let a = fx.corpus("a", &SynthConfig::noisy(4, 9));
    let b = fx.corpus("b", &SynthConfig::noisy(4, 9).with_authors(4, 4));
    let out = fx.out("out");
    ok(&out, &["features", "--manifest", s(&a.join("manifest.json"))]);
    ok(&out, &["select"]);
    let selected = std::fs::read_to_string(out.join("selection.tsv")).unwrap();
    let sel = out.join("selection.tsv");
    let b_out = fx.out("b_out");
    ok(&b_out, &["train", "--manifest", s(&b.join("manifest.json")), "--trees", "20", "--frozen-selection", s(&sel)]);
    let vocab = std::fs::read_to_string(b_out.join("model.vocab.tsv")).unwrap();
    let n_selected = selected.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count();
    assert_eq!(vocab.lines().count(), n_selected);
}

#[test]
fn ingest_summarizes() {
    let fx = Fixture::new();
    let corpus = fx.corpus("a", &SynthConfig::separable(3, 2));
    let out = fx.out("out");
    let stdout = ok(&out, &["ingest", "--manifest", s(&corpus.join("manifest.json"))]);
    assert!(stdout.starts_with("6 samples from 3 authors"), "{stdout}");
    let summary = json(&out.join("corpus.json"));
    assert_eq!(summary["samples_per_author"]["author001"], 2);
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    let out = fx.out("out");
    assert_eq!(code(&out, &["--help"]), 0);
    assert_eq!(code(&out, &["frobnicate"]), 1);
    assert_eq!(code(&out, &["evaluate", "--manifest", "/nonexistent/m.json"]), 1);
    assert_eq!(code(&out, &["select"]), 1);

    let corpus = fx.corpus("a", &SynthConfig::separable(3, 2));
    let manifest = corpus.join("manifest.json");
    assert_eq!(code(&out, &["evaluate", "--manifest", s(&manifest), "--folds", "1"]), 1);
    assert_eq!(code(&out, &["--jobs", "0", "ingest", "--manifest", s(&manifest)]), 1);
    // Two samples per author cannot fill nine folds.
    assert_eq!(code(&out, &["evaluate", "--manifest", s(&manifest), "--trees", "5"]), 2);

    let broken = fx.out("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    let o = binstylo(&out, &["ingest", "--manifest", s(&broken)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    ok(&out, &["train", "--manifest", s(&manifest), "--trees", "5"]);
    let sample = corpus.join("author000_problem00");
    assert_eq!(code(&out, &["verify", "--threshold", "1.5", "--sample", s(&sample)]), 1);
    assert_eq!(code(&out, &["attribute", "--sample", s(&corpus)]), 2);
}
