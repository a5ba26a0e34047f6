//! `binstylo`: corpus ingestion, feature extraction, selection, training,
//! evaluation and attribution from the command line.
//!
//! Every command writes its artifacts under `--output-dir` (default from
//! `BINSTYLO_OUTPUT_DIR`, else `binstylo-out`). Exit status is 0 on success,
//! 1 on a usage error and 2 on a data error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use binstylo::corpus::ArtifactKind;
use binstylo::eval::ReconstructionConfig;
use binstylo::features::{extract_corpus, ExtractOptions, ExtractedCorpus, SampleArtifacts};
use binstylo::forest::with_jobs;
use binstylo::{
    assemble_vectors, cross_validate, load_manifest, reconstruct_features, select_nonzero, top_n, verify,
    AttributionModel, Corpus, EvalConfig, FeatureCounts, FeatureMatrix, FeatureSelection, ForestConfig, SelectionMode,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

const FEATURES_STEM: &str = "features";

#[derive(Parser, Debug)]
#[command(name = "binstylo", version, about = "Authorship attribution of compiled programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for all artifacts written by the command.
    #[arg(long, global = true, env = "BINSTYLO_OUTPUT_DIR", default_value = "binstylo-out")]
    output_dir: PathBuf,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Random forest seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a manifest and summarize the corpus.
    Ingest(ManifestArgs),
    /// Extract the feature matrix of a corpus.
    Features(ExtractArgs),
    /// Information-gain selection over the matrix written by `features`.
    Select,
    /// Train a model on a whole corpus.
    Train(TrainArgs),
    /// Repeated stratified cross-validation.
    Evaluate(EvaluateArgs),
    /// Rank candidate authors for samples.
    Attribute(AttributeArgs),
    /// Attribute and accept or reject by classification margin.
    Verify(VerifyArgs),
    /// Predict source-level features from decompiled features.
    Reconstruct(ReconstructArgs),
}

#[derive(Args, Debug)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Replace large immediates in listings with a placeholder token.
    #[arg(long)]
    normalize_constants: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    extract: ExtractArgs,
    #[arg(long, default_value_t = 500)]
    trees: usize,
    /// Use a saved selection instead of selecting on this corpus.
    #[arg(long)]
    frozen_selection: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value_t = 9)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Largest n of the top-n curve; defaults to the author count.
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Debug)]
struct AttributeArgs {
    /// Model file written by `train`; defaults to `<output-dir>/model.json`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample directory holding artifact files such as `pseudo_c.c`.
    #[arg(long, required = true)]
    sample: Vec<PathBuf>,
    /// Authors to list per sample; defaults to all.
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    attribute: AttributeArgs,
    /// Minimum margin between the two most probable authors.
    #[arg(long, default_value_t = 0.4)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Corpus of decompiled artifacts.
    #[command(flatten)]
    extract: ExtractArgs,
    /// Corpus with the same sample ids whose `pseudo_c` entries are the
    /// original sources.
    #[arg(long)]
    source_manifest: PathBuf,
    #[arg(long, default_value_t = 9)]
    folds: usize,
    #[arg(long, default_value_t = 500)]
    trees: usize,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<binstylo::Error>() {
            Some(binstylo::Error::BadN { .. } | binstylo::Error::BadThreshold(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Data(e),
        }
    }
}

impl From<binstylo::Error> for Failure {
    fn from(e: binstylo::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        jobs => with_jobs(jobs, || run(&cli)).map_err(Failure::from).and_then(|r| r),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    validate(cli)?;
    let out = cli.output_dir.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Ingest(a) => ingest(out, a),
        Command::Features(a) => features(out, a),
        Command::Select => select(out),
        Command::Train(a) => train(out, a, cli.seed),
        Command::Evaluate(a) => evaluate(out, a, cli.seed),
        Command::Attribute(a) => attribute(out, a, None),
        Command::Verify(a) => attribute(out, &a.attribute, Some(a.threshold)),
        Command::Reconstruct(a) => reconstruct(out, a, cli.seed),
    }
}

fn require_file(path: &Path, what: &str) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_trees(trees: usize) -> Outcome {
    if trees == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    Ok(())
}

/// Flag and path checks that run before any work.
fn validate(cli: &Cli) -> Outcome {
    let check_train = |a: &TrainArgs| -> Outcome {
        require_file(&a.extract.manifest.manifest, "manifest")?;
        require_trees(a.trees)?;
        if let Some(p) = &a.frozen_selection {
            require_file(p, "frozen selection")?;
        }
        Ok(())
    };
    let check_attribute = |a: &AttributeArgs| -> Outcome {
        require_file(&model_path(&cli.output_dir, a), "model")?;
        for s in &a.sample {
            if !s.is_dir() {
                return Err(usage(format!("sample directory {} does not exist", s.display())));
            }
        }
        if a.top_n == Some(0) {
            return Err(usage("--top-n must be at least 1"));
        }
        Ok(())
    };
    match &cli.command {
        Command::Ingest(a) => require_file(&a.manifest, "manifest"),
        Command::Features(a) => require_file(&a.manifest.manifest, "manifest"),
        Command::Select => {
            let vocab = cli.output_dir.join(format!("{FEATURES_STEM}.vocab.tsv"));
            if !vocab.is_file() {
                return Err(usage(format!("{} not found; run `features` first", vocab.display())));
            }
            Ok(())
        }
        Command::Train(a) => check_train(a),
        Command::Evaluate(a) => {
            check_train(&a.train)?;
            if a.folds < 2 {
                return Err(usage("--folds must be at least 2"));
            }
            if a.repetitions == 0 {
                return Err(usage("--repetitions must be at least 1"));
            }
            if a.top_n == Some(0) {
                return Err(usage("--top-n must be at least 1"));
            }
            Ok(())
        }
        Command::Attribute(a) => check_attribute(a),
        Command::Verify(a) => {
            if !(0.0..=1.0).contains(&a.threshold) {
                return Err(usage(format!("--threshold must lie in [0, 1], got {}", a.threshold)));
            }
            check_attribute(&a.attribute)
        }
        Command::Reconstruct(a) => {
            require_file(&a.extract.manifest.manifest, "manifest")?;
            require_file(&a.source_manifest, "source manifest")?;
            require_trees(a.trees)?;
            if a.folds < 2 {
                return Err(usage("--folds must be at least 2"));
            }
            Ok(())
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_json(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialize") + "\n"
}

fn load(manifest: &Path) -> Outcome<Corpus> {
    Ok(load_manifest(manifest)?)
}

fn extract_options(a: &ExtractArgs) -> ExtractOptions {
    ExtractOptions { normalize_constants: a.normalize_constants }
}

fn ingest(out: &Path, a: &ManifestArgs) -> Outcome {
    let corpus = load(&a.manifest)?;
    let mut per_author = BTreeMap::new();
    for (author, samples) in corpus.samples_by_author() {
        per_author.insert(author.to_string(), samples.len());
    }
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    let mut variants: BTreeMap<String, usize> = BTreeMap::new();
    for s in corpus.samples() {
        for kind in s.artifact_paths.keys() {
            *kinds.entry(kind.as_str()).or_default() += 1;
        }
        *variants.entry(s.variant.to_string()).or_default() += 1;
    }
    let summary = json!({
        "manifest": a.manifest.display().to_string(),
        "samples": corpus.len(),
        "authors": corpus.authors().len(),
        "samples_per_author": per_author,
        "artifacts": kinds,
        "variants": variants,
    });
    write(&out.join("corpus.json"), to_json(&summary))?;
    println!("{} samples from {} authors", corpus.len(), corpus.authors().len());
    for kind in ArtifactKind::ALL {
        println!("  {:<16} {}", kind.as_str(), kinds.get(kind.as_str()).copied().unwrap_or(0));
    }
    Ok(())
}

fn extracted_matrix(extracted: &ExtractedCorpus) -> Outcome<FeatureMatrix> {
    Ok(assemble_vectors(&extracted.per_sample, &extracted.labels, None)?.0)
}

fn features(out: &Path, a: &ExtractArgs) -> Outcome {
    let corpus = load(&a.manifest.manifest)?;
    let extracted = extract_corpus(&corpus, extract_options(a))?;
    let matrix = extracted_matrix(&extracted)?;
    matrix.write(out, FEATURES_STEM)?;
    let stats = serde_json::to_string_pretty(&extracted.stats).context("serializing document frequencies")?;
    write(&out.join(format!("{FEATURES_STEM}.docfreq.json")), stats + "\n")?;
    println!("{} samples x {} features", matrix.n_rows(), matrix.n_cols());
    Ok(())
}

fn select(out: &Path) -> Outcome {
    let matrix = FeatureMatrix::read(out, FEATURES_STEM)?;
    let selection = select_nonzero(&matrix)?;
    let path = out.join("selection.tsv");
    selection.write(&path)?;
    println!("{} of {} features have non-zero information gain", selection.len(), matrix.n_cols());
    Ok(())
}

fn selection_mode(frozen: &Option<PathBuf>) -> Outcome<SelectionMode> {
    Ok(match frozen {
        Some(p) => SelectionMode::Frozen(FeatureSelection::read(p)?),
        None => SelectionMode::WithinFold,
    })
}

fn train(out: &Path, a: &TrainArgs, seed: u64) -> Outcome {
    let corpus = load(&a.extract.manifest.manifest)?;
    let forest = ForestConfig::default().with_trees(a.trees).with_seed(seed);
    let mode = selection_mode(&a.frozen_selection)?;
    let (model, selection) = AttributionModel::fit(&corpus, &mode, &forest, extract_options(&a.extract))?;
    let path = out.join("model.json");
    model.save(&path)?;
    if let Some(sel) = selection {
        sel.write(&out.join("model.selection.tsv"))?;
    }
    let oob = model.forest.oob_accuracy.map_or("n/a".to_string(), |a| format!("{:.1}%", a * 100.0));
    println!(
        "{} trees over {} features, {} authors, out-of-bag accuracy {oob}",
        model.forest.n_trees(),
        model.vocabulary.len(),
        model.forest.classes.len()
    );
    Ok(())
}

fn evaluate(out: &Path, a: &EvaluateArgs, seed: u64) -> Outcome {
    let corpus = load(&a.train.extract.manifest.manifest)?;
    let config = EvalConfig {
        k: a.folds,
        repetitions: a.repetitions,
        seed,
        forest: ForestConfig::default().with_trees(a.train.trees),
        top_n_max: a.top_n,
        selection: selection_mode(&a.train.frozen_selection)?,
        extract: extract_options(&a.train.extract),
    };
    let report = cross_validate(&corpus, &config)?;
    write(&out.join("report.json"), report.to_json()?)?;
    let table = report.to_table();
    write(&out.join("report.txt"), &table)?;
    write(&out.join("topn.csv"), report.topn_csv())?;
    print!("{table}");
    Ok(())
}

fn model_path(out: &Path, a: &AttributeArgs) -> PathBuf {
    a.model.clone().unwrap_or_else(|| out.join("model.json"))
}

fn attribute(out: &Path, a: &AttributeArgs, threshold: Option<f64>) -> Outcome {
    let model = AttributionModel::load(&model_path(out, a))?;
    let n_authors = model.forest.classes.len();
    let n = a.top_n.unwrap_or(n_authors);
    let mut records = Vec::new();
    let mut text = String::new();
    for dir in &a.sample {
        let artifacts = SampleArtifacts::load_dir(dir)?;
        let mut result = model.attribute(&artifacts).with_context(|| format!("attributing {}", dir.display()))?;
        if let Some(t) = threshold {
            result = verify(&result, t)?;
        }
        let ranked: Vec<serde_json::Value> = top_n(&result, n)?
            .into_iter()
            .map(|author| json!({ "author": author, "probability": result.distribution[&author] }))
            .collect();
        let _ = write!(text, "{}\t{}\t{:.4}", dir.display(), result.predicted, result.margin);
        if let Some(accepted) = result.accepted {
            let _ = write!(text, "\t{}", if accepted { "accept" } else { "reject" });
        }
        for r in &ranked {
            let _ = write!(
                text,
                "\t{}:{:.4}",
                r["author"].as_str().unwrap_or(""),
                r["probability"].as_f64().unwrap_or(0.0)
            );
        }
        text.push('\n');
        let mut record = json!({
            "sample": dir.display().to_string(),
            "predicted": result.predicted,
            "margin": result.margin,
            "ranking": ranked,
        });
        if let Some(accepted) = result.accepted {
            record["accepted"] = json!(accepted);
            record["threshold"] = json!(threshold);
        }
        records.push(record);
    }
    let name = if threshold.is_some() { "verification.json" } else { "attribution.json" };
    write(&out.join(name), to_json(&serde_json::Value::Array(records)))?;
    print!("{text}");
    Ok(())
}

/// Keeps the decompiled-syntax families of every sample.
fn syntax_only(per_sample: &[(String, FeatureCounts)]) -> Vec<(String, FeatureCounts)> {
    per_sample
        .iter()
        .map(|(id, counts)| {
            let mut kept = FeatureCounts::new();
            for (k, v) in counts.iter().filter(|(k, _)| k.family.is_decompiled()) {
                kept.set(k.family, k.payload.clone(), v);
            }
            (id.clone(), kept)
        })
        .collect()
}

fn reconstruct(out: &Path, a: &ReconstructArgs, seed: u64) -> Outcome {
    let opts = extract_options(&a.extract);
    let decompiled = extract_corpus(&load(&a.extract.manifest.manifest)?, opts)?;
    let source = extract_corpus(&load(&a.source_manifest)?, opts)?;
    let ids: Vec<&String> = decompiled.per_sample.iter().map(|(id, _)| id).collect();
    let source_ids: Vec<&String> = source.per_sample.iter().map(|(id, _)| id).collect();
    if ids != source_ids {
        return Err(Failure::Data(anyhow::anyhow!(
            "{} and {} list different samples",
            a.extract.manifest.manifest.display(),
            a.source_manifest.display()
        )));
    }
    let (dec_m, _) = assemble_vectors(&syntax_only(&decompiled.per_sample), &decompiled.labels, None)?;
    let (src_m, _) = assemble_vectors(&syntax_only(&source.per_sample), &source.labels, None)?;
    let targets = select_nonzero(&src_m)?.apply(&src_m);
    let config =
        ReconstructionConfig { k: a.folds, forest: ForestConfig::default().with_trees(a.trees).with_seed(seed) };
    let report = reconstruct_features(&dec_m, &targets, &config)?;
    write(&out.join("reconstruction.json"), report.to_json()?)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!("{} decompiled features, {} source targets", dec_m.n_cols(), targets.n_cols());
    println!("mean pearson          {}", fmt(report.mean_pearson));
    println!("mean cosine           {:.3}", report.mean_cosine);
    println!("baseline cosine       {} over {} shared keys", fmt(report.mean_baseline_cosine), report.shared_keys);
    Ok(())
}
