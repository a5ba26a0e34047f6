//! Repeated stratified cross-validation, relaxed top-n accuracy and the
//! feature-reconstruction study.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{stratify_folds, Corpus, FoldPlan};
use crate::error::{Error, Result};
use crate::features::{extract_base, BaseSample, ExtractOptions, FeatureKey, FeatureMatrix};
use crate::forest::{predict_proba, train, train_regressor, ForestConfig};
use crate::pipeline::{fold_data, fold_data_from_matrix, FoldData, SelectionMode};

pub const DEFAULT_REPETITIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    pub repetitions: usize,
    /// Repetition `r` trains with forest seed `seed + r`.
    pub seed: u64,
    /// `seed` here is ignored in favour of the per-repetition seed.
    pub forest: ForestConfig,
    /// Largest `n` of the top-n curve; `None` means the author count.
    pub top_n_max: Option<usize>,
    pub selection: SelectionMode,
    pub extract: ExtractOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 9,
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            forest: ForestConfig::default(),
            top_n_max: None,
            selection: SelectionMode::WithinFold,
            extract: ExtractOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub repetition: usize,
    pub fold: usize,
    pub sample_id: String,
    pub author: String,
    pub predicted: String,
    pub margin: f64,
    /// 1-based position of the true author in the ranking over all authors.
    pub rank: usize,
}

impl InstanceResult {
    pub fn correct(&self) -> bool {
        self.author == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_authors: usize,
    pub n_samples: usize,
    pub k: usize,
    pub repetitions: usize,
    /// Mean training rows per author per fold.
    pub training_samples_per_author: f64,
    /// `fold_accuracy[r][f]`.
    pub fold_accuracy: Vec<Vec<f64>>,
    pub mean_accuracy: f64,
    /// `top_n[n - 1]` for `n = 1..=top_n_max`.
    pub top_n: Vec<f64>,
    /// True author to predicted author to count, over all repetitions.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub margins_correct: Vec<f64>,
    pub margins_incorrect: Vec<f64>,
    /// Selected feature count per fold (feature count when not selecting).
    pub features_per_fold: Vec<usize>,
    pub instances: Vec<InstanceResult>,
}

/// Extracts `corpus`, plans folds and runs [`cross_validate_folds`].
pub fn cross_validate(corpus: &Corpus, config: &EvalConfig) -> Result<EvalReport> {
    let plan = stratify_folds(corpus, config.k)?;
    let base = extract_base(corpus, config.extract)?;
    cross_validate_folds(&base, &plan, config)
}

/// Feature extraction is per sample; document frequencies and selection are
/// recomputed from each fold's training samples.
pub fn cross_validate_folds(base: &[BaseSample], plan: &FoldPlan, config: &EvalConfig) -> Result<EvalReport> {
    let ids: Vec<&str> = base.iter().map(|s| s.sample_id.as_str()).collect();
    let labels: Vec<String> = base.iter().map(|s| s.author_id.clone()).collect();
    let folds = split_plan(&ids, plan)?;
    let data =
        folds.par_iter().map(|(tr, te)| fold_data(base, tr, te, &config.selection)).collect::<Result<Vec<_>>>()?;
    run(&data, &labels, plan.k, config)
}

/// Cross-validation over a prebuilt matrix; rows are assigned to folds by `plan`.
pub fn cross_validate_matrix(matrix: &FeatureMatrix, plan: &FoldPlan, config: &EvalConfig) -> Result<EvalReport> {
    let ids: Vec<&str> = matrix.row_ids.iter().map(String::as_str).collect();
    let folds = split_plan(&ids, plan)?;
    let data = folds
        .par_iter()
        .map(|(tr, te)| fold_data_from_matrix(matrix, tr, te, &config.selection))
        .collect::<Result<Vec<_>>>()?;
    run(&data, &matrix.labels, plan.k, config)
}

fn split_plan(ids: &[&str], plan: &FoldPlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut folds = vec![(Vec::new(), Vec::new()); plan.k];
    for (i, id) in ids.iter().enumerate() {
        let f = plan
            .fold_of(id)
            .ok_or_else(|| Error::InvalidArgument(format!("sample {id:?} missing from the fold plan")))?;
        for (g, fold) in folds.iter_mut().enumerate() {
            if g == f {
                fold.1.push(i);
            } else {
                fold.0.push(i);
            }
        }
    }
    if let Some(f) = folds.iter().position(|f| f.1.is_empty()) {
        return Err(Error::InvalidArgument(format!("fold {f} has no test samples")));
    }
    Ok(folds)
}

fn run(data: &[FoldData], labels: &[String], k: usize, config: &EvalConfig) -> Result<EvalReport> {
    if config.repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let authors: Vec<String> = {
        let mut a = labels.to_vec();
        a.sort();
        a.dedup();
        a
    };
    let top_n_max = config.top_n_max.unwrap_or(authors.len());
    if top_n_max == 0 || top_n_max > authors.len() {
        return Err(Error::BadN { n: top_n_max, classes: authors.len() });
    }
    let cells: Vec<(usize, usize)> = (0..config.repetitions).flat_map(|r| (0..k).map(move |f| (r, f))).collect();
    let results =
        cells.par_iter().map(|&(r, f)| evaluate_cell(&data[f], r, f, &authors, config)).collect::<Result<Vec<_>>>()?;

    let mut fold_accuracy = vec![vec![0.0; k]; config.repetitions];
    let mut instances = Vec::new();
    for ((r, f), cell) in cells.iter().zip(results) {
        fold_accuracy[*r][*f] = cell.iter().filter(|i| i.correct()).count() as f64 / cell.len() as f64;
        instances.extend(cell);
    }
    let correct = instances.iter().filter(|i| i.correct()).count();
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for i in &instances {
        *confusion.entry(i.author.clone()).or_default().entry(i.predicted.clone()).or_insert(0) += 1;
    }
    let (ok, bad): (Vec<&InstanceResult>, Vec<&InstanceResult>) = instances.iter().partition(|i| i.correct());
    let train_rows: usize = data.iter().map(|d| d.train.n_rows()).sum();
    let mut report = EvalReport {
        n_authors: authors.len(),
        n_samples: labels.len(),
        k,
        repetitions: config.repetitions,
        training_samples_per_author: train_rows as f64 / (k * authors.len()) as f64,
        fold_accuracy,
        mean_accuracy: correct as f64 / instances.len() as f64,
        top_n: Vec::new(),
        confusion,
        margins_correct: ok.iter().map(|i| i.margin).collect(),
        margins_incorrect: bad.iter().map(|i| i.margin).collect(),
        features_per_fold: data.iter().map(|d| d.train.n_cols()).collect(),
        instances,
    };
    report.top_n = curve(&report.instances, top_n_max);
    Ok(report)
}

fn evaluate_cell(
    fold: &FoldData,
    repetition: usize,
    fold_index: usize,
    authors: &[String],
    config: &EvalConfig,
) -> Result<Vec<InstanceResult>> {
    let forest_cfg = config.forest.with_seed(config.seed.wrapping_add(repetition as u64));
    let forest = train(&fold.train, &forest_cfg)?;
    fold.test
        .rows
        .iter()
        .zip(&fold.test.row_ids)
        .zip(&fold.test.labels)
        .map(|((row, id), author)| {
            let mut result = predict_proba(&forest, row)?;
            // Authors absent from this training fold rank with probability 0.
            for a in authors {
                result.distribution.entry(a.clone()).or_insert(0.0);
            }
            let rank = result.ranking().iter().position(|(a, _)| a == author).map_or(authors.len(), |p| p + 1);
            Ok(InstanceResult {
                repetition,
                fold: fold_index,
                sample_id: id.clone(),
                author: author.clone(),
                predicted: result.predicted,
                margin: result.margin,
                rank,
            })
        })
        .collect()
}

fn curve(instances: &[InstanceResult], top_n_max: usize) -> Vec<f64> {
    if instances.is_empty() {
        return vec![1.0; top_n_max];
    }
    (1..=top_n_max).map(|n| instances.iter().filter(|i| i.rank <= n).count() as f64 / instances.len() as f64).collect()
}

/// `(n, accuracy)` for `n = 1..=top_n_max`.
pub fn topn_curve(report: &EvalReport) -> Vec<(usize, f64)> {
    curve(&report.instances, report.top_n.len()).into_iter().enumerate().map(|(i, a)| (i + 1, a)).collect()
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|source| Error::Json { context: "serializing report".into(), source })
    }

    /// Programmers, training samples per programmer and mean accuracy.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>17} {:>9}", "programmers", "training samples", "accuracy");
        let _ = writeln!(
            out,
            "{:<12} {:>17} {:>8.1}%",
            self.n_authors,
            format!("{:.1}", self.training_samples_per_author),
            self.mean_accuracy * 100.0
        );
        out
    }

    pub fn topn_csv(&self) -> String {
        let mut out = String::from("n,accuracy\n");
        for (n, a) in topn_curve(self) {
            let _ = writeln!(out, "{n},{a}");
        }
        out
    }

    pub fn mean_margin_correct(&self) -> Option<f64> {
        mean(&self.margins_correct)
    }

    pub fn mean_margin_incorrect(&self) -> Option<f64> {
        mean(&self.margins_incorrect)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine similarity after L2 normalization. Two zero vectors count as
/// identical (1); a zero vector against a non-zero one gives 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ if a == b => 1.0,
        _ => a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum::<f64>().clamp(-1.0, 1.0),
    }
}

/// Per-row cosine similarity of two equally shaped dense row sets.
pub fn row_cosines(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::RowMisalignment(format!("{} rows vs {} rows", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.len() != y.len() {
                return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
            }
            Ok(cosine_similarity(x, y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    /// Out-of-fold prediction folds; row `i` is predicted by the model that
    /// did not see fold `i % k`.
    pub k: usize,
    pub forest: ForestConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig { k: 9, forest: ForestConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReconstruction {
    pub key: FeatureKey,
    /// `None` when the true or predicted column is constant.
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub columns: Vec<ColumnReconstruction>,
    pub mean_pearson: Option<f64>,
    pub row_cosine: Vec<f64>,
    pub mean_cosine: f64,
    /// Raw decompiled rows against true source rows over shared keys.
    pub baseline_cosine: Vec<f64>,
    pub mean_baseline_cosine: Option<f64>,
    pub shared_keys: usize,
    /// Out-of-fold predictions, `predicted[row][source column]`.
    pub predicted: Vec<Vec<f64>>,
}

impl ReconstructionReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|source| Error::Json { context: "serializing reconstruction report".into(), source })
    }
}

/// Predicts each source column from the decompiled features with a
/// regression forest and scores the reconstruction.
pub fn reconstruct_features(
    decompiled: &FeatureMatrix,
    source: &FeatureMatrix,
    config: &ReconstructionConfig,
) -> Result<ReconstructionReport> {
    if decompiled.row_ids != source.row_ids {
        let at = decompiled.row_ids.iter().zip(&source.row_ids).position(|(a, b)| a != b);
        return Err(Error::RowMisalignment(match at {
            Some(i) => format!("row {i}: {:?} vs {:?}", decompiled.row_ids[i], source.row_ids[i]),
            None => format!("{} rows vs {} rows", decompiled.n_rows(), source.n_rows()),
        }));
    }
    let n = decompiled.n_rows();
    if n < 2 || decompiled.n_cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if config.k < 2 || config.k > n {
        return Err(Error::InvalidArgument(format!("reconstruction folds {} outside [2, {n}]", config.k)));
    }
    let truth = source.dense_columns();
    let folds: Vec<(Vec<usize>, Vec<usize>)> =
        (0..config.k).map(|f| (0..n).partition(|&i| i % config.k != f)).collect();
    let predicted_cols = truth
        .par_iter()
        .map(|target| {
            let mut pred = vec![0.0; n];
            for (tr, te) in &folds {
                let rows: Vec<_> = tr.iter().map(|&i| decompiled.rows[i].clone()).collect();
                let y: Vec<f64> = tr.iter().map(|&i| target[i]).collect();
                let model = train_regressor(&rows, decompiled.n_cols(), &y, &config.forest)?;
                for &i in te {
                    pred[i] = model.predict(&decompiled.rows[i]);
                }
            }
            Ok(pred)
        })
        .collect::<Result<Vec<_>>>()?;

    let columns: Vec<ColumnReconstruction> = source
        .vocabulary
        .keys()
        .iter()
        .zip(truth.iter().zip(&predicted_cols))
        .map(|(key, (t, p))| ColumnReconstruction { key: key.clone(), pearson: pearson(p, t) })
        .collect();
    let defined: Vec<f64> = columns.iter().filter_map(|c| c.pearson).collect();

    let true_rows = transpose(&truth, n);
    let pred_rows = transpose(&predicted_cols, n);
    let row_cosine = row_cosines(&true_rows, &pred_rows)?;

    let shared: Vec<(usize, usize)> = source
        .vocabulary
        .keys()
        .iter()
        .enumerate()
        .filter_map(|(j, k)| decompiled.vocabulary.id(k).map(|d| (d, j)))
        .collect();
    let baseline_cosine: Vec<f64> = if shared.is_empty() {
        Vec::new()
    } else {
        (0..n)
            .map(|r| {
                let a: Vec<f64> = shared.iter().map(|&(d, _)| decompiled.get(r, d)).collect();
                let b: Vec<f64> = shared.iter().map(|&(_, s)| truth[s][r]).collect();
                cosine_similarity(&a, &b)
            })
            .collect()
    };
    Ok(ReconstructionReport {
        columns,
        mean_pearson: mean(&defined),
        mean_cosine: mean(&row_cosine).unwrap_or(0.0),
        row_cosine,
        mean_baseline_cosine: mean(&baseline_cosine),
        baseline_cosine,
        shared_keys: shared.len(),
        predicted: pred_rows,
    })
}

fn transpose(cols: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}
