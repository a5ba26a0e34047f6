//! Extraction-to-model plumbing shared by evaluation and the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::{
    assemble_vectors, corpus_stats, extract_base, extract_sample, finish_sample, finish_samples, BaseSample,
    CorpusStats, ExtractOptions, FeatureCounts, FeatureMatrix, SampleArtifacts, SparseRow, Vocabulary,
};
use crate::forest::{predict_proba, train, AttributionResult, Forest, ForestConfig};
use crate::infogain::{select_nonzero, FeatureSelection};

/// How the feature set of a training run is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SelectionMode {
    /// Information-gain selection on the training rows only.
    #[default]
    WithinFold,
    /// A previously computed selection, applied unchanged.
    Frozen(FeatureSelection),
    /// Every feature observed in training.
    AllFeatures,
}

/// Training and test matrices over the same columns.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    /// Set in within-fold mode.
    pub selection: Option<FeatureSelection>,
}

fn labels_of(base: &[BaseSample]) -> BTreeMap<String, String> {
    base.iter().map(|s| (s.sample_id.clone(), s.author_id.clone())).collect()
}

/// Builds train and test matrices from extracted samples. Document
/// frequencies and, in within-fold mode, the selection come from the
/// training samples alone.
pub fn fold_data(
    base: &[BaseSample],
    train_idx: &[usize],
    test_idx: &[usize],
    mode: &SelectionMode,
) -> Result<FoldData> {
    let stats = corpus_stats(train_idx.iter().map(|&i| &base[i]));
    let train_counts = finish_samples(train_idx.iter().map(|&i| &base[i]), &stats)?;
    let test_counts = finish_samples(test_idx.iter().map(|&i| &base[i]), &stats)?;
    let labels = labels_of(base);
    let frozen = match mode {
        SelectionMode::Frozen(sel) => Some(sel.vocabulary()),
        _ => None,
    };
    let (train_m, vocab) = assemble_vectors(&train_counts, &labels, frozen.as_ref())?;
    let test_m = assemble_or_empty(&test_counts, &labels, &vocab)?;
    split_selection(train_m, test_m, mode)
}

/// Same as [`fold_data`] for an already assembled matrix.
pub fn fold_data_from_matrix(
    matrix: &FeatureMatrix,
    train_idx: &[usize],
    test_idx: &[usize],
    mode: &SelectionMode,
) -> Result<FoldData> {
    let train_m = matrix.select_rows(train_idx);
    let test_m = matrix.select_rows(test_idx);
    match mode {
        SelectionMode::Frozen(sel) => {
            Ok(FoldData { train: sel.apply(&train_m), test: sel.apply(&test_m), selection: None })
        }
        _ => split_selection(train_m, test_m, mode),
    }
}

fn assemble_or_empty(
    counts: &[(String, FeatureCounts)],
    labels: &BTreeMap<String, String>,
    vocab: &Vocabulary,
) -> Result<FeatureMatrix> {
    if counts.is_empty() {
        return Ok(FeatureMatrix { row_ids: vec![], labels: vec![], rows: vec![], vocabulary: vocab.clone() });
    }
    Ok(assemble_vectors(counts, labels, Some(vocab))?.0)
}

fn split_selection(train_m: FeatureMatrix, test_m: FeatureMatrix, mode: &SelectionMode) -> Result<FoldData> {
    match mode {
        SelectionMode::WithinFold => {
            let sel = select_nonzero(&train_m)?;
            if sel.is_empty() {
                return Err(Error::InvalidArgument(
                    "no feature has non-zero information gain on the training rows".into(),
                ));
            }
            Ok(FoldData { train: sel.apply(&train_m), test: sel.apply(&test_m), selection: Some(sel) })
        }
        _ => Ok(FoldData { train: train_m, test: test_m, selection: None }),
    }
}

/// A forest together with everything needed to vectorize new samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionModel {
    pub forest: Forest,
    pub vocabulary: Vocabulary,
    pub stats: CorpusStats,
    pub extract: ExtractOptions,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSidecar {
    normalize_constants: bool,
    stats: CorpusStats,
}

impl AttributionModel {
    /// Extracts `corpus` and trains on all of it.
    pub fn fit(
        corpus: &Corpus,
        mode: &SelectionMode,
        forest: &ForestConfig,
        extract: ExtractOptions,
    ) -> Result<(Self, Option<FeatureSelection>)> {
        let base = extract_base(corpus, extract)?;
        Self::fit_base(&base, mode, forest, extract)
    }

    pub fn fit_base(
        base: &[BaseSample],
        mode: &SelectionMode,
        forest: &ForestConfig,
        extract: ExtractOptions,
    ) -> Result<(Self, Option<FeatureSelection>)> {
        let all: Vec<usize> = (0..base.len()).collect();
        let fold = fold_data(base, &all, &[], mode)?;
        let model = AttributionModel {
            forest: train(&fold.train, forest)?,
            vocabulary: fold.train.vocabulary.clone(),
            stats: corpus_stats(base),
            extract,
        };
        Ok((model, fold.selection))
    }

    /// Maps completed counts onto the model's columns.
    pub fn row(&self, counts: &FeatureCounts) -> SparseRow {
        let mut row: SparseRow = counts.iter().filter_map(|(k, v)| self.vocabulary.id(k).map(|c| (c, v))).collect();
        row.sort_unstable_by_key(|e| e.0);
        row
    }

    pub fn attribute_counts(&self, base_counts: &FeatureCounts) -> Result<AttributionResult> {
        let mut counts = base_counts.clone();
        finish_sample(&mut counts, &self.stats)?;
        predict_proba(&self.forest, &self.row(&counts))
    }

    pub fn attribute(&self, artifacts: &SampleArtifacts) -> Result<AttributionResult> {
        let (counts, _) = extract_sample(artifacts, self.extract)?;
        self.attribute_counts(&counts)
    }

    /// Sidecar paths next to `model_path`: `<stem>.vocab.tsv` and `<stem>.docfreq.json`.
    pub fn sidecar_paths(model_path: &Path) -> (PathBuf, PathBuf) {
        let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let dir = model_path.parent().unwrap_or(Path::new(""));
        (dir.join(format!("{stem}.vocab.tsv")), dir.join(format!("{stem}.docfreq.json")))
    }

    pub fn save(&self, model_path: &Path) -> Result<()> {
        let (vocab_path, df_path) = Self::sidecar_paths(model_path);
        self.forest.write(model_path)?;
        self.vocabulary.write(&vocab_path)?;
        let sidecar = ModelSidecar { normalize_constants: self.extract.normalize_constants, stats: self.stats.clone() };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|source| Error::Json { context: df_path.display().to_string(), source })?;
        write_file(&df_path, json + "\n")
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let (vocab_path, df_path) = Self::sidecar_paths(model_path);
        let forest = Forest::read(model_path)?;
        let vocabulary = Vocabulary::read(&vocab_path)?;
        if vocabulary.hash() != forest.vocabulary_hash || vocabulary.len() != forest.n_features {
            return Err(Error::VocabularyMismatch(format!(
                "{} does not match the vocabulary the model was trained on",
                vocab_path.display()
            )));
        }
        let sidecar: ModelSidecar = serde_json::from_str(&read_to_string(&df_path)?)
            .map_err(|source| Error::Json { context: df_path.display().to_string(), source })?;
        Ok(AttributionModel {
            forest,
            vocabulary,
            stats: sidecar.stats,
            extract: ExtractOptions { normalize_constants: sidecar.normalize_constants },
        })
    }
}
