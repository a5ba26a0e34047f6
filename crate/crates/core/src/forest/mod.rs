//! Random-forest author classifier: vote fractions, top-n ranking and
//! margin-based open-world verification.
//!
//! Randomness is per tree. Tree `t` uses a ChaCha8 generator seeded with
//! `config.seed` on stream `t`; it first draws `N` bootstrap row indices, then
//! at each node (depth-first, left before right) draws candidate columns by a
//! partial Fisher-Yates shuffle over a permutation kept for the whole tree.
//! When none of the first `split_candidates` columns yields a positive gain,
//! drawing continues until one does or all columns have been tried.

mod regression;
mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::{FeatureMatrix, SparseRow};

pub use regression::{train_regressor, RegressionForest, RegressionNode};
pub use tree::TreeNode;

use tree::{argmax, bootstrap, ClassTreeBuilder, Columns};

pub const MODEL_VERSION: &str = "binstylo-forest/1";
pub const DEFAULT_TREES: usize = 500;
pub const DEFAULT_MARGIN_THRESHOLD: f64 = 0.4;

/// Deepest tree accepted when loading a model.
const MAX_LOADED_DEPTH: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Columns drawn per node; `None` means `floor(log2 M) + 1`.
    pub split_candidates: Option<usize>,
    pub seed: u64,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: DEFAULT_TREES, split_candidates: None, seed: 0, min_samples_split: 2 }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    /// `floor(log2 m) + 1`.
    pub fn default_split_candidates(m: usize) -> usize {
        if m == 0 {
            0
        } else {
            m.ilog2() as usize + 1
        }
    }

    pub(crate) fn resolve_split_candidates(&self, m: usize) -> Result<usize> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        let k = self.split_candidates.unwrap_or_else(|| Self::default_split_candidates(m));
        if k == 0 || k > m {
            return Err(Error::InvalidArgument(format!("split_candidates {k} outside [1, {m}]")));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    pub version: String,
    pub config: ForestConfig,
    /// Author ids in ascending order; leaf counts are indexed the same way.
    pub classes: Vec<String>,
    pub n_features: usize,
    pub vocabulary_hash: String,
    pub split_candidates: usize,
    pub oob_accuracy: Option<f64>,
    pub trees: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    /// `P(B_i)` = votes for author `i` / number of trees.
    pub distribution: BTreeMap<String, f64>,
    pub votes: BTreeMap<String, usize>,
    pub predicted: String,
    /// `P(1st) - P(2nd)`.
    pub margin: f64,
    /// Set by [`verify`].
    pub accepted: Option<bool>,
}

impl AttributionResult {
    /// Authors by votes descending, ties by author id ascending.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut r: Vec<(&str, usize, f64)> =
            self.distribution.iter().map(|(a, p)| (a.as_str(), self.votes.get(a).copied().unwrap_or(0), *p)).collect();
        r.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        r.into_iter().map(|(a, _, p)| (a, p)).collect()
    }

    fn from_votes(classes: &[String], votes: &[usize], n_trees: usize) -> Self {
        // The last class takes the remainder so that summing the distribution
        // in key order gives exactly 1.0.
        let mut distribution = BTreeMap::new();
        let mut running = 0.0;
        for (i, (c, &v)) in classes.iter().zip(votes).enumerate() {
            let p = if i + 1 == classes.len() { 1.0 - running } else { v as f64 / n_trees as f64 };
            running += p;
            distribution.insert(c.clone(), p);
        }
        let mut sorted: Vec<usize> = votes.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let second = sorted.get(1).copied().unwrap_or(0);
        let margin = (sorted[0] - second) as f64 / n_trees as f64;
        AttributionResult {
            distribution,
            votes: classes.iter().cloned().zip(votes.iter().copied()).collect(),
            predicted: classes[argmax(votes)].clone(),
            margin,
            accepted: None,
        }
    }
}

/// Trains `config.n_trees` fully grown trees on bootstrap samples of `matrix`.
pub fn train(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<Forest> {
    if matrix.n_rows() == 0 || matrix.n_cols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (classes, labels) = matrix.label_indices();
    if classes.len() < 2 {
        return Err(Error::SingleClassCorpus);
    }
    let split_candidates = config.resolve_split_candidates(matrix.n_cols())?;
    let columns = Columns::new(&matrix.rows, matrix.n_cols());
    let builder = ClassTreeBuilder {
        columns: &columns,
        labels: &labels,
        n_classes: classes.len(),
        split_candidates,
        min_samples_split: config.min_samples_split,
    };
    let n = matrix.n_rows();
    let grown: Vec<(TreeNode, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let sample = bootstrap(&mut rng, n);
            let mut in_bag = vec![false; n];
            for &r in &sample {
                in_bag[r] = true;
            }
            (builder.build(sample, &mut rng), in_bag)
        })
        .collect();

    let mut oob_votes = vec![vec![0usize; classes.len()]; n];
    for (tree, in_bag) in &grown {
        for r in (0..n).filter(|&r| !in_bag[r]) {
            oob_votes[r][tree.vote(&matrix.rows[r])] += 1;
        }
    }
    let scored: Vec<bool> =
        oob_votes.iter().zip(&labels).filter(|(v, _)| v.iter().any(|&c| c > 0)).map(|(v, &l)| argmax(v) == l).collect();
    let oob_accuracy = (!scored.is_empty()).then(|| scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64);

    Ok(Forest {
        version: MODEL_VERSION.to_string(),
        config: *config,
        classes,
        n_features: matrix.n_cols(),
        vocabulary_hash: matrix.vocabulary.hash(),
        split_candidates,
        oob_accuracy,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
    })
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Raw vote count per class index.
    pub fn votes(&self, row: &SparseRow) -> Result<Vec<usize>> {
        if let Some(&(c, _)) = row.iter().find(|e| e.0 >= self.n_features) {
            return Err(Error::VocabularyMismatch(format!(
                "column {c} outside the model's {} features",
                self.n_features
            )));
        }
        let mut votes = vec![0; self.classes.len()];
        for t in &self.trees {
            votes[t.vote(row)] += 1;
        }
        Ok(votes)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|source| Error::Json { context: "serializing forest".into(), source })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let forest =
            Forest::deserialize(&mut de).map_err(|source| Error::Json { context: "parsing forest".into(), source })?;
        de.end().map_err(|source| Error::Json { context: "parsing forest".into(), source })?;
        forest.validate()?;
        Ok(forest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json { context: path.display().to_string(), source },
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("invalid model: {m}")));
        if self.version != MODEL_VERSION {
            return bad(format!("version {:?}, expected {MODEL_VERSION:?}", self.version));
        }
        if self.trees.len() != self.config.n_trees || self.trees.is_empty() {
            return bad(format!("{} trees, config says {}", self.trees.len(), self.config.n_trees));
        }
        if self.classes.len() < 2 || self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("classes must be at least two distinct ids in ascending order".into());
        }
        for t in &self.trees {
            if t.depth() > MAX_LOADED_DEPTH {
                return bad("tree too deep".into());
            }
            let mut err = None;
            t.for_each(&mut |n| match n {
                TreeNode::Internal { feature, threshold, .. } => {
                    if *feature >= self.n_features || !threshold.is_finite() {
                        err = Some(format!("split on column {feature} of {}", self.n_features));
                    }
                }
                TreeNode::Leaf { counts } => {
                    if counts.len() != self.classes.len() || counts.iter().sum::<usize>() == 0 {
                        err = Some("leaf counts must cover every class and sum to at least 1".into());
                    }
                }
            });
            if let Some(m) = err {
                return bad(m);
            }
        }
        Ok(())
    }
}

/// Vote fractions of the forest for `row`, which must be indexed by the
/// model's vocabulary.
pub fn predict_proba(forest: &Forest, row: &SparseRow) -> Result<AttributionResult> {
    let votes = forest.votes(row)?;
    Ok(AttributionResult::from_votes(&forest.classes, &votes, forest.n_trees()))
}

/// First `n` authors of [`AttributionResult::ranking`].
pub fn top_n(result: &AttributionResult, n: usize) -> Result<Vec<String>> {
    let classes = result.distribution.len();
    if n == 0 || n > classes {
        return Err(Error::BadN { n, classes });
    }
    Ok(result.ranking().into_iter().take(n).map(|(a, _)| a.to_string()).collect())
}

/// Accepts the attribution iff its margin reaches `threshold`.
pub fn verify(result: &AttributionResult, threshold: f64) -> Result<AttributionResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::BadThreshold(threshold));
    }
    let mut out = result.clone();
    out.accepted = Some(result.margin >= threshold);
    Ok(out)
}

/// Runs `f` on a pool of `jobs` worker threads, or on the global pool when
/// `jobs` is `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureFamily, FeatureKey, Vocabulary};

    fn matrix(rows: Vec<SparseRow>, labels: &[&str], n_cols: usize) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: (0..rows.len()).map(|i| format!("r{i:03}")).collect(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            rows,
            vocabulary: Vocabulary::from_ordered(
                (0..n_cols).map(|i| FeatureKey::new(FeatureFamily::AsmUni, format!("f{i:03}"))).collect(),
            )
            .unwrap(),
        }
    }

    fn separable(n: usize) -> FeatureMatrix {
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(1, (i % 2) as f64 + 1.0)];
                r.push((3, ((i * 37) % 11) as f64 + 1.0));
                r
            })
            .collect();
        matrix(rows, &labels, 5)
    }

    #[test]
    fn split_candidate_rule() {
        assert_eq!(ForestConfig::default_split_candidates(1), 1);
        assert_eq!(ForestConfig::default_split_candidates(2), 2);
        assert_eq!(ForestConfig::default_split_candidates(1655), 11);
        assert_eq!(ForestConfig::default_split_candidates(1024), 11);
    }

    #[test]
    fn separable_oob_is_perfect() {
        let f = train(&separable(40), &ForestConfig::default().with_trees(50).with_seed(1)).unwrap();
        assert_eq!(f.oob_accuracy, Some(1.0));
        assert_eq!(f.trees.len(), 50);
    }

    #[test]
    fn same_seed_same_bytes() {
        let m = separable(30);
        let cfg = ForestConfig::default().with_trees(20).with_seed(5);
        assert_eq!(train(&m, &cfg).unwrap().to_json().unwrap(), train(&m, &cfg).unwrap().to_json().unwrap());
    }

    #[test]
    fn model_round_trip() {
        let f = train(&separable(30), &ForestConfig::default().with_trees(10)).unwrap();
        let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_tampered_model() {
        let f = train(&separable(30), &ForestConfig::default().with_trees(3)).unwrap();
        let mut g = f.clone();
        g.n_features = 1;
        assert!(Forest::from_json(&g.to_json().unwrap()).is_err());
        let mut h = f.clone();
        h.version = "other/9".into();
        assert!(Forest::from_json(&h.to_json().unwrap()).is_err());
    }

    #[test]
    fn single_class_and_empty() {
        let m = matrix(vec![vec![(0, 1.0)], vec![]], &["a", "a"], 1);
        assert!(matches!(train(&m, &ForestConfig::default()), Err(Error::SingleClassCorpus)));
        let e = matrix(vec![], &[], 1);
        assert!(matches!(train(&e, &ForestConfig::default()), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn vote_arithmetic() {
        let classes = vec!["A".to_string(), "B".to_string()];
        let r = AttributionResult::from_votes(&classes, &[300, 200], 500);
        assert_eq!(r.distribution["A"], 0.6);
        assert_eq!(r.distribution["B"], 0.4);
        assert!((r.margin - 0.2).abs() < 1e-15);
        assert_eq!(r.predicted, "A");
        let all = AttributionResult::from_votes(&classes, &[500, 0], 500);
        assert_eq!((all.distribution["A"], all.margin), (1.0, 1.0));
        let classes3 = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let p = AttributionResult::from_votes(&classes3, &[45, 30, 25], 100);
        assert!((p.margin - 0.15).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let classes = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let r = AttributionResult::from_votes(&classes, &[2, 2, 1], 5);
        assert_eq!(r.predicted, "A");
        assert_eq!(r.margin, 0.0);
        assert_eq!(top_n(&r, 2).unwrap(), vec!["A", "B"]);
        assert_eq!(top_n(&r, 1).unwrap(), vec![r.predicted.clone()]);
        assert_eq!(top_n(&r, 3).unwrap().len(), 3);
        assert!(matches!(top_n(&r, 0), Err(Error::BadN { n: 0, classes: 3 })));
        assert!(matches!(top_n(&r, 4), Err(Error::BadN { .. })));
    }

    #[test]
    fn verify_threshold() {
        let classes = vec!["A".to_string(), "B".to_string()];
        let low = AttributionResult::from_votes(&classes, &[117, 83], 200);
        assert_eq!(verify(&low, 0.4).unwrap().accepted, Some(false));
        let full = AttributionResult::from_votes(&classes, &[10, 0], 10);
        assert_eq!(verify(&full, 1.0).unwrap().accepted, Some(true));
        assert_eq!(verify(&low, 0.0).unwrap().accepted, Some(true));
        assert!(matches!(verify(&low, 1.5), Err(Error::BadThreshold(_))));
        assert!(matches!(verify(&low, f64::NAN), Err(Error::BadThreshold(_))));
    }

    #[test]
    fn out_of_range_column_rejected() {
        let f = train(&separable(20), &ForestConfig::default().with_trees(3)).unwrap();
        assert!(matches!(predict_proba(&f, &vec![(7, 1.0)]), Err(Error::VocabularyMismatch(_))));
    }

    #[test]
    fn job_count_does_not_change_model() {
        let m = separable(40);
        let cfg = ForestConfig::default().with_trees(40).with_seed(11);
        let one = with_jobs(Some(1), || train(&m, &cfg)).unwrap().unwrap();
        let four = with_jobs(Some(4), || train(&m, &cfg)).unwrap().unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn scaling_columns_keeps_oob() {
        let m = separable(40);
        let mut scaled = m.clone();
        for row in &mut scaled.rows {
            for e in row.iter_mut() {
                e.1 *= 3.5;
            }
        }
        let cfg = ForestConfig::default().with_trees(30).with_seed(2);
        assert_eq!(train(&m, &cfg).unwrap().oob_accuracy, train(&scaled, &cfg).unwrap().oob_accuracy);
    }

    proptest::proptest! {
        #[test]
        fn distribution_sums_to_one(raw in proptest::collection::vec(0usize..200, 2..12)) {
            let n_trees: usize = raw.iter().sum::<usize>().max(1);
            let mut votes = raw.clone();
            if votes.iter().all(|&v| v == 0) {
                votes[0] = 1;
            }
            let classes: Vec<String> = (0..votes.len()).map(|i| format!("c{i:02}")).collect();
            let r = AttributionResult::from_votes(&classes, &votes, n_trees);
            proptest::prop_assert_eq!(r.distribution.values().sum::<f64>(), 1.0);
            let best = votes.iter().max().unwrap();
            proptest::prop_assert_eq!(r.votes[&r.predicted], *best);
        }
    }
}
