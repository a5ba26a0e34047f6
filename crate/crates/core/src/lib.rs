//! Authorship attribution of compiled programs from instruction, control-flow
//! and decompiled-syntax features.

pub mod corpus;
pub mod disasm;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod fuzzyc;
pub mod infogain;
pub mod pipeline;
pub mod synth;

pub use corpus::{load_manifest, stratify_folds, write_manifest, ArtifactKind, Corpus, FoldPlan, Sample, Variant};
pub use error::{Error, Result};
pub use eval::{cross_validate, reconstruct_features, topn_curve, EvalConfig, EvalReport, ReconstructionReport};
pub use features::{
    assemble_vectors, extract_corpus, FeatureCounts, FeatureFamily, FeatureKey, FeatureMatrix, SparseRow, Vocabulary,
};
pub use forest::{predict_proba, top_n, train, verify, AttributionResult, Forest, ForestConfig};
pub use fuzzyc::{parse_pseudo_c, FuzzyAst, NodeType};
pub use infogain::{discretize_mdl, information_gain, select_nonzero, CutPoints, FeatureSelection};
pub use pipeline::{AttributionModel, SelectionMode};
