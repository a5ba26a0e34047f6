use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzyc::{AstNode, FuzzyAst};

use super::{FeatureCounts, FeatureFamily};

/// Per-key document frequencies over one corpus pass. A document is one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub corpus_size: usize,
    pub doc_freq: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn add_document(&mut self, keys: &BTreeSet<String>) {
        self.corpus_size += 1;
        for k in keys {
            *self.doc_freq.entry(k.clone()).or_insert(0) += 1;
        }
    }

    pub fn idf(&self, key: &str) -> Option<f64> {
        let df = *self.doc_freq.get(key)?;
        (df > 0).then(|| (self.corpus_size as f64 / df as f64).ln())
    }
}

/// Keys a node contributes: its type, plus `Type:token` for leaves with text.
fn node_keys(node: &AstNode) -> impl Iterator<Item = String> + '_ {
    let leaf = node.token_text.as_ref().filter(|_| node.is_leaf()).map(|t| format!("{}:{t}", node.node_type));
    std::iter::once(node.node_type.as_str().to_string()).chain(leaf)
}

pub fn ast_node_keys(ast: &FuzzyAst) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    ast.root.walk(0, &mut |n, _| keys.extend(node_keys(n)));
    keys
}

/// Node TF, labeled edge TF, node average depth and, when `stats` is given,
/// node TF-IDF (`tf * ln(N / df)`).
pub fn extract_ast_features(ast: &FuzzyAst, stats: Option<&CorpusStats>) -> Result<FeatureCounts> {
    let mut counts = base_ast_features(ast);
    if let Some(stats) = stats {
        add_tfidf(&mut counts, stats)?;
    }
    Ok(counts)
}

pub(crate) fn base_ast_features(ast: &FuzzyAst) -> FeatureCounts {
    let mut counts = FeatureCounts::new();
    let mut depths: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    ast.root.walk(0, &mut |n, d| {
        for key in node_keys(n) {
            let e = depths.entry(key).or_insert((0, 0));
            e.0 += 1;
            e.1 += d;
        }
        for child in &n.children {
            counts.add(FeatureFamily::AstEdgeTf, format!("{}->{}", n.node_type, child.node_type), 1.0);
        }
    });
    for (key, (n, total)) in depths {
        counts.add(FeatureFamily::AstNodeTf, key.clone(), n as f64);
        counts.set(FeatureFamily::AstNodeAvgDepth, key, total as f64 / n as f64);
    }
    counts
}

pub(crate) fn add_tfidf(counts: &mut FeatureCounts, stats: &CorpusStats) -> Result<()> {
    if stats.doc_freq.is_empty() || stats.corpus_size == 0 {
        return Err(Error::MissingCorpusStats);
    }
    let tfidf: Vec<(String, f64)> = counts
        .family(FeatureFamily::AstNodeTf)
        .filter_map(|(key, tf)| stats.idf(key).map(|idf| (key.to_string(), tf * idf)))
        .collect();
    for (key, v) in tfidf {
        counts.set(FeatureFamily::AstNodeTfidf, key, v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzyc::parse_str;

    #[test]
    fn minimal_function_edges() {
        let ast = parse_str("int f(){return 0;}");
        let c = extract_ast_features(&ast, None).unwrap();
        assert_eq!(c.get(FeatureFamily::AstEdgeTf, "FunctionDef->CompoundStatement"), 1.0);
        assert_eq!(c.get(FeatureFamily::AstEdgeTf, "CompoundStatement->ReturnStatement"), 1.0);
        assert_eq!(c.get(FeatureFamily::AstEdgeTf, "TranslationUnit->FunctionDef"), 1.0);
        assert_eq!(c.get(FeatureFamily::AstEdgeTf, "FunctionDef->ParameterList"), 1.0);
        assert_eq!(c.get(FeatureFamily::AstEdgeTf, "ReturnStatement->Literal"), 1.0);
        assert_eq!(c.family(FeatureFamily::AstEdgeTf).count(), 5);
        assert_eq!(c.get(FeatureFamily::AstNodeTf, "Literal:0"), 1.0);
        assert_eq!(c.get(FeatureFamily::AstNodeAvgDepth, "ReturnStatement"), 3.0);
        assert_eq!(c.get(FeatureFamily::AstNodeAvgDepth, "TranslationUnit"), 0.0);
    }

    #[test]
    fn avg_depth_is_mean() {
        // ReturnStatement at depth 3 (function body) and depth 5 (inside if).
        let ast = parse_str("int f(){ if (a) { return 1; } return 0; }");
        let depths = crate::fuzzyc::node_depths(&ast);
        assert_eq!(depths[&crate::fuzzyc::NodeType::ReturnStatement], vec![5, 3]);
        let c = extract_ast_features(&ast, None).unwrap();
        assert_eq!(c.get(FeatureFamily::AstNodeAvgDepth, "ReturnStatement"), 4.0);
    }

    #[test]
    fn ubiquitous_node_has_zero_tfidf() {
        let ast = parse_str("int f(){return 0;}");
        let mut stats = CorpusStats::default();
        stats.add_document(&ast_node_keys(&ast));
        stats.add_document(&ast_node_keys(&parse_str("int g(){return 1;}")));
        let c = extract_ast_features(&ast, Some(&stats)).unwrap();
        assert_eq!(c.get(FeatureFamily::AstNodeTfidf, "ReturnStatement"), 0.0);
        assert!((c.get(FeatureFamily::AstNodeTfidf, "Literal:0") - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_stats_rejected() {
        let ast = parse_str("int x;");
        assert!(matches!(extract_ast_features(&ast, Some(&CorpusStats::default())), Err(Error::MissingCorpusStats)));
    }
}
