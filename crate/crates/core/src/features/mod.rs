//! Named sparse feature counts and the corpus-wide matrix.

mod asm;
mod ast;
mod cfg;
mod extract;
mod lexical;
mod matrix;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use asm::extract_assembly_ngrams;
pub use ast::{ast_node_keys, extract_ast_features, CorpusStats};
pub use cfg::extract_cfg_features;
pub use extract::{
    corpus_stats, extract_base, extract_corpus, extract_sample, finish_sample, finish_samples, BaseSample,
    ExtractOptions, ExtractedCorpus, SampleArtifacts,
};
pub use lexical::extract_lexical_features;
pub use matrix::{assemble_vectors, FeatureMatrix, SparseRow, Vocabulary};
pub(crate) use matrix::{escape_field, unescape_field};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    AsmUni,
    AsmBi,
    AsmTri,
    Asm6g,
    CfgBlock,
    CfgBlockPair,
    AstNodeTf,
    AstEdgeTf,
    AstNodeTfidf,
    AstNodeAvgDepth,
    LexWordUni,
    CxxKeyword,
    SymString,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 13] = [
        FeatureFamily::AsmUni,
        FeatureFamily::AsmBi,
        FeatureFamily::AsmTri,
        FeatureFamily::Asm6g,
        FeatureFamily::CfgBlock,
        FeatureFamily::CfgBlockPair,
        FeatureFamily::AstNodeTf,
        FeatureFamily::AstEdgeTf,
        FeatureFamily::AstNodeTfidf,
        FeatureFamily::AstNodeAvgDepth,
        FeatureFamily::LexWordUni,
        FeatureFamily::CxxKeyword,
        FeatureFamily::SymString,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::AsmUni => "asm_uni",
            FeatureFamily::AsmBi => "asm_bi",
            FeatureFamily::AsmTri => "asm_tri",
            FeatureFamily::Asm6g => "asm_6g",
            FeatureFamily::CfgBlock => "cfg_block",
            FeatureFamily::CfgBlockPair => "cfg_block_pair",
            FeatureFamily::AstNodeTf => "ast_node_tf",
            FeatureFamily::AstEdgeTf => "ast_edge_tf",
            FeatureFamily::AstNodeTfidf => "ast_node_tfidf",
            FeatureFamily::AstNodeAvgDepth => "ast_node_avg_depth",
            FeatureFamily::LexWordUni => "lex_word_uni",
            FeatureFamily::CxxKeyword => "cxx_keyword",
            FeatureFamily::SymString => "sym_string",
        }
    }

    /// Families computed from decompiled pseudo-C.
    pub fn is_decompiled(self) -> bool {
        matches!(
            self,
            FeatureFamily::AstNodeTf
                | FeatureFamily::AstEdgeTf
                | FeatureFamily::AstNodeTfidf
                | FeatureFamily::AstNodeAvgDepth
                | FeatureFamily::LexWordUni
                | FeatureFamily::CxxKeyword
        )
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureFamily::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown feature family {s:?}"))
    }
}

/// `(family, payload)`; ordered lexicographically by family name, then payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub family: FeatureFamily,
    pub payload: String,
}

impl FeatureKey {
    pub fn new(family: FeatureFamily, payload: impl Into<String>) -> Self {
        FeatureKey { family, payload: payload.into() }
    }
}

impl Ord for FeatureKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.family.as_str().cmp(other.family.as_str()).then_with(|| self.payload.cmp(&other.payload))
    }
}

impl PartialOrd for FeatureKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.payload)
    }
}

/// Sparse feature values for one sample. Zero values are never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCounts(BTreeMap<FeatureKey, f64>);

impl FeatureCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, family: FeatureFamily, payload: impl Into<String>, amount: f64) {
        let payload = payload.into();
        if payload.is_empty() || amount == 0.0 {
            return;
        }
        let key = FeatureKey::new(family, payload);
        let v = self.0.entry(key.clone()).or_insert(0.0);
        *v += amount;
        if *v == 0.0 {
            self.0.remove(&key);
        }
    }

    pub fn set(&mut self, family: FeatureFamily, payload: impl Into<String>, value: f64) {
        let key = FeatureKey::new(family, payload);
        if value == 0.0 || key.payload.is_empty() {
            self.0.remove(&key);
        } else {
            self.0.insert(key, value);
        }
    }

    pub fn get(&self, family: FeatureFamily, payload: &str) -> f64 {
        self.0.get(&FeatureKey::new(family, payload)).copied().unwrap_or(0.0)
    }

    pub fn merge(&mut self, other: FeatureCounts) {
        for (k, v) in other.0 {
            self.add(k.family, k.payload, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, f64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn family(&self, family: FeatureFamily) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().filter(move |(k, _)| k.family == family).map(|(k, v)| (k.payload.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &FeatureKey> {
        self.0.keys()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_drop_zeros_and_empty_payloads() {
        let mut c = FeatureCounts::new();
        c.add(FeatureFamily::AsmUni, "mov", 1.0);
        c.add(FeatureFamily::AsmUni, "mov", -1.0);
        c.add(FeatureFamily::AsmUni, "", 3.0);
        c.set(FeatureFamily::SymString, "x", 0.0);
        assert!(c.is_empty());
    }

    #[test]
    fn key_order_is_by_family_name() {
        let a = FeatureKey::new(FeatureFamily::SymString, "a");
        let b = FeatureKey::new(FeatureFamily::AsmUni, "z");
        let c = FeatureKey::new(FeatureFamily::Asm6g, "z");
        // "asm_6g" < "asm_uni" < "sym_string"
        let mut v = vec![a.clone(), b.clone(), c.clone()];
        v.sort();
        assert_eq!(v, vec![c, b, a]);
    }

    #[test]
    fn family_names_round_trip() {
        for f in FeatureFamily::ALL {
            assert_eq!(f.as_str().parse::<FeatureFamily>().unwrap(), f);
        }
    }
}
