use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{ArtifactKind, Corpus, Sample};
use crate::disasm::{detect_dialect, parse_cfg, parse_listing, tokenize, SourceKind};
use crate::error::{read_to_string, Error, Result};
use crate::fuzzyc::{lex_pseudo_c, parse_pseudo_c};

use super::ast::{add_tfidf, ast_node_keys, base_ast_features, CorpusStats};
use super::{extract_assembly_ngrams, extract_cfg_features, extract_lexical_features, FeatureCounts};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    pub normalize_constants: bool,
}

/// Artifact texts of one sample; absent kinds contribute no features.
#[derive(Debug, Clone, Default)]
pub struct SampleArtifacts {
    pub texts: BTreeMap<ArtifactKind, String>,
}

impl SampleArtifacts {
    pub fn load(sample: &Sample) -> Result<Self> {
        let mut texts = BTreeMap::new();
        for (kind, path) in &sample.artifact_paths {
            texts.insert(*kind, read_to_string(path)?);
        }
        Ok(SampleArtifacts { texts })
    }

    /// Loads every file in `dir` whose stem names an artifact kind, e.g.
    /// `pseudo_c.c` or `listing_flow.txt`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut texts = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if let Ok(kind) = stem.parse::<ArtifactKind>() {
                if texts.insert(kind, read_to_string(&path)?).is_some() {
                    return Err(Error::InvalidArgument(format!("{}: two files for {stem}", dir.display())));
                }
            }
        }
        if texts.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: no artifact files", dir.display())));
        }
        Ok(SampleArtifacts { texts })
    }

    pub fn get(&self, kind: ArtifactKind) -> Option<&str> {
        self.texts.get(&kind).map(String::as_str)
    }
}

/// Everything except TF-IDF, plus the sample's AST node keys for the
/// document-frequency pass.
pub fn extract_sample(artifacts: &SampleArtifacts, opts: ExtractOptions) -> Result<(FeatureCounts, BTreeSet<String>)> {
    let mut counts = FeatureCounts::new();
    for (kind, source) in
        [(ArtifactKind::ListingLinear, SourceKind::Linear), (ArtifactKind::ListingFlow, SourceKind::Flow)]
    {
        if let Some(text) = artifacts.get(kind) {
            let lines = parse_listing(text, detect_dialect(text))?;
            counts.merge(extract_assembly_ngrams(&tokenize(&lines, source, opts.normalize_constants)));
        }
    }
    if let Some(text) = artifacts.get(ArtifactKind::Cfg) {
        counts.merge(extract_cfg_features(&parse_cfg(text)?));
    }
    let mut keys = BTreeSet::new();
    if let Some(text) = artifacts.get(ArtifactKind::PseudoC) {
        let ast = parse_pseudo_c(&lex_pseudo_c(text));
        keys = ast_node_keys(&ast);
        counts.merge(base_ast_features(&ast));
    }
    counts.merge(extract_lexical_features(
        artifacts.get(ArtifactKind::PseudoC).unwrap_or(""),
        artifacts.get(ArtifactKind::SymbolsStrings).unwrap_or(""),
    ));
    Ok((counts, keys))
}

/// Completes a sample extracted by [`extract_sample`] with TF-IDF values.
pub fn finish_sample(counts: &mut FeatureCounts, stats: &CorpusStats) -> Result<()> {
    if stats.corpus_size == 0 {
        return Err(Error::MissingCorpusStats);
    }
    if stats.doc_freq.is_empty() {
        // No sample of the corpus had pseudo-C.
        return Ok(());
    }
    add_tfidf(counts, stats)
}

/// A sample's features before TF-IDF, with its AST node keys.
#[derive(Debug, Clone)]
pub struct BaseSample {
    pub sample_id: String,
    pub author_id: String,
    pub counts: FeatureCounts,
    pub node_keys: BTreeSet<String>,
}

/// Per-sample extraction over the corpus, in parallel.
pub fn extract_base(corpus: &Corpus, opts: ExtractOptions) -> Result<Vec<BaseSample>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus
        .samples()
        .par_iter()
        .map(|s| {
            let artifacts = SampleArtifacts::load(s)?;
            let (counts, node_keys) = extract_sample(&artifacts, opts)
                .map_err(|e| Error::Sample { sample_id: s.sample_id.clone(), source: Box::new(e) })?;
            Ok(BaseSample { sample_id: s.sample_id.clone(), author_id: s.author_id.clone(), counts, node_keys })
        })
        .collect()
}

/// Document frequencies over `samples`.
pub fn corpus_stats<'a>(samples: impl IntoIterator<Item = &'a BaseSample>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for s in samples {
        stats.add_document(&s.node_keys);
    }
    stats
}

/// Copies of `samples` completed with TF-IDF from `stats`.
pub fn finish_samples<'a>(
    samples: impl IntoIterator<Item = &'a BaseSample>,
    stats: &CorpusStats,
) -> Result<Vec<(String, FeatureCounts)>> {
    samples
        .into_iter()
        .map(|s| {
            let mut counts = s.counts.clone();
            finish_sample(&mut counts, stats)?;
            Ok((s.sample_id.clone(), counts))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExtractedCorpus {
    pub per_sample: Vec<(String, FeatureCounts)>,
    pub labels: BTreeMap<String, String>,
    pub stats: CorpusStats,
}

/// Two-pass extraction: per-sample features in parallel, then document
/// frequencies over the whole corpus, then TF-IDF.
pub fn extract_corpus(corpus: &Corpus, opts: ExtractOptions) -> Result<ExtractedCorpus> {
    let base = extract_base(corpus, opts)?;
    let stats = corpus_stats(&base);
    let per_sample = finish_samples(&base, &stats)?;
    let labels = base.into_iter().map(|s| (s.sample_id, s.author_id)).collect();
    Ok(ExtractedCorpus { per_sample, labels, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureFamily;

    #[test]
    fn all_families_from_full_sample() {
        let mut a = SampleArtifacts::default();
        a.texts.insert(ArtifactKind::ListingLinear, "00000000  55  push ebp\n00000001  89E5  mov ebp,esp\n00000003  8B4508  mov eax,[ebp+0x8]\n00000006  C3  ret\n".into());
        a.texts.insert(ArtifactKind::ListingFlow, "0x1000 55 push ebp\n0x1001 89e5 mov ebp, esp\n".into());
        a.texts.insert(ArtifactKind::Cfg, "block a: push mov\nblock b: ret\nedge a b\n".into());
        a.texts.insert(ArtifactKind::PseudoC, "int f(){return 0;}".into());
        a.texts.insert(ArtifactKind::SymbolsStrings, "printf main".into());
        let (mut counts, keys) = extract_sample(&a, ExtractOptions::default()).unwrap();
        let mut stats = CorpusStats::default();
        stats.add_document(&keys);
        stats.add_document(&BTreeSet::from(["Literal:1".to_string()]));
        finish_sample(&mut counts, &stats).unwrap();
        for f in FeatureFamily::ALL {
            assert!(counts.family(f).count() > 0, "missing {f}");
        }
        assert_eq!(counts.get(FeatureFamily::Asm6g, "lin:ebp esp mov eax ebp 0x8"), 1.0);
        assert_eq!(counts.get(FeatureFamily::AsmUni, "flo:push"), 1.0);
    }

    #[test]
    fn missing_kinds_emit_nothing() {
        let mut a = SampleArtifacts::default();
        a.texts.insert(ArtifactKind::SymbolsStrings, "puts".into());
        let (counts, keys) = extract_sample(&a, ExtractOptions::default()).unwrap();
        assert_eq!(counts.len(), 1);
        assert!(keys.is_empty());
    }
}
