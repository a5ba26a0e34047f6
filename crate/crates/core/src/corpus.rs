//! Datasets of per-author samples and their fold plans.
//!
//! A corpus is described by one JSON manifest listing every sample together
//! with the externally produced artifacts (disassembly listings, CFG dump,
//! decompiled pseudo-C, symbol/string dump) for that sample.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{read_to_string, write_file, Error, Result};

/// Build variant of a sample's binary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Plain,
    O1,
    O2,
    O3,
    Stripped,
    Obfuscated,
    Other(String),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Plain => f.write_str("plain"),
            Variant::O1 => f.write_str("O1"),
            Variant::O2 => f.write_str("O2"),
            Variant::O3 => f.write_str("O3"),
            Variant::Stripped => f.write_str("stripped"),
            Variant::Obfuscated => f.write_str("obfuscated"),
            Variant::Other(tag) => write!(f, "other:{tag}"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "plain" => Variant::Plain,
            "O1" => Variant::O1,
            "O2" => Variant::O2,
            "O3" => Variant::O3,
            "stripped" => Variant::Stripped,
            "obfuscated" => Variant::Obfuscated,
            other => match other.strip_prefix("other:") {
                Some(tag) if !tag.is_empty() => Variant::Other(tag.to_string()),
                _ => return Err(format!("unknown variant {other:?}")),
            },
        })
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The kinds of externally produced artifact a sample may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    ListingLinear,
    ListingFlow,
    Cfg,
    PseudoC,
    SymbolsStrings,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::ListingLinear,
        ArtifactKind::ListingFlow,
        ArtifactKind::Cfg,
        ArtifactKind::PseudoC,
        ArtifactKind::SymbolsStrings,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::ListingLinear => "listing_linear",
            ArtifactKind::ListingFlow => "listing_flow",
            ArtifactKind::Cfg => "cfg",
            ArtifactKind::PseudoC => "pseudo_c",
            ArtifactKind::SymbolsStrings => "symbols_strings",
        }
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ArtifactKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown artifact kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub sample_id: String,
    pub author_id: String,
    pub problem_id: String,
    pub variant: Variant,
    /// Resolved (manifest-relative paths joined onto the manifest directory).
    pub artifact_paths: BTreeMap<ArtifactKind, PathBuf>,
}

impl Sample {
    pub fn artifact(&self, kind: ArtifactKind) -> Option<&Path> {
        self.artifact_paths.get(&kind).map(PathBuf::as_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    samples: Vec<Sample>,
    authors: BTreeSet<String>,
    manifest_path: PathBuf,
}

impl Corpus {
    /// Builds a corpus from already-resolved samples, checking id uniqueness.
    pub fn new(samples: Vec<Sample>, manifest_path: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(s.sample_id.clone()));
            }
        }
        let authors = samples.iter().map(|s| s.author_id.clone()).collect();
        Ok(Corpus { samples, authors, manifest_path: manifest_path.into() })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn authors(&self) -> &BTreeSet<String> {
        &self.authors
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    /// Keeps only samples matching `keep`. Used to realize variant and
    /// skill-level experiments as queries over one manifest.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Result<Corpus> {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        Corpus::new(samples, self.manifest_path.clone())
    }

    pub fn samples_by_author(&self) -> BTreeMap<&str, Vec<&Sample>> {
        let mut by_author: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
        for s in &self.samples {
            by_author.entry(s.author_id.as_str()).or_default().push(s);
        }
        by_author
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    samples: Vec<ManifestSample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSample {
    sample_id: String,
    author_id: String,
    problem_id: String,
    variant: Variant,
    artifacts: BTreeMap<ArtifactKind, PathBuf>,
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let text = read_to_string(path)?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| Error::MalformedManifest { path: path.to_path_buf(), reason: e.to_string() })?;
    let base = manifest_dir(path);
    let mut samples = Vec::with_capacity(doc.samples.len());
    for ms in doc.samples {
        if ms.sample_id.is_empty() || ms.author_id.is_empty() {
            return Err(Error::MalformedManifest {
                path: path.to_path_buf(),
                reason: "sample_id and author_id must be non-empty".into(),
            });
        }
        if ms.artifacts.is_empty() {
            return Err(Error::MalformedManifest {
                path: path.to_path_buf(),
                reason: format!("sample {:?} lists no artifacts", ms.sample_id),
            });
        }
        let mut artifact_paths = BTreeMap::new();
        for (kind, rel) in ms.artifacts {
            let resolved = base.join(&rel);
            match std::fs::metadata(&resolved) {
                Ok(m) if m.is_file() && m.len() > 0 => {}
                Ok(m) if m.is_file() => return Err(Error::EmptyArtifact { sample_id: ms.sample_id, path: resolved }),
                _ => return Err(Error::MissingArtifact { sample_id: ms.sample_id, path: resolved }),
            }
            artifact_paths.insert(kind, resolved);
        }
        samples.push(Sample {
            sample_id: ms.sample_id,
            author_id: ms.author_id,
            problem_id: ms.problem_id,
            variant: ms.variant,
            artifact_paths,
        });
    }
    Corpus::new(samples, path)
}

/// Writes `corpus` as a manifest at `path`. Artifact paths below the
/// manifest's directory are stored relative to it.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<()> {
    let base = manifest_dir(path);
    let doc = ManifestDoc {
        samples: corpus
            .samples
            .iter()
            .map(|s| ManifestSample {
                sample_id: s.sample_id.clone(),
                author_id: s.author_id.clone(),
                problem_id: s.problem_id.clone(),
                variant: s.variant.clone(),
                artifacts: s
                    .artifact_paths
                    .iter()
                    .map(|(k, p)| {
                        let rel = p.strip_prefix(&base).map(Path::to_path_buf).unwrap_or_else(|_| p.clone());
                        (*k, rel)
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Json { context: "serializing manifest".into(), source: e })?;
    write_file(path, json + "\n")
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    /// True when folds follow problem ids (one sample per author per problem).
    pub problem_aligned: bool,
}

impl FoldPlan {
    pub fn fold_of(&self, sample_id: &str) -> Option<usize> {
        self.assignment.get(sample_id).copied()
    }

    /// Sample ids of fold `f`, in sample-id order.
    pub fn fold(&self, f: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &v)| v == f).map(|(s, _)| s.as_str()).collect()
    }
}

pub fn stratify_folds(corpus: &Corpus, k: usize) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("fold count must be positive".into()));
    }
    let by_author = corpus.samples_by_author();
    for (author, samples) in &by_author {
        if samples.len() < k {
            return Err(Error::InsufficientSamples { author: author.to_string(), have: samples.len(), need: k });
        }
    }

    let problems: BTreeSet<&str> = corpus.samples.iter().map(|s| s.problem_id.as_str()).collect();
    let aligned = problems.len() == k
        && by_author.values().all(|samples| {
            let own: BTreeSet<&str> = samples.iter().map(|s| s.problem_id.as_str()).collect();
            samples.len() == k && own.len() == k
        });

    let mut assignment = BTreeMap::new();
    if aligned {
        let index: BTreeMap<&str, usize> = problems.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        for s in &corpus.samples {
            assignment.insert(s.sample_id.clone(), index[s.problem_id.as_str()]);
        }
    } else {
        for samples in by_author.values() {
            let mut ids: Vec<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
            ids.sort_unstable();
            for (i, id) in ids.into_iter().enumerate() {
                assignment.insert(id.to_string(), i % k);
            }
        }
    }
    Ok(FoldPlan { k, assignment, problem_aligned: aligned })
}
