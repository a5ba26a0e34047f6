use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("missing artifact {path} (sample {sample_id})")]
    MissingArtifact { sample_id: String, path: PathBuf },
    #[error("empty artifact {path} (sample {sample_id})")]
    EmptyArtifact { sample_id: String, path: PathBuf },
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error("author {author:?} has {have} samples, {need} folds requested")]
    InsufficientSamples { author: String, have: usize, need: usize },

    #[error("unrecognized listing dialect {0:?}")]
    UnrecognizedDialect(String),
    #[error("listing contains no instruction rows")]
    EmptyListing,
    #[error("malformed listing at line {line}: {reason}")]
    MalformedListing { line: usize, reason: String },
    #[error("malformed cfg: {0}")]
    MalformedCfg(String),

    #[error("tf-idf requested without corpus document frequencies")]
    MissingCorpusStats,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("length mismatch: {left} values vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("corpus contains a single class")]
    SingleClassCorpus,
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("top-n requires 1 <= n <= {classes}, got {n}")]
    BadN { n: usize, classes: usize },
    #[error("threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("rows misaligned: {0}")]
    RowMisalignment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read(path).map(|bytes| String::from_utf8_lossy(&bytes).into_owned()).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
