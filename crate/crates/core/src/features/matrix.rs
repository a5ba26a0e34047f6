use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{read_to_string, write_file, Error, Result};

use super::{FeatureCounts, FeatureFamily, FeatureKey};

/// Bijection between feature keys and dense column ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    keys: Vec<FeatureKey>,
    index: HashMap<FeatureKey, usize>,
}

impl Vocabulary {
    /// Columns numbered in the given order. Duplicate keys are rejected.
    pub fn from_ordered(keys: Vec<FeatureKey>) -> Result<Self> {
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::VocabularyMismatch(format!("duplicate key {k}")));
            }
        }
        Ok(Vocabulary { keys, index })
    }

    /// Columns numbered in `(family, payload)` order.
    pub fn from_keys(keys: impl IntoIterator<Item = FeatureKey>) -> Self {
        let sorted: BTreeSet<FeatureKey> = keys.into_iter().collect();
        Self::from_ordered(sorted.into_iter().collect()).expect("deduplicated")
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn id(&self, key: &FeatureKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: usize) -> Option<&FeatureKey> {
        self.keys.get(id)
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    /// Hex SHA-256 over the tab-separated vocabulary text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.keys.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}\t{}", k.family, escape_field(&k.payload));
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut keys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::Parse { path: origin.to_path_buf(), line: lineno + 1, reason };
            let mut fields = line.splitn(3, '\t');
            let (Some(col), Some(family), Some(payload)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad("expected col<TAB>family<TAB>payload".into()));
            };
            let col: usize = col.parse().map_err(|_| bad(format!("bad column id {col:?}")))?;
            if col != keys.len() {
                return Err(bad(format!("column {col} out of sequence")));
            }
            let family: FeatureFamily = family.parse().map_err(bad)?;
            keys.push(FeatureKey::new(family, unescape_field(payload)));
        }
        Self::from_ordered(keys)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tsv(&read_to_string(path)?, path)
    }
}

pub(crate) fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Column-sorted `(column, value)` pairs with no stored zeros.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<SparseRow>,
    pub vocabulary: Vocabulary,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let r = &self.rows[row];
        r.binary_search_by_key(&col, |e| e.0).map(|i| r[i].1).unwrap_or(0.0)
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        self.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Labels mapped to indices into [`classes`](Self::classes).
    pub fn label_indices(&self) -> (Vec<String>, Vec<usize>) {
        let classes = self.classes();
        let idx: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let labels = self.labels.iter().map(|l| idx[l.as_str()]).collect();
        (classes, labels)
    }

    /// Dense column-major copy, `columns[c][r]`.
    pub fn dense_columns(&self) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![0.0; self.n_rows()]; self.n_cols()];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                cols[c][r] = v;
            }
        }
        cols
    }

    /// Rows at `indices`, same vocabulary.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Keeps `columns` (ids of this matrix), renumbered in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureMatrix> {
        let remap: HashMap<usize, usize> = columns.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let keys = columns
            .iter()
            .map(|&c| {
                self.vocabulary
                    .key(c)
                    .cloned()
                    .ok_or_else(|| Error::VocabularyMismatch(format!("column {c} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut r: SparseRow = row.iter().filter_map(|&(c, v)| remap.get(&c).map(|&n| (n, v))).collect();
                r.sort_unstable_by_key(|e| e.0);
                r
            })
            .collect();
        Ok(FeatureMatrix {
            row_ids: self.row_ids.clone(),
            labels: self.labels.clone(),
            rows,
            vocabulary: Vocabulary::from_ordered(keys)?,
        })
    }

    /// Hex SHA-256 over vocabulary, row ids, labels and triplets.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.vocabulary.to_tsv().as_bytes());
        for (id, label) in self.row_ids.iter().zip(&self.labels) {
            h.update(format!("{}\t{}\n", escape_field(id), escape_field(label)).as_bytes());
        }
        h.update(self.to_triplets().as_bytes());
        hex::encode(h.finalize())
    }

    /// Sparse triplets `row col value`, sorted by (row, col).
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let _ = writeln!(out, "{r} {c} {v}");
            }
        }
        out
    }

    /// Writes `<stem>.triplets`, `<stem>.vocab.tsv` and `<stem>.rows.tsv`
    /// (`row<TAB>sample_id<TAB>label`) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}.triplets")), self.to_triplets())?;
        self.vocabulary.write(&dir.join(format!("{stem}.vocab.tsv")))?;
        let mut rows = String::new();
        for (i, (id, label)) in self.row_ids.iter().zip(&self.labels).enumerate() {
            let _ = writeln!(rows, "{i}\t{}\t{}", escape_field(id), escape_field(label));
        }
        write_file(&dir.join(format!("{stem}.rows.tsv")), rows)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<FeatureMatrix> {
        let vocabulary = Vocabulary::read(&dir.join(format!("{stem}.vocab.tsv")))?;
        let rows_path = dir.join(format!("{stem}.rows.tsv"));
        let mut row_ids = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in read_to_string(&rows_path)?.lines().enumerate() {
            let f: Vec<&str> = line.splitn(3, '\t').collect();
            if f.len() != 3 || f[0].parse() != Ok(row_ids.len()) {
                return Err(Error::Parse { path: rows_path, line: lineno + 1, reason: "bad row entry".into() });
            }
            row_ids.push(unescape_field(f[1]));
            labels.push(unescape_field(f[2]));
        }
        let trip_path = dir.join(format!("{stem}.triplets"));
        let mut rows: Vec<SparseRow> = vec![Vec::new(); row_ids.len()];
        for (lineno, line) in read_to_string(&trip_path)?.lines().enumerate() {
            let bad = || Error::Parse { path: trip_path.clone(), line: lineno + 1, reason: "bad triplet".into() };
            let mut it = line.split(' ');
            let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(bad());
            };
            let (r, c, v): (usize, usize, f64) =
                (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?);
            if r >= rows.len() || c >= vocabulary.len() || !v.is_finite() || v == 0.0 {
                return Err(bad());
            }
            if rows[r].last().is_some_and(|&(pc, _)| pc >= c) {
                return Err(bad());
            }
            rows[r].push((c, v));
        }
        Ok(FeatureMatrix { row_ids, labels, rows, vocabulary })
    }
}

/// Builds the sample-by-feature matrix. Without `frozen_vocab` columns are all
/// observed keys in `(family, payload)` order; with it, unseen keys are
/// dropped and missing ones are zero.
pub fn assemble_vectors(
    per_sample: &[(String, FeatureCounts)],
    labels: &BTreeMap<String, String>,
    frozen_vocab: Option<&Vocabulary>,
) -> Result<(FeatureMatrix, Vocabulary)> {
    if per_sample.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocabulary = match frozen_vocab {
        Some(v) => v.clone(),
        None => Vocabulary::from_keys(per_sample.iter().flat_map(|(_, c)| c.keys().cloned())),
    };
    let mut row_ids = Vec::with_capacity(per_sample.len());
    let mut row_labels = Vec::with_capacity(per_sample.len());
    let mut rows = Vec::with_capacity(per_sample.len());
    for (id, counts) in per_sample {
        let label = labels.get(id).ok_or_else(|| Error::InvalidArgument(format!("no label for sample {id:?}")))?;
        let mut row: SparseRow = counts
            .iter()
            .filter(|(_, v)| v.is_finite() && *v != 0.0)
            .filter_map(|(k, v)| vocabulary.id(k).map(|c| (c, v)))
            .collect();
        row.sort_unstable_by_key(|e| e.0);
        row_ids.push(id.clone());
        row_labels.push(label.clone());
        rows.push(row);
    }
    let matrix = FeatureMatrix { row_ids, labels: row_labels, rows, vocabulary: vocabulary.clone() };
    Ok((matrix, vocabulary))
}
