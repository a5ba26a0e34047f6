//! Entropy-based discretization and information-gain feature selection.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::{escape_field, unescape_field, FeatureFamily, FeatureKey, FeatureMatrix, SparseRow, Vocabulary};

/// Gains at or below this are treated as zero.
pub const DEFAULT_EPSILON: f64 = 1e-12;

const SELECTION_HEADER: &str = "# binstylo-selection/1";

/// Shannon entropy in bits of a class histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn n_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn histogram(labels: &[usize], k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for &l in labels {
        h[l] += 1;
    }
    h
}

fn check_lengths(values: usize, labels: usize) -> Result<()> {
    if values != labels {
        return Err(Error::LengthMismatch { left: values, right: labels });
    }
    Ok(())
}

/// Strictly increasing cut thresholds. A value `v` falls in bin `i` where `i`
/// is the number of thresholds strictly below `v`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutPoints {
    pub thresholds: Vec<f64>,
}

impl CutPoints {
    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn bin(&self, value: f64) -> usize {
        self.thresholds.partition_point(|&t| t < value)
    }

    pub fn apply(&self, values: &[f64]) -> Vec<usize> {
        values.iter().map(|&v| self.bin(v)).collect()
    }
}

/// Fayyad–Irani recursive minimum-entropy splitting with the MDL stopping rule.
pub fn discretize_mdl(values: &[f64], labels: &[usize]) -> Result<CutPoints> {
    check_lengths(values.len(), labels.len())?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(labels[a].cmp(&labels[b])));
    let vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let labs: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let mut thresholds = Vec::new();
    split_range(&vals, &labs, n_classes(labels), &mut thresholds);
    Ok(CutPoints { thresholds })
}

struct Group {
    end: usize,
    /// The class shared by every row of the group, if any.
    pure: Option<usize>,
}

fn groups(vals: &[f64], labels: &[usize]) -> Vec<Group> {
    let mut out: Vec<Group> = Vec::new();
    for i in 0..vals.len() {
        match out.last_mut() {
            Some(g) if vals[i] == vals[i - 1] => {
                g.end = i + 1;
                if g.pure != Some(labels[i]) {
                    g.pure = None;
                }
            }
            _ => out.push(Group { end: i + 1, pure: Some(labels[i]) }),
        }
    }
    out
}

fn present(counts: &[usize]) -> usize {
    counts.iter().filter(|&&c| c > 0).count()
}

fn log2_three_pow_minus_two(c: usize) -> f64 {
    if c <= 30 {
        (3f64.powi(c as i32) - 2.0).log2()
    } else {
        c as f64 * 3f64.log2()
    }
}

fn split_range(vals: &[f64], labels: &[usize], k: usize, out: &mut Vec<f64>) {
    let n = vals.len();
    if n < 2 {
        return;
    }
    let total = histogram(labels, k);
    let h = entropy(&total);
    if h == 0.0 {
        return;
    }
    let gs = groups(vals, labels);
    let mut left = vec![0; k];
    let mut start = 0;
    // (weighted entropy, split index, left counts)
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for w in gs.windows(2) {
        for &l in &labels[start..w[0].end] {
            left[l] += 1;
        }
        start = w[0].end;
        if let (Some(a), Some(b)) = (w[0].pure, w[1].pure) {
            if a == b {
                continue;
            }
        }
        let nl = w[0].end;
        let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let e = (nl as f64 * entropy(&left) + (n - nl) as f64 * entropy(&right)) / n as f64;
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, nl, left.clone()));
        }
    }
    let Some((e, at, left)) = best else { return };
    let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
    let (h1, h2) = (entropy(&left), entropy(&right));
    let (c, c1, c2) = (present(&total) as f64, present(&left) as f64, present(&right) as f64);
    let delta = log2_three_pow_minus_two(present(&total)) - (c * h - c1 * h1 - c2 * h2);
    let gain = h - e;
    if gain <= (((n - 1) as f64).log2() + delta) / n as f64 {
        return;
    }
    split_range(&vals[..at], &labels[..at], k, out);
    out.push((vals[at - 1] + vals[at]) / 2.0);
    split_range(&vals[at..], &labels[at..], k, out);
}

/// `H(labels) - Σ_v p(v) H(labels | v)` in bits, treating each distinct value
/// of `column` as one bin.
pub fn information_gain(column: &[f64], labels: &[usize]) -> Result<f64> {
    check_lengths(column.len(), labels.len())?;
    let k = n_classes(labels);
    let h = entropy(&histogram(labels, k));
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let n = column.len() as f64;
    let mut conditional = 0.0;
    let mut counts = vec![0; k];
    let mut size = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        counts[labels[i]] += 1;
        size += 1;
        let last = order.get(pos + 1).is_none_or(|&j| column[j] != column[i]);
        if last {
            conditional += size as f64 / n * entropy(&counts);
            counts.iter_mut().for_each(|c| *c = 0);
            size = 0;
        }
    }
    Ok((h - conditional).clamp(0.0, h))
}

/// Discretizes `values` with [`discretize_mdl`] and returns the gain of the bins.
pub fn column_gain(values: &[f64], labels: &[usize]) -> Result<f64> {
    let cuts = discretize_mdl(values, labels)?;
    if cuts.is_empty() {
        return Ok(0.0);
    }
    let bins: Vec<f64> = cuts.apply(values).into_iter().map(|b| b as f64).collect();
    information_gain(&bins, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedFeature {
    /// Column id in the matrix the selection was computed on.
    pub column: usize,
    pub key: FeatureKey,
    pub gain: f64,
}

/// Kept features, ordered by gain descending then column ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    pub selected: Vec<SelectedFeature>,
    pub epsilon: f64,
    /// [`FeatureMatrix::content_hash`] of the source matrix.
    pub corpus_hash: String,
}

impl FeatureSelection {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// The selected keys as a vocabulary in `(family, payload)` order.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_keys(self.selected.iter().map(|s| s.key.clone()))
    }

    /// Re-expresses `matrix` over [`vocabulary`](Self::vocabulary). Keys unknown
    /// to `matrix` become all-zero columns.
    pub fn apply(&self, matrix: &FeatureMatrix) -> FeatureMatrix {
        let vocabulary = self.vocabulary();
        let remap: Vec<Option<usize>> = matrix.vocabulary.keys().iter().map(|k| vocabulary.id(k)).collect();
        let rows = matrix
            .rows
            .iter()
            .map(|row| {
                let mut r: SparseRow = row.iter().filter_map(|&(c, v)| remap[c].map(|n| (n, v))).collect();
                r.sort_unstable_by_key(|e| e.0);
                r
            })
            .collect();
        FeatureMatrix { row_ids: matrix.row_ids.clone(), labels: matrix.labels.clone(), rows, vocabulary }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SELECTION_HEADER}");
        let _ = writeln!(out, "# epsilon\t{:e}", self.epsilon);
        let _ = writeln!(out, "# corpus_hash\t{}", self.corpus_hash);
        for s in &self.selected {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", s.column, s.key.family, escape_field(&s.key.payload), s.gain);
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut selected: Vec<SelectedFeature> = Vec::new();
        let mut epsilon = DEFAULT_EPSILON;
        let mut corpus_hash = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let bad = |reason: String| Error::Parse { path: origin.to_path_buf(), line: lineno + 1, reason };
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# ") {
                match meta.split_once('\t') {
                    Some(("epsilon", v)) => epsilon = v.parse().map_err(|_| bad(format!("bad epsilon {v:?}")))?,
                    Some(("corpus_hash", v)) => corpus_hash = v.to_string(),
                    _ => {}
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.splitn(4, '\t').collect();
            let [col, family, payload, gain] = f[..] else {
                return Err(bad("expected col<TAB>family<TAB>payload<TAB>gain".into()));
            };
            let column: usize = col.parse().map_err(|_| bad(format!("bad column id {col:?}")))?;
            let family: FeatureFamily = family.parse().map_err(bad)?;
            let gain: f64 = gain.parse().map_err(|_| bad(format!("bad gain {gain:?}")))?;
            if !(gain.is_finite() && gain > 0.0) {
                return Err(bad(format!("gain must be positive, got {gain}")));
            }
            let entry = SelectedFeature { column, key: FeatureKey::new(family, unescape_field(payload)), gain };
            if let Some(prev) = selected.last() {
                let ordered = prev.gain > entry.gain || (prev.gain == entry.gain && prev.column < entry.column);
                if !ordered {
                    return Err(bad("entries not sorted by gain descending, column ascending".into()));
                }
            }
            selected.push(entry);
        }
        let sel = FeatureSelection { selected, epsilon, corpus_hash };
        Vocabulary::from_ordered(sel.selected.iter().map(|s| s.key.clone()).collect())?;
        Ok(sel)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, path)
    }
}

/// Per-column MDL discretization and information gain; keeps columns whose
/// gain exceeds [`DEFAULT_EPSILON`].
pub fn select_nonzero(matrix: &FeatureMatrix) -> Result<FeatureSelection> {
    select_nonzero_with(matrix, DEFAULT_EPSILON)
}

pub fn select_nonzero_with(matrix: &FeatureMatrix, epsilon: f64) -> Result<FeatureSelection> {
    if matrix.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (classes, labels) = matrix.label_indices();
    if classes.len() < 2 {
        return Err(Error::SingleClassCorpus);
    }
    let gains = column_gains(matrix, &labels)?;
    let mut selected: Vec<SelectedFeature> = gains
        .into_iter()
        .enumerate()
        .filter(|&(_, g)| g > epsilon)
        .map(|(column, gain)| SelectedFeature {
            column,
            key: matrix.vocabulary.key(column).expect("column in range").clone(),
            gain,
        })
        .collect();
    selected.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.column.cmp(&b.column)));
    Ok(FeatureSelection { selected, epsilon, corpus_hash: matrix.content_hash() })
}

/// Discretized information gain of every column of `matrix`.
pub fn column_gains(matrix: &FeatureMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_lengths(matrix.n_rows(), labels.len())?;
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.n_cols()];
    for (r, row) in matrix.rows.iter().enumerate() {
        for &(c, v) in row {
            columns[c].push((r, v));
        }
    }
    let n = matrix.n_rows();
    columns
        .par_iter()
        .map_init(
            || vec![0.0; n],
            |values, entries| {
                if entries.is_empty() {
                    return Ok(0.0);
                }
                values.iter_mut().for_each(|v| *v = 0.0);
                for &(r, v) in entries {
                    values[r] = v;
                }
                column_gain(values, labels)
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_of_balanced_pair_is_one_bit() {
        assert_eq!(entropy(&[3, 3]), 1.0);
        assert_eq!(entropy(&[5, 0]), 0.0);
        assert_eq!(entropy(&[]), 0.0);
    }

    #[test]
    fn separating_column_gets_one_cut() {
        let cuts = discretize_mdl(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(cuts.thresholds, vec![0.5]);
    }

    #[test]
    fn constant_column_gets_no_cut() {
        let cuts = discretize_mdl(&[2.0; 8], &[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        assert!(cuts.is_empty());
    }

    #[test]
    fn three_clusters_get_two_cuts() {
        let values: Vec<f64> = (0..30).map(|i| (i / 10) as f64 * 10.0 + (i % 10) as f64 * 0.1).collect();
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let cuts = discretize_mdl(&values, &labels).unwrap();
        assert_eq!(cuts.len(), 2);
        assert!(cuts.thresholds[0] > 0.9 && cuts.thresholds[0] < 10.0);
        assert!(cuts.thresholds[1] > 10.9 && cuts.thresholds[1] < 20.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(discretize_mdl(&[1.0], &[0, 1]), Err(Error::LengthMismatch { left: 1, right: 2 })));
        assert!(matches!(information_gain(&[1.0, 2.0], &[0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(information_gain(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(information_gain(&[4.0; 4], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(information_gain(&[0.0, 0.0, 1.0, 1.0], &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn bins_include_threshold_on_left() {
        let c = CutPoints { thresholds: vec![0.5, 2.0] };
        assert_eq!(c.apply(&[0.0, 0.5, 0.6, 2.0, 3.0]), vec![0, 0, 1, 1, 2]);
    }

    fn matrix(cols: &[&[f64]], labels: &[&str]) -> FeatureMatrix {
        let keys: Vec<FeatureKey> =
            (0..cols.len()).map(|i| FeatureKey::new(FeatureFamily::AsmUni, format!("c{i:02}"))).collect();
        let rows = (0..labels.len())
            .map(|r| cols.iter().enumerate().filter(|(_, c)| c[r] != 0.0).map(|(i, c)| (i, c[r])).collect())
            .collect();
        FeatureMatrix {
            row_ids: (0..labels.len()).map(|i| format!("s{i}")).collect(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            rows,
            vocabulary: Vocabulary::from_ordered(keys).unwrap(),
        }
    }

    #[test]
    fn selects_exactly_the_label_column() {
        let labels = ["a", "a", "a", "a", "b", "b", "b", "b"];
        let m = matrix(
            &[&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0], &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], &[3.0; 8]],
            &labels,
        );
        let sel = select_nonzero(&m).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel.selected[0].column, 1);
        assert_eq!(sel.selected[0].gain, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let m = matrix(&[&[1.0, 2.0]], &["a", "a"]);
        assert!(matches!(select_nonzero(&m), Err(Error::SingleClassCorpus)));
    }

    #[test]
    fn selection_file_round_trip() {
        let labels = ["a", "a", "b", "b", "c", "c"];
        let m = matrix(
            &[&[0.0, 0.0, 1.0, 1.0, 2.0, 2.0], &[0.0, 0.0, 0.0, 0.0, 5.0, 5.0], &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]],
            &labels,
        );
        let sel = select_nonzero(&m).unwrap();
        assert!(!sel.is_empty());
        let back = FeatureSelection::from_text(&sel.to_text(), Path::new("sel.tsv")).unwrap();
        assert_eq!(back, sel);
    }

    #[test]
    fn unsorted_selection_file_rejected() {
        let text = "0\tasm_uni\ta\t0.5\n1\tasm_uni\tb\t0.9\n";
        assert!(FeatureSelection::from_text(text, Path::new("x")).is_err());
        let tie = "3\tasm_uni\ta\t0.5\n1\tasm_uni\tb\t0.5\n";
        assert!(FeatureSelection::from_text(tie, Path::new("x")).is_err());
        let ok = "1\tasm_uni\ta\t0.5\n3\tasm_uni\tb\t0.5\n";
        assert!(FeatureSelection::from_text(ok, Path::new("x")).is_ok());
    }

    #[test]
    fn apply_reindexes_by_key() {
        let labels = ["a", "a", "b", "b"];
        let m = matrix(&[&[0.0, 0.0, 1.0, 1.0], &[9.0, 9.0, 9.0, 9.0], &[7.0, 7.0, 0.0, 0.0]], &labels);
        let sel = select_nonzero(&m).unwrap();
        let applied = sel.apply(&m);
        assert_eq!(applied.n_cols(), 2);
        assert_eq!(applied.vocabulary.keys()[0].payload, "c00");
        assert_eq!(applied.rows[2], vec![(0, 1.0)]);
        assert_eq!(applied.rows[0], vec![(1, 7.0)]);
    }

    proptest! {
        #[test]
        fn gain_is_bounded_and_permutation_invariant(
            data in prop::collection::vec((0u8..6, 0usize..5), 1..40),
            rot in 0usize..40,
        ) {
            let column: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<usize> = data.iter().map(|d| d.1).collect();
            let ig = information_gain(&column, &labels).unwrap();
            let h = entropy(&histogram(&labels, n_classes(&labels)));
            prop_assert!((0.0..=h).contains(&ig));
            let r = rot % column.len();
            let mut c2 = column.clone();
            let mut l2 = labels.clone();
            c2.rotate_left(r);
            l2.rotate_left(r);
            prop_assert!((information_gain(&c2, &l2).unwrap() - ig).abs() < 1e-12);
            // Bijective bin relabeling.
            let relabeled: Vec<f64> = column.iter().map(|v| 100.0 - 3.0 * v).collect();
            prop_assert!((information_gain(&relabeled, &labels).unwrap() - ig).abs() < 1e-12);
        }

        #[test]
        fn cut_points_strictly_increase(
            data in prop::collection::vec((0u8..20, 0usize..3), 1..60),
        ) {
            let values: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<usize> = data.iter().map(|d| d.1).collect();
            let cuts = discretize_mdl(&values, &labels).unwrap();
            prop_assert!(cuts.thresholds.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
