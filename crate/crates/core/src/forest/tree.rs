use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseRow;
use crate::infogain::entropy;

/// Splits whose score does not exceed this are not taken.
pub(super) const MIN_SPLIT_SCORE: f64 = 1e-12;

/// Above this many cells columns are kept sparse.
const DENSE_CELL_LIMIT: usize = 1 << 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { counts: Vec<usize> },
}

impl TreeNode {
    /// The leaf reached by `row`; `value <= threshold` goes left.
    pub fn leaf(&self, row: &SparseRow) -> &[usize] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if row_value(row, *feature) <= *threshold { left } else { right };
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lowest class index.
    pub fn vote(&self, row: &SparseRow) -> usize {
        argmax(self.leaf(row))
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(self, 0)];
        while let Some((n, d)) = stack.pop() {
            max = max.max(d);
            if let TreeNode::Internal { left, right, .. } = n {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        max
    }

    pub(super) fn for_each(&self, f: &mut impl FnMut(&TreeNode)) {
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            f(n);
            if let TreeNode::Internal { left, right, .. } = n {
                stack.push(right);
                stack.push(left);
            }
        }
    }
}

pub(super) fn row_value(row: &SparseRow, col: usize) -> f64 {
    row.binary_search_by_key(&col, |e| e.0).map(|i| row[i].1).unwrap_or(0.0)
}

pub(super) fn argmax(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Column-major view of training rows.
pub(super) enum Columns {
    Dense(Vec<Vec<f64>>),
    Sparse(Vec<Vec<(usize, f64)>>),
}

impl Columns {
    pub(super) fn new(rows: &[SparseRow], n_cols: usize) -> Self {
        if rows.len().saturating_mul(n_cols) <= DENSE_CELL_LIMIT {
            let mut cols = vec![vec![0.0; rows.len()]; n_cols];
            for (r, row) in rows.iter().enumerate() {
                for &(c, v) in row {
                    cols[c][r] = v;
                }
            }
            Columns::Dense(cols)
        } else {
            let mut cols = vec![Vec::new(); n_cols];
            for (r, row) in rows.iter().enumerate() {
                for &(c, v) in row {
                    cols[c].push((r, v));
                }
            }
            Columns::Sparse(cols)
        }
    }

    pub(super) fn n_cols(&self) -> usize {
        match self {
            Columns::Dense(c) => c.len(),
            Columns::Sparse(c) => c.len(),
        }
    }

    pub(super) fn value(&self, col: usize, row: usize) -> f64 {
        match self {
            Columns::Dense(c) => c[col][row],
            Columns::Sparse(c) => {
                let e = &c[col];
                e.binary_search_by_key(&row, |x| x.0).map(|i| e[i].1).unwrap_or(0.0)
            }
        }
    }
}

/// Draws columns without replacement from a per-tree permutation, in place.
pub(super) struct ColumnDraw {
    perm: Vec<usize>,
}

impl ColumnDraw {
    pub(super) fn new(n_cols: usize) -> Self {
        ColumnDraw { perm: (0..n_cols).collect() }
    }

    /// Calls `eval` on `k` uniformly drawn distinct columns, then on further
    /// draws until `eval` reports success or every column has been tried.
    pub(super) fn draw(&mut self, rng: &mut ChaCha8Rng, k: usize, mut eval: impl FnMut(usize) -> bool) {
        let m = self.perm.len();
        let mut found = false;
        for i in 0..m {
            if i >= k && found {
                break;
            }
            let j = rng.gen_range(i..m);
            self.perm.swap(i, j);
            found = eval(self.perm[i]);
        }
    }
}

/// A candidate split; `score` is the gain or variance reduction.
#[derive(Debug, Clone, Copy)]
pub(super) struct Split {
    pub score: f64,
    pub feature: usize,
    pub threshold: f64,
}

impl Split {
    /// Higher score wins, then lower column, then lower threshold.
    pub(super) fn better_than(&self, other: &Split) -> bool {
        self.score > other.score
            || (self.score == other.score
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

pub(super) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

pub(super) fn bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

pub(super) struct ClassTreeBuilder<'a> {
    pub columns: &'a Columns,
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub split_candidates: usize,
    pub min_samples_split: usize,
}

impl ClassTreeBuilder<'_> {
    pub(super) fn build(&self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> TreeNode {
        let mut draw = ColumnDraw::new(self.columns.n_cols());
        let mut scratch = Vec::with_capacity(rows.len());
        self.grow(rows, rng, &mut draw, &mut scratch)
    }

    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &r in rows {
            c[self.labels[r]] += 1;
        }
        c
    }

    fn grow(
        &self,
        rows: Vec<usize>,
        rng: &mut ChaCha8Rng,
        draw: &mut ColumnDraw,
        scratch: &mut Vec<(f64, usize)>,
    ) -> TreeNode {
        let counts = self.counts(&rows);
        if rows.len() < self.min_samples_split || counts.iter().filter(|&&c| c > 0).count() <= 1 {
            return TreeNode::Leaf { counts };
        }
        let parent_h = entropy(&counts);
        let mut best: Option<Split> = None;
        draw.draw(rng, self.split_candidates, |col| {
            if let Some(s) = self.best_threshold(col, &rows, &counts, parent_h, scratch) {
                if best.is_none_or(|b| s.better_than(&b)) {
                    best = Some(s);
                }
            }
            best.is_some_and(|b| b.score > MIN_SPLIT_SCORE)
        });
        let Some(split) = best.filter(|b| b.score > MIN_SPLIT_SCORE) else {
            return TreeNode::Leaf { counts };
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.columns.value(split.feature, r) <= split.threshold);
        drop(rows);
        let left = self.grow(left, rng, draw, scratch);
        let right = self.grow(right, rng, draw, scratch);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Best midpoint threshold of `col` over `rows` by information gain.
    fn best_threshold(
        &self,
        col: usize,
        rows: &[usize],
        counts: &[usize],
        parent_h: f64,
        scratch: &mut Vec<(f64, usize)>,
    ) -> Option<Split> {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (self.columns.value(col, r), self.labels[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        if scratch[0].0 == scratch[scratch.len() - 1].0 {
            return None;
        }
        let n = scratch.len();
        let mut left = vec![0; self.n_classes];
        let mut right = counts.to_vec();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let (v, l) = scratch[i];
            left[l] += 1;
            right[l] -= 1;
            let next = scratch[i + 1].0;
            if next == v {
                continue;
            }
            let nl = (i + 1) as f64;
            let e = (nl * entropy(&left) + (n as f64 - nl) * entropy(&right)) / n as f64;
            if best.is_none_or(|b| e < b.0) {
                best = Some((e, midpoint(v, next)));
            }
        }
        best.map(|(e, threshold)| Split { score: parent_h - e, feature: col, threshold })
    }
}
