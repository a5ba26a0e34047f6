//! Random-forest regression with variance-reduction splits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::SparseRow;

use super::tree::{bootstrap, midpoint, row_value, ColumnDraw, Columns, Split, MIN_SPLIT_SCORE};
use super::ForestConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum RegressionNode {
    Internal { feature: usize, threshold: f64, left: Box<RegressionNode>, right: Box<RegressionNode> },
    Leaf { value: f64 },
}

impl RegressionNode {
    pub fn predict(&self, row: &SparseRow) -> f64 {
        let mut node = self;
        loop {
            match node {
                RegressionNode::Internal { feature, threshold, left, right } => {
                    node = if row_value(row, *feature) <= *threshold { left } else { right };
                }
                RegressionNode::Leaf { value } => return *value,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    pub trees: Vec<RegressionNode>,
    pub n_features: usize,
    pub split_candidates: usize,
}

impl RegressionForest {
    /// Mean of the per-tree predictions.
    pub fn predict(&self, row: &SparseRow) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Same bootstrap, candidate-draw and seeding rules as classification; nodes
/// stop when targets are constant or rows fall below `min_samples_split`.
pub fn train_regressor(
    rows: &[SparseRow],
    n_features: usize,
    targets: &[f64],
    config: &ForestConfig,
) -> Result<RegressionForest> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch { left: rows.len(), right: targets.len() });
    }
    if rows.len() < 2 || n_features == 0 {
        return Err(Error::EmptyMatrix);
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("non-finite regression target".into()));
    }
    let split_candidates = config.resolve_split_candidates(n_features)?;
    let columns = Columns::new(rows, n_features);
    let builder =
        RegTreeBuilder { columns: &columns, targets, split_candidates, min_samples_split: config.min_samples_split };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let sample = bootstrap(&mut rng, rows.len());
            builder.build(sample, &mut rng)
        })
        .collect();
    Ok(RegressionForest { trees, n_features, split_candidates })
}

struct RegTreeBuilder<'a> {
    columns: &'a Columns,
    targets: &'a [f64],
    split_candidates: usize,
    min_samples_split: usize,
}

impl RegTreeBuilder<'_> {
    fn build(&self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> RegressionNode {
        let mut draw = ColumnDraw::new(self.columns.n_cols());
        let mut scratch = Vec::with_capacity(rows.len());
        self.grow(rows, rng, &mut draw, &mut scratch)
    }

    fn grow(
        &self,
        rows: Vec<usize>,
        rng: &mut ChaCha8Rng,
        draw: &mut ColumnDraw,
        scratch: &mut Vec<(f64, f64)>,
    ) -> RegressionNode {
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let mean = sum / n;
        let first = self.targets[rows[0]];
        if rows.len() < self.min_samples_split || rows.iter().all(|&r| self.targets[r] == first) {
            return RegressionNode::Leaf { value: mean };
        }
        let sse: f64 = rows.iter().map(|&r| (self.targets[r] - mean).powi(2)).sum();
        // Relative tolerance keeps rounding noise from looking like a reduction.
        let min_score = MIN_SPLIT_SCORE.max(sse * 1e-12);
        let mut best: Option<Split> = None;
        draw.draw(rng, self.split_candidates, |col| {
            if let Some(s) = self.best_threshold(col, &rows, sum, sse, scratch) {
                if best.is_none_or(|b| s.better_than(&b)) {
                    best = Some(s);
                }
            }
            best.is_some_and(|b| b.score > min_score)
        });
        let Some(split) = best.filter(|b| b.score > min_score) else {
            return RegressionNode::Leaf { value: mean };
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.columns.value(split.feature, r) <= split.threshold);
        drop(rows);
        let left = self.grow(left, rng, draw, scratch);
        let right = self.grow(right, rng, draw, scratch);
        RegressionNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Best midpoint threshold by reduction of the sum of squared errors.
    fn best_threshold(
        &self,
        col: usize,
        rows: &[usize],
        sum: f64,
        sse: f64,
        scratch: &mut Vec<(f64, f64)>,
    ) -> Option<Split> {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (self.columns.value(col, r), self.targets[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        if scratch[0].0 == scratch[scratch.len() - 1].0 {
            return None;
        }
        let n = scratch.len();
        let total_sq: f64 = scratch.iter().map(|e| e.1 * e.1).sum();
        let (mut ls, mut lsq) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let (v, y) = scratch[i];
            ls += y;
            lsq += y * y;
            let next = scratch[i + 1].0;
            if next == v {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n as f64 - nl;
            let rs = sum - ls;
            let left_sse = (lsq - ls * ls / nl).max(0.0);
            let right_sse = ((total_sq - lsq) - rs * rs / nr).max(0.0);
            let children = left_sse + right_sse;
            if best.is_none_or(|b| children < b.0) {
                best = Some((children, midpoint(v, next)));
            }
        }
        best.map(|(children, threshold)| Split { score: sse - children, feature: col, threshold })
    }
}
