//! Labeled datasets: CSV ingestion, min-max scaling fitted on training data,
//! stratified splitting, and grid-search cross-validation.

use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub points: PointSet,
    /// Contiguous class ids, 0-based, aligned with `points` rows.
    pub labels: Vec<usize>,
    /// Class names in id order (lexicographic over the source labels).
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        points: PointSet,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
                context: "label count",
            });
        }
        if class_names.is_empty() {
            return Err(Error::EmptyInput("class names"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid_config(format!(
                "label id {bad} outside {} classes",
                class_names.len()
            )));
        }
        Ok(LabeledDataset {
            name: name.into(),
            points,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Row indices belonging to each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// The rows of one class as their own point set.
    pub fn class_points(&self, class: usize) -> Result<PointSet> {
        let idx: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyInput("class has no rows"));
        }
        self.points.select_rows(&idx)
    }

    pub fn subset(&self, rows: &[usize]) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.name.clone(),
            self.points.select_rows(rows)?,
            rows.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )
    }

    /// Replaces the points, keeping labels and names (used after scaling).
    pub fn with_points(&self, points: PointSet) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.name.clone(),
            points,
            self.labels.clone(),
            self.class_names.clone(),
        )
    }
}

/// Loads a CSV of numeric features plus one label column (default: the last
/// column). Labels map to contiguous ids in lexicographic order.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<usize>,
    has_header: bool,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 1 + usize::from(has_header);
        let ncols = record.len();
        if ncols < 2 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("need at least 2 columns, got {ncols}"),
            });
        }
        let label_idx = label_column.unwrap_or(ncols - 1);
        if label_idx >= ncols {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("label column {label_idx} outside {ncols} columns"),
            });
        }
        let mut row = Vec::with_capacity(ncols - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(field.to_string());
            } else {
                row.push(field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("column {col}: not a number: {field:?}"),
                })?);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("csv has no data rows"));
    }
    let mut class_names: Vec<String> = raw_labels.clone();
    class_names.sort();
    class_names.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| class_names.binary_search(l).expect("label seen above"))
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    LabeledDataset::new(name, PointSet::from_rows(&rows)?, labels, class_names)
}

/// Per-column min-max ranges mapping features into [-1, 1]. Fit on training
/// data once, then applied to every split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalingRecord {
    pub fn fit(points: &PointSet) -> ScalingRecord {
        let m = points.matrix();
        let (mins, maxs) = (0..points.dim())
            .map(|j| {
                let col = m.column(j);
                (col.min(), col.max())
            })
            .unzip();
        ScalingRecord { mins, maxs }
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// Constant columns map to 0 instead of dividing by a zero range.
    pub fn scale(&self, points: &PointSet) -> Result<PointSet> {
        self.check_dim(points)?;
        let mut m = points.matrix().clone();
        for j in 0..self.dim() {
            let (lo, hi) = (self.mins[j], self.maxs[j]);
            for i in 0..m.nrows() {
                m[(i, j)] = if hi > lo {
                    2.0 * (m[(i, j)] - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                };
            }
        }
        PointSet::new(m)
    }

    pub fn unscale(&self, points: &PointSet) -> Result<PointSet> {
        self.check_dim(points)?;
        let mut m = points.matrix().clone();
        for j in 0..self.dim() {
            let (lo, hi) = (self.mins[j], self.maxs[j]);
            for i in 0..m.nrows() {
                m[(i, j)] = if hi > lo {
                    lo + (m[(i, j)] + 1.0) * (hi - lo) / 2.0
                } else {
                    lo
                };
            }
        }
        PointSet::new(m)
    }

    fn check_dim(&self, points: &PointSet) -> Result<()> {
        if points.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.dim(),
                context: "scaling record",
            });
        }
        Ok(())
    }
}

/// Stratified split: each class contributes `round(fraction * n_class)` rows
/// to the training side, shuffled deterministically per seed.
pub fn split_train_test(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::invalid_config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for mut idx in ds.class_indices() {
        if idx.len() < 2 {
            return Err(Error::invalid_config(format!(
                "class with {} row(s) cannot be split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let raw = (idx.len() as f64 * train_fraction).round() as usize;
        let n_train = raw.clamp(1, idx.len() - 1);
        train_rows.extend_from_slice(&idx[..n_train]);
        test_rows.extend_from_slice(&idx[n_train..]);
    }
    // Dataset order within each side follows the original row order, so the
    // split is stable under relabeling of classes.
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((ds.subset(&train_rows)?, ds.subset(&test_rows)?))
}

/// One grid point for model selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    pub epsilon: f64,
    pub lambda: f64,
}

/// Deterministic stratified folds: within each class, rows are dealt
/// round-robin in dataset order.
pub fn stratified_folds(ds: &LabeledDataset, folds: usize) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid_config(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut assignment = vec![Vec::new(); folds];
    for idx in ds.class_indices() {
        for (pos, row) in idx.into_iter().enumerate() {
            assignment[pos % folds].push(row);
        }
    }
    for f in &mut assignment {
        f.sort_unstable();
    }
    if assignment.iter().any(|f| f.is_empty()) {
        return Err(Error::invalid_config(
            "a fold came out empty; fewer rows than folds".to_string(),
        ));
    }
    Ok(assignment)
}

/// Exhaustive grid search maximizing the mean validation score across
/// stratified folds. Ties prefer the smallest epsilon, then the smallest
/// lambda.
pub fn cross_validate<F>(
    train: &LabeledDataset,
    grid: &[CvParams],
    folds: usize,
    mut eval: F,
) -> Result<CvParams>
where
    F: FnMut(&LabeledDataset, &LabeledDataset, CvParams) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::EmptyInput("parameter grid"));
    }
    let fold_rows = stratified_folds(train, folds)?;
    let all_rows: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, CvParams)> = None;
    for &params in grid {
        let mut total = 0.0;
        for held_out in &fold_rows {
            let fit_rows: Vec<usize> = all_rows
                .iter()
                .copied()
                .filter(|r| !held_out.contains(r))
                .collect();
            let score = eval(&train.subset(&fit_rows)?, &train.subset(held_out)?, params)?;
            if !score.is_finite() {
                return Err(Error::NonFinite("cross-validation score"));
            }
            total += score;
        }
        let mean = total / folds as f64;
        let better = match best {
            None => true,
            Some((best_score, best_params)) => {
                mean > best_score
                    || (mean == best_score
                        && (params.epsilon < best_params.epsilon
                            || (params.epsilon == best_params.epsilon
                                && params.lambda < best_params.lambda)))
            }
        };
        if better {
            best = Some((mean, params));
        }
    }
    Ok(best.expect("nonempty grid").1)
}
