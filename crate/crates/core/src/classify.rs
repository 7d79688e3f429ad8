//! Baseline classifiers for the experiments: a one-vs-rest linear classifier
//! trained with logistic loss (stand-in for a linear SVM), nearest-neighbor
//! prediction, and Lloyd's k-means with k-means++ seeding.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// One-vs-rest linear model over standardized features. Deterministic: zero
/// initialization, fixed-step full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// Row c holds the weights for class c; the last entry is the bias.
    pub weights: DMatrix<f64>,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub n_classes: usize,
}

pub const LINEAR_GD_STEPS: usize = 300;
pub const LINEAR_GD_RATE: f64 = 0.5;

fn standardize_fit(features: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = features.nrows() as f64;
    let mut means = Vec::with_capacity(features.ncols());
    let mut scales = Vec::with_capacity(features.ncols());
    for j in 0..features.ncols() {
        let col = features.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means.push(mean);
        scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    (means, scales)
}

fn standardize_apply(features: &DMatrix<f64>, means: &[f64], scales: &[f64]) -> DMatrix<f64> {
    let mut out = features.clone();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] = (out[(i, j)] - means[j]) / scales[j];
        }
    }
    out
}

/// Trains one logistic-loss separator per class with L2 penalty `reg`.
pub fn train_linear(
    features: &DMatrix<f64>,
    labels: &[usize],
    reg: f64,
) -> Result<LinearClassifier> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(Error::EmptyInput("feature matrix"));
    }
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
            context: "linear classifier labels",
        });
    }
    if features.iter().any(|v| !v.is_finite()) || !reg.is_finite() || reg < 0.0 {
        return Err(Error::NonFinite("linear classifier inputs"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::invalid_config(
            "linear classifier needs at least 2 classes".to_string(),
        ));
    }
    let (means, scales) = standardize_fit(features);
    let x = standardize_apply(features, &means, &scales);
    let n = x.nrows();
    let d = x.ncols();
    let mut weights = DMatrix::zeros(n_classes, d + 1);
    for class in 0..n_classes {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let mut w: DVector<f64> = DVector::zeros(d + 1);
        for _ in 0..LINEAR_GD_STEPS {
            let mut grad: DVector<f64> = DVector::zeros(d + 1);
            for i in 0..n {
                let mut margin = w[d];
                for j in 0..d {
                    margin += w[j] * x[(i, j)];
                }
                // d/dm log(1 + exp(-y m)) = -y sigmoid(-y m)
                let s = 1.0 / (1.0 + (y[i] * margin).exp());
                let coef = -y[i] * s;
                for j in 0..d {
                    grad[j] += coef * x[(i, j)];
                }
                grad[d] += coef;
            }
            grad /= n as f64;
            for j in 0..d {
                grad[j] += reg * w[j];
            }
            w -= LINEAR_GD_RATE * &grad;
        }
        weights.row_mut(class).copy_from(&w.transpose());
    }
    Ok(LinearClassifier {
        weights,
        feature_means: means,
        feature_scales: scales,
        n_classes,
    })
}

/// Argmax of per-class scores; ties go to the lowest class id.
pub fn predict_linear(model: &LinearClassifier, features: &DMatrix<f64>) -> Result<Vec<usize>> {
    if features.ncols() != model.feature_means.len() {
        return Err(Error::DimensionMismatch {
            expected: model.feature_means.len(),
            got: features.ncols(),
            context: "linear classifier features",
        });
    }
    let x = standardize_apply(features, &model.feature_means, &model.feature_scales);
    let d = x.ncols();
    let mut out = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for class in 0..model.n_classes {
            let mut score = model.weights[(class, d)];
            for j in 0..d {
                score += model.weights[(class, j)] * x[(i, j)];
            }
            if score > best.0 {
                best = (score, class);
            }
        }
        out.push(best.1);
    }
    Ok(out)
}

pub fn accuracy(predicted: &[usize], actual: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    hits as f64 / predicted.len() as f64
}

/// k-nearest-neighbor vote. Neighbors order by (distance, row index), so
/// equidistant neighbors resolve to the lowest index; vote ties resolve to
/// the lowest class id among the tied classes.
pub fn knn_predict(
    train: &PointSet,
    labels: &[usize],
    query: &DVector<f64>,
    k: usize,
) -> Result<usize> {
    if labels.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            got: labels.len(),
            context: "knn labels",
        });
    }
    if k == 0 || k > train.len() {
        return Err(Error::invalid_config(format!(
            "k must be in 1..={}, got {k}",
            train.len()
        )));
    }
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: query.len(),
            context: "knn query",
        });
    }
    let mut order: Vec<(f64, usize)> = (0..train.len())
        .map(|i| ((train.point(i) - query).norm(), i))
        .collect();
    order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut votes = std::collections::BTreeMap::new();
    for &(_, idx) in order.iter().take(k) {
        *votes.entry(labels[idx]).or_insert(0usize) += 1;
    }
    let top = votes.values().copied().max().expect("k >= 1");
    Ok(*votes
        .iter()
        .find(|(_, &count)| count == top)
        .expect("nonempty votes")
        .0)
}

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_MOVE_TOL: f64 = 1e-8;

/// Lloyd's algorithm with k-means++ seeding. Stops after 100 iterations or
/// when no centroid moves more than 1e-8. Empty clusters keep their previous
/// centroid.
pub fn kmeans(points: &PointSet, k: usize, seed: u64) -> Result<PointSet> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid_config(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut centroids: Vec<DVector<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(points.point(first));
    let mut dist_sq: Vec<f64> = (0..n)
        .map(|i| (points.point(i) - &centroids[0]).norm_squared())
        .collect();
    while centroids.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // All remaining points coincide with a centroid; pick any
            // unchosen index deterministically.
            (0..n)
                .find(|&i| centroids.iter().all(|c| (points.point(i) - c).norm() > 0.0))
                .unwrap_or(0)
        };
        let c = points.point(next);
        for i in 0..n {
            dist_sq[i] = dist_sq[i].min((points.point(i) - &c).norm_squared());
        }
        centroids.push(c);
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        for (i, slot) in assignment.iter_mut().enumerate() {
            let p = points.point(i);
            let mut best = (f64::INFINITY, 0usize);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = (&p - centroid).norm_squared();
                if d < best.0 {
                    best = (d, c);
                }
            }
            *slot = best.1;
        }
        let mut moved: f64 = 0.0;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = DVector::zeros(points.dim());
            for &i in &members {
                mean += points.point(i);
            }
            mean /= members.len() as f64;
            moved = moved.max((&mean - &*centroid).norm());
            *centroid = mean;
        }
        if moved < KMEANS_MOVE_TOL {
            break;
        }
    }
    let rows: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    PointSet::from_rows(&rows)
}
