//! Repeated-split evaluation pipelines: feature-based classification with
//! full and degree-restricted feature sets, and nearest-neighbor accuracy of
//! knots versus k-means centroids versus the raw training points. Reports
//! serialize to JSON and render as plain text.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{accuracy, kmeans, knn_predict, predict_linear, train_linear};
use crate::data::{
    cross_validate, split_train_test, stratified_folds, CvParams, LabeledDataset, ScalingRecord,
};
use crate::error::{Error, Result};
use crate::features::{
    features_matrix, restrict_higher_degrees, train_class_models, ClassFeatureModel,
};
use crate::model::{ConfigEcho, KnotAnchor, PursuitConfig, VcaConfig};
use crate::points::PointSet;

/// Settings shared by both experiment pipelines. Each run draws its own
/// train/test split from `base_seed + run` and fits the scaler on the
/// training side only. The two pipelines select hyperparameters differently:
/// classification maximizes held-out accuracy per method, while the neighbor
/// experiment looks for the smallest knot set that stays accurate, so each
/// gets its own grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    /// Folds for the model-selection grid searches.
    pub folds: usize,
    /// Grid for the knot-filtered feature models in classification runs.
    pub knot_epsilon_grid: Vec<f64>,
    pub knot_lambda_grid: Vec<f64>,
    /// Grid for the baseline feature models; there is no knot term, so only
    /// epsilon varies.
    pub vca_epsilon_grid: Vec<f64>,
    /// Grid for the neighbor experiment.
    pub neighbor_epsilon_grid: Vec<f64>,
    pub neighbor_lambda_grid: Vec<f64>,
    /// A candidate is admissible for a class when its held-out coverage
    /// distance comes within this margin (in scaled units) of the best
    /// candidate; the admissible candidate with the fewest knots wins.
    pub neighbor_cover_margin: f64,
    /// Anchor mode for neighbor-experiment fits. Classification always uses
    /// source anchoring.
    pub neighbor_anchor: KnotAnchor,
    /// Knot-side threshold ratio for neighbor fits. A loose knot threshold
    /// stops the cooling loop right after the first knot update, which is
    /// what lets nearby points fall into a shared minimizer and merge.
    pub neighbor_delta_ratio: f64,
    /// Fraction of each class's features kept in the restricted variant.
    pub hd_fraction: f64,
    /// Knot-side threshold as a fraction of epsilon.
    pub delta_ratio: f64,
    pub gamma: f64,
    pub max_degree: usize,
    pub optimizer_max_iters: usize,
    /// L2 penalty of the linear classifier.
    pub linear_reg: f64,
    /// Euclidean tolerance for collapsing coincident knots.
    pub knot_dedup_tol: f64,
}

impl ExperimentConfig {
    pub fn new(base_seed: u64) -> Self {
        ExperimentConfig {
            runs: 10,
            base_seed,
            train_fraction: 0.6,
            folds: 3,
            knot_epsilon_grid: vec![0.1, 0.2, 0.4],
            knot_lambda_grid: vec![0.1, 1.0],
            vca_epsilon_grid: vec![0.1, 0.2, 0.4],
            neighbor_epsilon_grid: vec![0.2, 0.3, 0.4],
            neighbor_lambda_grid: vec![0.01],
            neighbor_cover_margin: 0.05,
            neighbor_anchor: KnotAnchor::Source,
            neighbor_delta_ratio: 0.2,
            hd_fraction: 0.5,
            delta_ratio: 0.01,
            gamma: 0.7,
            max_degree: 6,
            optimizer_max_iters: 200,
            linear_reg: 1e-3,
            knot_dedup_tol: 1e-3,
        }
    }

    /// Grids tuned for the 4-dimensional flower measurements.
    pub fn iris(base_seed: u64) -> Self {
        let mut cfg = Self::new(base_seed);
        cfg.knot_epsilon_grid = vec![0.1, 0.2, 0.3];
        cfg.knot_lambda_grid = vec![0.01, 0.1];
        cfg.vca_epsilon_grid = vec![0.05, 0.1, 0.2];
        cfg.neighbor_epsilon_grid = vec![0.2, 0.25, 0.3, 0.35];
        cfg.neighbor_lambda_grid = vec![0.01];
        cfg
    }

    /// Grids tuned for the 13-dimensional chemical measurements; coarser
    /// epsilons keep the per-class fits shallow enough to be affordable.
    pub fn wine(base_seed: u64) -> Self {
        let mut cfg = Self::new(base_seed);
        cfg.knot_epsilon_grid = vec![1.0, 1.2, 1.4];
        cfg.knot_lambda_grid = vec![0.01];
        cfg.vca_epsilon_grid = vec![0.3, 0.45, 0.6];
        cfg.neighbor_epsilon_grid = vec![1.4, 2.2, 2.6];
        cfg.neighbor_lambda_grid = vec![0.0, 0.01];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid_config("need at least one run"));
        }
        if self.folds < 2 {
            return Err(Error::invalid_config("need at least 2 folds"));
        }
        let grids = [
            &self.knot_epsilon_grid,
            &self.vca_epsilon_grid,
            &self.neighbor_epsilon_grid,
        ];
        if grids.iter().any(|g| g.is_empty()) {
            return Err(Error::EmptyInput("epsilon grid"));
        }
        if self.knot_lambda_grid.is_empty() || self.neighbor_lambda_grid.is_empty() {
            return Err(Error::EmptyInput("lambda grid"));
        }
        let eps_ok = grids
            .iter()
            .flat_map(|g| g.iter())
            .all(|e| e.is_finite() && *e > 0.0);
        let lambda_ok = self
            .knot_lambda_grid
            .iter()
            .chain(&self.neighbor_lambda_grid)
            .all(|l| l.is_finite() && *l >= 0.0);
        if !eps_ok || !lambda_ok {
            return Err(Error::invalid_config(
                "epsilon grids must be positive and lambda grids nonnegative",
            ));
        }
        if !(self.neighbor_cover_margin >= 0.0 && self.neighbor_cover_margin.is_finite()) {
            return Err(Error::invalid_config(
                "neighbor_cover_margin must be finite and nonnegative",
            ));
        }
        if !(self.hd_fraction > 0.0 && self.hd_fraction <= 1.0) {
            return Err(Error::invalid_config("hd_fraction must be in (0, 1]"));
        }
        if !(self.delta_ratio > 0.0 && self.delta_ratio <= 1.0)
            || !(self.neighbor_delta_ratio > 0.0 && self.neighbor_delta_ratio <= 1.0)
        {
            return Err(Error::invalid_config("delta ratios must be in (0, 1]"));
        }
        if !(self.knot_dedup_tol > 0.0 && self.knot_dedup_tol.is_finite()) {
            return Err(Error::invalid_config("knot_dedup_tol must be positive"));
        }
        // Split fraction, gamma, and the rest are validated by the code that
        // consumes them; probe with the smallest epsilon in the grid.
        self.pursuit_config(CvParams {
            epsilon: self.knot_epsilon_grid[0],
            lambda: self.knot_lambda_grid[0],
        })
        .validate()
    }

    fn pursuit_config(&self, p: CvParams) -> PursuitConfig {
        let mut cfg = PursuitConfig::new(p.epsilon);
        cfg.delta = self.delta_ratio * p.epsilon;
        cfg.lambda = p.lambda;
        cfg.gamma = self.gamma;
        cfg.max_degree = self.max_degree;
        cfg.optimizer.max_iters = self.optimizer_max_iters;
        cfg
    }

    fn neighbor_pursuit_config(&self, p: CvParams) -> PursuitConfig {
        let mut cfg = self.pursuit_config(p);
        cfg.delta = self.neighbor_delta_ratio * p.epsilon;
        cfg.anchor = self.neighbor_anchor;
        cfg
    }

    fn vca_config(&self, epsilon: f64) -> VcaConfig {
        VcaConfig {
            epsilon,
            max_degree: self.max_degree,
        }
    }
}

/// One classification variant averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub accuracy_mean: f64,
    pub accuracy_per_run: Vec<f64>,
    /// Wall time of feature extraction plus prediction on the test split.
    /// Cleared in the canonical report form.
    pub test_runtime_mean_s: Option<f64>,
    pub feature_count_mean: f64,
    pub mean_degree: f64,
}

/// Nearest-neighbor accuracies of the three training-set choices, plus how
/// strongly knotting compressed the training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSummary {
    pub knots_accuracy_mean: f64,
    pub kmeans_accuracy_mean: f64,
    pub original_accuracy_mean: f64,
    pub knots_accuracy_per_run: Vec<f64>,
    pub kmeans_accuracy_per_run: Vec<f64>,
    pub original_accuracy_per_run: Vec<f64>,
    /// Distinct knots divided by training points, averaged over runs.
    pub knotting_ratio_mean: f64,
    pub knotting_ratio_per_run: Vec<f64>,
    /// Selected (epsilon, lambda), indexed by run then class.
    pub chosen_per_class: Vec<Vec<CvParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub n_samples: usize,
    pub n_dims: usize,
    pub n_classes: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    /// Selected (epsilon, lambda) per run for the knotting method; empty for
    /// neighbor runs, which record per-class choices in their summary.
    pub chosen_params: Vec<CvParams>,
    /// Cross-validated epsilon per run for the baseline, when it was trained.
    pub chosen_vca_epsilons: Option<Vec<f64>>,
    pub classification: Option<Vec<VariantSummary>>,
    pub neighbors: Option<NeighborSummary>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with wall-clock fields cleared, so identically seeded runs
    /// produce byte-identical output.
    pub fn canonical_json(&self) -> Result<String> {
        let mut clone = self.clone();
        if let Some(variants) = &mut clone.classification {
            for v in variants {
                v.test_runtime_mean_s = None;
            }
        }
        Ok(serde_json::to_string_pretty(&clone)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "dataset: {} ({} samples, {} features, {} classes)\n",
            self.dataset, self.n_samples, self.n_dims, self.n_classes
        ));
        out.push_str(&format!(
            "runs: {} (base seed {})\n",
            self.runs,
            self.seeds.first().copied().unwrap_or(0),
        ));
        if let Some(variants) = &self.classification {
            out.push_str("\nclassification\n");
            out.push_str(&format!(
                "{:<10} {:>9} {:>10} {:>8} {:>14}\n",
                "method", "accuracy", "features", "degree", "test time [s]"
            ));
            for v in variants {
                let rt = match v.test_runtime_mean_s {
                    Some(t) => format!("{t:.1e}"),
                    None => "-".to_string(),
                };
                out.push_str(&format!(
                    "{:<10} {:>9.3} {:>10.1} {:>8.2} {:>14}\n",
                    v.name, v.accuracy_mean, v.feature_count_mean, v.mean_degree, rt
                ));
            }
        }
        if let Some(nb) = &self.neighbors {
            out.push_str("\nnearest neighbor (k = 1)\n");
            out.push_str(&format!("{:<18} {:>9}\n", "training set", "accuracy"));
            out.push_str(&format!(
                "{:<18} {:>9.3}\n",
                "knots", nb.knots_accuracy_mean
            ));
            out.push_str(&format!(
                "{:<18} {:>9.3}\n",
                "k-means centroids", nb.kmeans_accuracy_mean
            ));
            out.push_str(&format!(
                "{:<18} {:>9.3}\n",
                "original points", nb.original_accuracy_mean
            ));
            out.push_str(&format!(
                "knotting ratio: {:.3}\n",
                nb.knotting_ratio_mean
            ));
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Most frequent label; ties go to the lowest class id.
fn majority_class(labels: &[usize]) -> usize {
    let mut votes = std::collections::BTreeMap::new();
    for &l in labels {
        *votes.entry(l).or_insert(0usize) += 1;
    }
    let top = votes.values().copied().max().unwrap_or(0);
    votes
        .iter()
        .find(|(_, &count)| count == top)
        .map(|(&l, _)| l)
        .unwrap_or(0)
}

/// Trains the per-class models and a linear classifier on `fit`, then scores
/// accuracy on `eval`. An empty feature map falls back to predicting the
/// majority class of `fit`.
fn feature_accuracy(
    fit: &LabeledDataset,
    eval: &LabeledDataset,
    cfg: &ConfigEcho,
    linear_reg: f64,
) -> Result<f64> {
    let model = train_class_models(fit, cfg)?;
    if model.feature_dim() == 0 {
        let fallback = majority_class(&fit.labels);
        let preds = vec![fallback; eval.len()];
        return Ok(accuracy(&preds, &eval.labels));
    }
    let fit_features = features_matrix(&fit.points, &model)?;
    let clf = train_linear(&fit_features, &fit.labels, linear_reg)?;
    let eval_features = features_matrix(&eval.points, &model)?;
    let preds = predict_linear(&clf, &eval_features)?;
    Ok(accuracy(&preds, &eval.labels))
}

struct VariantOutcome {
    accuracy: f64,
    runtime_s: f64,
    feature_count: usize,
    mean_degree: f64,
}

/// Trains the classifier on the training features and times extraction plus
/// prediction on the test split.
fn evaluate_variant(
    model: &ClassFeatureModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    linear_reg: f64,
) -> Result<VariantOutcome> {
    if model.feature_dim() == 0 {
        let fallback = majority_class(&train.labels);
        let start = Instant::now();
        let preds = vec![fallback; test.len()];
        let runtime_s = start.elapsed().as_secs_f64();
        return Ok(VariantOutcome {
            accuracy: accuracy(&preds, &test.labels),
            runtime_s,
            feature_count: 0,
            mean_degree: 0.0,
        });
    }
    let train_features = features_matrix(&train.points, model)?;
    let clf = train_linear(&train_features, &train.labels, linear_reg)?;
    let start = Instant::now();
    let test_features = features_matrix(&test.points, model)?;
    let preds = predict_linear(&clf, &test_features)?;
    let runtime_s = start.elapsed().as_secs_f64();
    Ok(VariantOutcome {
        accuracy: accuracy(&preds, &test.labels),
        runtime_s,
        feature_count: model.feature_dim(),
        mean_degree: model.mean_feature_degree(),
    })
}

fn scaled_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_raw, test_raw) = split_train_test(ds, train_fraction, seed)?;
    let scaling = ScalingRecord::fit(&train_raw.points);
    let train = train_raw.with_points(scaling.scale(&train_raw.points)?)?;
    let test = test_raw.with_points(scaling.scale(&test_raw.points)?)?;
    Ok((train, test))
}

fn grid_of(epsilons: &[f64], lambdas: &[f64]) -> Vec<CvParams> {
    let mut grid = Vec::with_capacity(epsilons.len() * lambdas.len());
    for &epsilon in epsilons {
        for &lambda in lambdas {
            grid.push(CvParams { epsilon, lambda });
        }
    }
    grid
}

fn classifier_note() -> String {
    "classifier: one-vs-rest linear separators trained on logistic loss with an L2 penalty"
        .to_string()
}

/// Classification experiment: four variants (knot-filtered and baseline
/// feature maps, each full and restricted to the higher-degree half),
/// repeated over seeded splits with per-run, per-method model selection.
pub fn run_classification(
    ds: &LabeledDataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = grid_of(&cfg.knot_epsilon_grid, &cfg.knot_lambda_grid);
    let vca_grid = grid_of(&cfg.vca_epsilon_grid, &[0.0]);

    let names = ["knots", "knots-hd", "vca", "vca-hd"];
    let mut seeds = Vec::with_capacity(cfg.runs);
    let mut chosen = Vec::with_capacity(cfg.runs);
    let mut chosen_vca = Vec::with_capacity(cfg.runs);
    let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.runs); names.len()];
    let mut runtime: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.runs); names.len()];
    let mut feat: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.runs); names.len()];
    let mut deg: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.runs); names.len()];

    for run in 0..cfg.runs {
        let seed = cfg.base_seed + run as u64;
        seeds.push(seed);
        let (train, test) = scaled_split(ds, cfg.train_fraction, seed)?;

        let best = cross_validate(&train, &grid, cfg.folds, |fit, eval, p| {
            feature_accuracy(
                fit,
                eval,
                &ConfigEcho::Proposed(cfg.pursuit_config(p)),
                cfg.linear_reg,
            )
        })?;
        chosen.push(best);
        let best_vca = cross_validate(&train, &vca_grid, cfg.folds, |fit, eval, p| {
            feature_accuracy(
                fit,
                eval,
                &ConfigEcho::Vca(cfg.vca_config(p.epsilon)),
                cfg.linear_reg,
            )
        })?;
        chosen_vca.push(best_vca.epsilon);

        let knot_model =
            train_class_models(&train, &ConfigEcho::Proposed(cfg.pursuit_config(best)))?;
        let vca_model =
            train_class_models(&train, &ConfigEcho::Vca(cfg.vca_config(best_vca.epsilon)))?;
        let variants = [
            knot_model.clone(),
            restrict_higher_degrees(&knot_model, cfg.hd_fraction)?,
            vca_model.clone(),
            restrict_higher_degrees(&vca_model, cfg.hd_fraction)?,
        ];
        for (slot, model) in variants.iter().enumerate() {
            let outcome = evaluate_variant(model, &train, &test, cfg.linear_reg)?;
            acc[slot].push(outcome.accuracy);
            runtime[slot].push(outcome.runtime_s);
            feat[slot].push(outcome.feature_count as f64);
            deg[slot].push(outcome.mean_degree);
        }
    }

    let classification = names
        .iter()
        .enumerate()
        .map(|(i, name)| VariantSummary {
            name: name.to_string(),
            accuracy_mean: mean(&acc[i]),
            accuracy_per_run: acc[i].clone(),
            test_runtime_mean_s: Some(mean(&runtime[i])),
            feature_count_mean: mean(&feat[i]),
            mean_degree: mean(&deg[i]),
        })
        .collect();

    Ok(ExperimentReport {
        dataset: ds.name.clone(),
        n_samples: ds.len(),
        n_dims: ds.points.dim(),
        n_classes: ds.n_classes(),
        runs: cfg.runs,
        seeds,
        chosen_params: chosen,
        chosen_vca_epsilons: Some(chosen_vca),
        classification: Some(classification),
        neighbors: None,
        notes: vec![classifier_note()],
    })
}

fn nn_accuracy(train_points: &PointSet, labels: &[usize], test: &LabeledDataset) -> Result<f64> {
    let mut preds = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        preds.push(knn_predict(train_points, labels, &test.points.point(i), 1)?);
    }
    Ok(accuracy(&preds, &test.labels))
}

/// Mean distance from each point of `eval` to its nearest row of `knots`.
fn mean_cover_distance(knots: &PointSet, eval: &PointSet) -> f64 {
    let mut total = 0.0;
    for i in 0..eval.len() {
        let p = eval.point(i);
        let mut best = f64::INFINITY;
        for j in 0..knots.len() {
            let d = (knots.point(j) - &p).norm();
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / eval.len() as f64
}

/// Picks one candidate per class: among candidates whose mean held-out
/// coverage distance comes within `margin` of the best candidate for that
/// class, the one with the fewest distinct knots wins; remaining ties prefer
/// the smallest epsilon, then the smallest lambda. Coverage distance is the
/// held-out class points' mean distance to their nearest knot, the quantity a
/// 1-NN classifier built on the knots depends on. Knots are counted on a fit
/// of the full per-class training set, the fit the experiment will use, since
/// how far a model condenses changes with the point count.
fn select_neighbor_params(
    train: &LabeledDataset,
    grid: &[CvParams],
    cfg: &ExperimentConfig,
) -> Result<Vec<CvParams>> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("parameter grid"));
    }
    let fold_rows = stratified_folds(train, cfg.folds)?;
    let all_rows: Vec<usize> = (0..train.len()).collect();
    let n_classes = train.n_classes();
    // scored[class][grid index] = (mean cover distance, full-fit knot count)
    let mut scored = vec![Vec::with_capacity(grid.len()); n_classes];
    for &params in grid {
        let pursuit = cfg.neighbor_pursuit_config(params);
        let mut cover = vec![0.0; n_classes];
        for held_out in &fold_rows {
            let fit_rows: Vec<usize> = all_rows
                .iter()
                .copied()
                .filter(|r| !held_out.contains(r))
                .collect();
            let fit = train.subset(&fit_rows)?;
            let eval = train.subset(held_out)?;
            for class in 0..n_classes {
                let points = fit.class_points(class)?;
                let model = crate::pursuit::fit(&points, &pursuit)?;
                let distinct = model.distinct_knots(cfg.knot_dedup_tol);
                cover[class] += mean_cover_distance(&distinct, &eval.class_points(class)?);
            }
        }
        let folds = fold_rows.len() as f64;
        for class in 0..n_classes {
            let points = train.class_points(class)?;
            let model = crate::pursuit::fit(&points, &pursuit)?;
            let count = model.distinct_knots(cfg.knot_dedup_tol).len() as f64;
            scored[class].push((cover[class] / folds, count));
        }
    }
    let mut chosen = Vec::with_capacity(n_classes);
    for per_class in &scored {
        let best_cover = per_class
            .iter()
            .map(|(c, _)| *c)
            .fold(f64::INFINITY, f64::min);
        let mut winner: Option<(CvParams, f64)> = None;
        for (i, &(cover, count)) in per_class.iter().enumerate() {
            if cover > best_cover + cfg.neighbor_cover_margin {
                continue;
            }
            let params = grid[i];
            let better = match winner {
                None => true,
                Some((w, w_count)) => {
                    count < w_count
                        || (count == w_count
                            && (params.epsilon < w.epsilon
                                || (params.epsilon == w.epsilon && params.lambda < w.lambda)))
                }
            };
            if better {
                winner = Some((params, count));
            }
        }
        chosen.push(winner.expect("nonempty grid").0);
    }
    Ok(chosen)
}

/// Nearest-neighbor experiment: per class, the training points are condensed
/// into distinct knots; a 1-NN classifier trained on those is compared
/// against k-means centroids (matched count per class) and the raw points.
/// Parameters are selected per run for compactness at held-out accuracy, not
/// for classification accuracy.
pub fn run_neighbors(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = grid_of(&cfg.neighbor_epsilon_grid, &cfg.neighbor_lambda_grid);

    let mut seeds = Vec::with_capacity(cfg.runs);
    let mut chosen = Vec::with_capacity(cfg.runs);
    let mut knots_acc = Vec::with_capacity(cfg.runs);
    let mut kmeans_acc = Vec::with_capacity(cfg.runs);
    let mut original_acc = Vec::with_capacity(cfg.runs);
    let mut ratios = Vec::with_capacity(cfg.runs);

    for run in 0..cfg.runs {
        let seed = cfg.base_seed + run as u64;
        seeds.push(seed);
        let (train, test) = scaled_split(ds, cfg.train_fraction, seed)?;

        let per_class = select_neighbor_params(&train, &grid, cfg)?;

        let mut knot_rows: Vec<Vec<f64>> = Vec::new();
        let mut knot_labels: Vec<usize> = Vec::new();
        let mut centroid_rows: Vec<Vec<f64>> = Vec::new();
        let mut centroid_labels: Vec<usize> = Vec::new();
        for class in 0..train.n_classes() {
            let pursuit = cfg.neighbor_pursuit_config(per_class[class]);
            let points = train.class_points(class)?;
            let model = crate::pursuit::fit(&points, &pursuit)?;
            let distinct = model.distinct_knots(cfg.knot_dedup_tol);
            let centroids = kmeans(&points, distinct.len(), seed + class as u64)?;
            for i in 0..distinct.len() {
                knot_rows.push(distinct.point(i).iter().copied().collect());
                knot_labels.push(class);
            }
            for i in 0..centroids.len() {
                centroid_rows.push(centroids.point(i).iter().copied().collect());
                centroid_labels.push(class);
            }
        }
        chosen.push(per_class);
        let knot_set = PointSet::from_rows(&knot_rows)?;
        let centroid_set = PointSet::from_rows(&centroid_rows)?;

        knots_acc.push(nn_accuracy(&knot_set, &knot_labels, &test)?);
        kmeans_acc.push(nn_accuracy(&centroid_set, &centroid_labels, &test)?);
        original_acc.push(nn_accuracy(&train.points, &train.labels, &test)?);
        ratios.push(knot_set.len() as f64 / train.len() as f64);
    }

    let neighbors = NeighborSummary {
        knots_accuracy_mean: mean(&knots_acc),
        kmeans_accuracy_mean: mean(&kmeans_acc),
        original_accuracy_mean: mean(&original_acc),
        knots_accuracy_per_run: knots_acc,
        kmeans_accuracy_per_run: kmeans_acc,
        original_accuracy_per_run: original_acc,
        knotting_ratio_mean: mean(&ratios),
        knotting_ratio_per_run: ratios,
        chosen_per_class: chosen,
    };

    Ok(ExperimentReport {
        dataset: ds.name.clone(),
        n_samples: ds.len(),
        n_dims: ds.points.dim(),
        n_classes: ds.n_classes(),
        runs: cfg.runs,
        seeds,
        chosen_params: Vec::new(),
        chosen_vca_epsilons: None,
        classification: None,
        neighbors: Some(neighbors),
        notes: vec![format!(
            "selection: per class, fewest distinct knots within {:.2} scaled units of the best held-out coverage",
            cfg.neighbor_cover_margin
        )],
    })
}
