//! Per-class models and the absolute-evaluation feature map: each sample is
//! described by |g(x)| for every vanishing polynomial of every class, so
//! samples of class i score near zero in the block belonging to class i.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::vca_fit;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{ConfigEcho, KnotModel, Method};
use crate::points::PointSet;
use crate::poly::PointValues;
use crate::pursuit::fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatureModel {
    /// One fitted model per class, in class-id order.
    pub models: Vec<KnotModel>,
    pub class_names: Vec<String>,
    /// Feature layout: `layout[c]` lists (degree, index) into class c's
    /// vanishing layers, degree-major. Concatenation over classes gives the
    /// feature vector order.
    pub layout: Vec<Vec<(usize, usize)>>,
    /// Set when the layout was restricted to a higher-degree fraction.
    pub hd_fraction: Option<f64>,
}

impl ClassFeatureModel {
    pub fn method(&self) -> Method {
        self.models[0].method()
    }

    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layout.iter().map(|l| l.len()).sum()
    }

    /// Mean degree over the polynomials currently in the layout.
    pub fn mean_feature_degree(&self) -> f64 {
        let total: usize = self.layout.iter().flatten().map(|&(d, _)| d).sum();
        let count = self.feature_dim();
        if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        }
    }
}

fn full_layout(model: &KnotModel) -> Vec<(usize, usize)> {
    let reg = &model.registry;
    (0..=reg.top_degree())
        .flat_map(|d| (0..reg.g_layer(d).len()).map(move |i| (d, i)))
        .collect()
}

/// Fits one model per class on that class's training rows only. The same
/// configuration is shared across classes.
pub fn train_class_models(train: &LabeledDataset, cfg: &ConfigEcho) -> Result<ClassFeatureModel> {
    if train.n_classes() < 2 {
        return Err(Error::invalid_config(
            "need at least 2 classes to build a feature model".to_string(),
        ));
    }
    let mut models = Vec::with_capacity(train.n_classes());
    for class in 0..train.n_classes() {
        let pts = train.class_points(class)?;
        let model = match cfg {
            ConfigEcho::Proposed(p) => fit(&pts, p)?,
            ConfigEcho::Vca(v) => vca_fit(&pts, v)?,
        };
        models.push(model);
    }
    let layout = models.iter().map(full_layout).collect();
    Ok(ClassFeatureModel {
        models,
        class_names: train.class_names.clone(),
        layout,
        hd_fraction: None,
    })
}

/// The absolute evaluations of every layout polynomial at one point, in
/// layout order.
pub fn extract_features(x: &DVector<f64>, model: &ClassFeatureModel) -> Result<DVector<f64>> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
            context: "feature extraction input",
        });
    }
    let mut out = Vec::with_capacity(model.feature_dim());
    for (class_model, refs) in model.models.iter().zip(&model.layout) {
        if refs.is_empty() {
            continue;
        }
        let vals = PointValues::compute(&class_model.registry, x)?;
        for &(degree, index) in refs {
            out.push(vals.g[degree][index].abs());
        }
    }
    Ok(DVector::from_vec(out))
}

/// Feature matrix for a whole point set, rows aligned with `points`.
pub fn features_matrix(points: &PointSet, model: &ClassFeatureModel) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(points.len(), model.feature_dim());
    for i in 0..points.len() {
        let f = extract_features(&points.point(i), model)?;
        out.row_mut(i).copy_from(&f.transpose());
    }
    Ok(out)
}

/// Keeps, per class, the `ceil(fraction * count)` highest-degree layout
/// entries (the tail of the degree-major order, so within a degree the later
/// constructions win). Models are untouched; only the layout shrinks.
pub fn restrict_higher_degrees(
    model: &ClassFeatureModel,
    fraction: f64,
) -> Result<ClassFeatureModel> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid_config(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let layout = model
        .layout
        .iter()
        .map(|refs| {
            let keep = ((fraction * refs.len() as f64).ceil() as usize).min(refs.len());
            refs[refs.len() - keep..].to_vec()
        })
        .collect();
    Ok(ClassFeatureModel {
        models: model.models.clone(),
        class_names: model.class_names.clone(),
        layout,
        hd_fraction: Some(fraction),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{accuracy, predict_linear, train_linear};
    use crate::model::PursuitConfig;
    use crate::poly::evaluate;
    use approx::assert_relative_eq;

    fn two_rings(n: usize) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, r) in [1.0f64, 2.0].iter().enumerate() {
            for k in 0..n {
                let a = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                rows.push(vec![r * a.cos(), r * a.sin()]);
                labels.push(c);
            }
        }
        LabeledDataset::new(
            "rings",
            PointSet::from_rows(&rows).unwrap(),
            labels,
            vec!["inner".into(), "outer".into()],
        )
        .unwrap()
    }

    fn ring_model() -> ClassFeatureModel {
        let ds = two_rings(14);
        train_class_models(&ds, &ConfigEcho::Proposed(PursuitConfig::new(0.1))).unwrap()
    }

    #[test]
    fn exact_rings_separate_linearly_in_feature_space() {
        let model = ring_model();
        assert_eq!(model.n_classes(), 2);
        let held_out = two_rings(9); // different angles, same circles
        let feats = features_matrix(&held_out.points, &model).unwrap();
        let linear = train_linear(&feats, &held_out.labels, 1e-4).unwrap();
        let pred = predict_linear(&linear, &feats).unwrap();
        assert_eq!(accuracy(&pred, &held_out.labels), 1.0);
    }

    #[test]
    fn on_variety_block_is_zero_and_features_are_nonnegative() {
        let model = ring_model();
        let x = DVector::from_vec(vec![1.0, 0.0]); // on the inner circle
        let f = extract_features(&x, &model).unwrap();
        assert!(f.iter().all(|&v| v >= 0.0));
        let inner_len = model.layout[0].len();
        assert!(inner_len > 0);
        for i in 0..inner_len {
            assert!(f[i] <= 1e-9, "inner block entry {i} = {}", f[i]);
        }
        // The other class's circle polynomial must not vanish here.
        assert!(f.iter().skip(inner_len).any(|&v| v > 1e-3));
    }

    #[test]
    fn extraction_matches_per_polynomial_evaluation() {
        let model = ring_model();
        let x = DVector::from_vec(vec![0.7, -1.2]);
        let f = extract_features(&x, &model).unwrap();
        let mut k = 0;
        for (class_model, refs) in model.models.iter().zip(&model.layout) {
            for &(degree, index) in refs {
                let g = &class_model.registry.g_layer(degree)[index];
                let direct = evaluate(g, &class_model.registry, &x).unwrap().abs();
                assert_relative_eq!(f[k], direct, epsilon = 1e-12);
                k += 1;
            }
        }
        assert_eq!(k, f.len());
    }

    #[test]
    fn single_class_training_is_rejected() {
        let pts = PointSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let ds = LabeledDataset::new("one", pts, vec![0, 0], vec!["a".into()]).unwrap();
        assert!(train_class_models(&ds, &ConfigEcho::Proposed(PursuitConfig::new(0.1))).is_err());
    }

    #[test]
    fn degree_restriction_keeps_the_highest_degree_tail() {
        let model = ring_model();
        let identity = restrict_higher_degrees(&model, 1.0).unwrap();
        assert_eq!(identity.layout, model.layout);
        assert_eq!(identity.hd_fraction, Some(1.0));

        let half = restrict_higher_degrees(&model, 0.5).unwrap();
        for (full, kept) in model.layout.iter().zip(&half.layout) {
            assert_eq!(kept.len(), (full.len() + 1) / 2);
            assert_eq!(&full[full.len() - kept.len()..], kept.as_slice());
            // Everything kept has degree >= everything dropped.
            let max_dropped = full[..full.len() - kept.len()]
                .iter()
                .map(|&(d, _)| d)
                .max()
                .unwrap_or(0);
            assert!(kept.iter().all(|&(d, _)| d >= max_dropped));
        }
        assert!(half.feature_dim() < model.feature_dim());
        assert!(restrict_higher_degrees(&model, 0.0).is_err());
    }

    #[test]
    fn within_class_row_permutations_keep_accuracy() {
        let ds = two_rings(12);
        // Rotate each class's rows by a few positions.
        let mut order: Vec<usize> = Vec::new();
        for c in 0..2 {
            let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
            idx.rotate_left(5);
            order.extend(idx);
        }
        let permuted = ds.subset(&order).unwrap();
        let cfg = ConfigEcho::Proposed(PursuitConfig::new(0.1));
        let m1 = train_class_models(&ds, &cfg).unwrap();
        let m2 = train_class_models(&permuted, &cfg).unwrap();
        let probe = two_rings(7);
        let f1 = features_matrix(&probe.points, &m1).unwrap();
        let f2 = features_matrix(&probe.points, &m2).unwrap();
        let l1 = train_linear(&f1, &probe.labels, 1e-4).unwrap();
        let l2 = train_linear(&f2, &probe.labels, 1e-4).unwrap();
        let a1 = accuracy(&predict_linear(&l1, &f1).unwrap(), &probe.labels);
        let a2 = accuracy(&predict_linear(&l2, &f2).unwrap(), &probe.labels);
        assert_eq!(a1, a2);
    }
}
