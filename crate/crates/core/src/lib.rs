//! Construction of approximately vanishing polynomial bases with jointly
//! optimized data knots, plus the evaluation, feature-extraction, and
//! experiment machinery built on top.

pub mod basis;
pub mod classify;
pub mod contour;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod knotting;
pub mod model;
pub mod optimize;
pub mod points;
pub mod poly;
pub mod pursuit;
pub mod spectral;
pub mod synth;

pub use basis::{find_basis, generate_candidates, residualize, vca_fit, BasisLayer, CandidateSet};
pub use classify::{
    accuracy, kmeans, knn_predict, predict_linear, train_linear, LinearClassifier,
};
pub use contour::{
    build_contour_grid, export_contour_grid, write_contour_grid, ContourGrid, OutputFormat,
};
pub use data::{
    cross_validate, load_csv, split_train_test, stratified_folds, CvParams, LabeledDataset,
    ScalingRecord,
};
pub use error::{Error, Result};
pub use experiment::{
    run_classification, run_neighbors, ExperimentConfig, ExperimentReport, NeighborSummary,
    VariantSummary,
};
pub use features::{
    extract_features, features_matrix, restrict_higher_degrees, train_class_models,
    ClassFeatureModel,
};
pub use knotting::{
    generalized_distance, knot_all, knot_gradient, knot_objective, knot_point, KnotBatch,
    KnotObjectiveSpec, KnotOutcome,
};
pub use model::{
    distinct_rows, ConfigEcho, DegreeStats, Diagnostics, KnotAnchor, KnotModel, Method,
    PursuitConfig, ResetEvent, VcaConfig,
};
pub use optimize::{minimize, minimize_with_grad, OptimOutcome, OptimizerParams, StopReason};
pub use points::PointSet;
pub use poly::{
    evaluate, evaluate_matrix, expand_to_monomials, FEntry, LinearTerm, PolyKind, PolyRef,
    PolyRegistry, Polynomial, ProductTerm, SetValues,
};
pub use pursuit::{cool_eta, exact_vanish_pursuit, fit, DELTA_SLACK};
pub use synth::{circle_points, gen_blobs, gen_circle, gen_concentric};
pub use spectral::{pseudo_inverse, spectral_split, SpectralSplit};
