//! Fitted models: configuration echo, polynomial registry, knots, and run
//! diagnostics, with JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::OptimizerParams;
use crate::points::PointSet;
use crate::poly::PolyRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Vca,
}

/// What each knot update pulls its knot toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KnotAnchor {
    /// The knot's original source point; knots hang in a balance between the
    /// vanishing pull and a fixed spring.
    #[default]
    Source,
    /// The knot's position before the update; each round only resists local
    /// drift, so repeated rounds let knots ratchet onto the variety.
    Previous,
}

/// Configuration for the joint basis-and-knots fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuitConfig {
    /// Vanishing threshold on the source points.
    pub epsilon: f64,
    /// Vanishing threshold on the knots; must not exceed epsilon.
    pub delta: f64,
    /// Weight of the pull toward each knot's anchor.
    pub lambda: f64,
    /// Anchor of the regularization term in knot updates.
    #[serde(default)]
    pub anchor: KnotAnchor,
    /// Cooling factor for the intermediate threshold, in (0, 1).
    pub gamma: f64,
    /// Use squared norms in the knot objective (smooth variant).
    pub squared_norms: bool,
    /// Hard cap on the basis degree; exceeding it truncates the run.
    pub max_degree: usize,
    /// Hard cap on system resets; exceeding it truncates the run.
    pub max_resets: usize,
    /// Snap the intermediate threshold to delta once within this gap.
    pub eta_floor_snap: f64,
    pub optimizer: OptimizerParams,
}

impl PursuitConfig {
    /// Defaults for a given epsilon; delta follows as epsilon / 100.
    pub fn new(epsilon: f64) -> Self {
        PursuitConfig {
            epsilon,
            delta: 0.01 * epsilon,
            lambda: 1.0,
            anchor: KnotAnchor::default(),
            gamma: 0.9,
            squared_norms: false,
            max_degree: 10,
            max_resets: 20,
            eta_floor_snap: 1e-12,
            optimizer: OptimizerParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = self.epsilon.is_finite()
            && self.delta.is_finite()
            && self.lambda.is_finite()
            && self.gamma.is_finite()
            && self.eta_floor_snap.is_finite();
        if !all_finite {
            return Err(Error::NonFinite("pursuit configuration"));
        }
        if self.epsilon < 0.0 {
            return Err(Error::invalid_config("epsilon must be nonnegative"));
        }
        if self.delta < 0.0 || self.delta > self.epsilon {
            return Err(Error::invalid_config(format!(
                "delta must lie in [0, epsilon]; got delta = {}, epsilon = {}",
                self.delta, self.epsilon
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid_config("lambda must be nonnegative"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid_config(format!(
                "gamma must lie in (0, 1); got {}",
                self.gamma
            )));
        }
        if self.max_degree == 0 {
            return Err(Error::invalid_config("max_degree must be at least 1"));
        }
        if self.eta_floor_snap < 0.0 {
            return Err(Error::invalid_config("eta_floor_snap must be nonnegative"));
        }
        Ok(())
    }
}

/// Configuration for the knot-free baseline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcaConfig {
    pub epsilon: f64,
    pub max_degree: usize,
}

impl VcaConfig {
    pub fn new(epsilon: f64) -> Self {
        VcaConfig {
            epsilon,
            max_degree: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::invalid_config("epsilon must be finite and nonnegative"));
        }
        if self.max_degree == 0 {
            return Err(Error::invalid_config("max_degree must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ConfigEcho {
    Proposed(PursuitConfig),
    Vca(VcaConfig),
}

impl ConfigEcho {
    pub fn method(&self) -> Method {
        match self {
            ConfigEcho::Proposed(_) => Method::Proposed,
            ConfigEcho::Vca(_) => Method::Vca,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            ConfigEcho::Proposed(c) => c.epsilon,
            ConfigEcho::Vca(c) => c.epsilon,
        }
    }
}

/// One reset of the construction: layers were discarded and the threshold
/// cooled because no candidates remained while some polynomial still failed
/// the knot-side vanishing bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetEvent {
    /// Degree reached when the reset fired.
    pub at_degree: usize,
    pub eta_before: f64,
    pub eta_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub degree: usize,
    pub n_vanishing: usize,
    pub n_spanning: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Intermediate threshold after initialization and after every cooling.
    pub eta_trace: Vec<f64>,
    pub resets: Vec<ResetEvent>,
    /// Final per-degree layer sizes.
    pub degree_log: Vec<DegreeStats>,
    /// Spanning-side directions discarded across all basis constructions.
    pub discarded_spanning: usize,
    pub knot_updates: usize,
    /// Knot optimizations that hit a non-finite objective and reverted.
    pub optimizer_failures: usize,
    /// True when a hard cap (degree or resets) cut the run short.
    pub truncated: bool,
    pub final_eta: f64,
    /// Largest vanishing-polynomial norm on the source points, re-evaluated
    /// from the stored trees at the end of the run.
    pub max_g_norm_source: f64,
    /// Same, on the final knots.
    pub max_g_norm_knots: f64,
}

/// A fitted model: the polynomial registry, the final knots (for the
/// baseline, the training points themselves), and how the run went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotModel {
    pub config: ConfigEcho,
    pub registry: PolyRegistry,
    pub knots: PointSet,
    pub diagnostics: Diagnostics,
}

impl KnotModel {
    pub fn method(&self) -> Method {
        self.config.method()
    }

    pub fn dim(&self) -> usize {
        self.registry.dim()
    }

    pub fn g_count(&self) -> usize {
        self.registry.g_total()
    }

    pub fn f_count(&self) -> usize {
        self.registry.f_total()
    }

    /// Degrees of the vanishing polynomials in construction order.
    pub fn g_degrees(&self) -> Vec<usize> {
        self.registry.g_iter().map(|(d, _, _)| d).collect()
    }

    pub fn mean_g_degree(&self) -> f64 {
        let degs = self.g_degrees();
        if degs.is_empty() {
            0.0
        } else {
            degs.iter().sum::<usize>() as f64 / degs.len() as f64
        }
    }

    /// Knots deduplicated by a greedy row-order pass: a knot is kept iff it
    /// lies farther than `tol` (Euclidean) from every kept knot.
    pub fn distinct_knots(&self, tol: f64) -> PointSet {
        distinct_rows(&self.knots, tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: KnotModel = serde_json::from_str(text)?;
        model.registry.validate()?;
        match &model.config {
            ConfigEcho::Proposed(c) => c.validate()?,
            ConfigEcho::Vca(c) => c.validate()?,
        }
        if model.knots.dim() != model.registry.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.registry.dim(),
                got: model.knots.dim(),
                context: "knot dimension vs registry",
            });
        }
        Ok(model)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Greedy row-order deduplication shared by knot statistics.
pub fn distinct_rows(points: &PointSet, tol: f64) -> PointSet {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..points.len() {
        let pi = points.point(i);
        let is_new = kept
            .iter()
            .all(|&j| (points.point(j) - &pi).norm() > tol);
        if is_new {
            kept.push(i);
        }
    }
    points
        .select_rows(&kept)
        .expect("dedup always keeps the first row")
}
