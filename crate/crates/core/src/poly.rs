//! Polynomials as combination trees over a layered registry.
//!
//! Constructed polynomials are never expanded to monomial form; they are kept
//! as linear combinations of products of previously constructed entries, so
//! evaluation cost tracks construction size rather than the (exponential)
//! monomial count. `expand_to_monomials` exists as an independent low-degree
//! cross-check and is not used by any construction path.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Reference to a stored polynomial or a primitive coordinate.
///
/// F and G refs carry their layer degree, so the degree of a reference is
/// known without consulting the registry. Coordinates are primitives of
/// degree 1 and live outside the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyRef {
    F { degree: usize, index: usize },
    G { degree: usize, index: usize },
    Coord { index: usize },
}

impl PolyRef {
    pub fn degree(&self) -> usize {
        match self {
            PolyRef::F { degree, .. } | PolyRef::G { degree, .. } => *degree,
            PolyRef::Coord { .. } => 1,
        }
    }
}

/// One multiplicative term `coef * left * right`; `right = None` means the
/// unit polynomial, making the term linear in `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub coef: f64,
    pub left: PolyRef,
    pub right: Option<PolyRef>,
}

/// One additive term `coef * poly` of strictly lower degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub coef: f64,
    pub poly: PolyRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyKind {
    Constant { value: f64 },
    Coordinate { index: usize },
    Combination {
        base_terms: Vec<ProductTerm>,
        lower_terms: Vec<LinearTerm>,
    },
}

/// A polynomial with its total degree. Structural rules (checked when a
/// polynomial enters a registry):
/// - each base term's operand degrees sum to the polynomial's degree;
/// - F/G refs point strictly below the polynomial's degree and resolve;
/// - lower terms reference degree strictly below the polynomial's degree;
/// - all coefficients are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    degree: usize,
    kind: PolyKind,
}

impl Polynomial {
    pub fn constant(value: f64) -> Self {
        Polynomial {
            degree: 0,
            kind: PolyKind::Constant { value },
        }
    }

    pub fn coordinate(index: usize) -> Self {
        Polynomial {
            degree: 1,
            kind: PolyKind::Coordinate { index },
        }
    }

    pub fn combination(
        degree: usize,
        base_terms: Vec<ProductTerm>,
        lower_terms: Vec<LinearTerm>,
    ) -> Self {
        Polynomial {
            degree,
            kind: PolyKind::Combination {
                base_terms,
                lower_terms,
            },
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> &PolyKind {
        &self.kind
    }
}

/// F-layer entry: the constructed polynomial plus the divisor applied to every
/// use of it. The divisor is the norm of the entry's evaluation vector on the
/// point set it was built against, so referencing the entry yields the
/// unit-normalized polynomial without rewriting coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEntry {
    pub poly: Polynomial,
    pub rescale: f64,
}

/// Layered store of constructed polynomials: per-degree F-layers (spanning,
/// referenced by later construction) and G-layers (vanishing, terminal).
/// Layers for F and G always cover the same degree range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRegistry {
    dim: usize,
    f_layers: Vec<Vec<FEntry>>,
    g_layers: Vec<Vec<Polynomial>>,
}

impl PolyRegistry {
    /// Registry seeded with the degree-0 layer: the single constant
    /// `1/sqrt(n)` (unit norm on any n-point set), empty G-layer.
    pub fn with_constant(dim: usize, n_points: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput("registry dimension"));
        }
        if n_points == 0 {
            return Err(Error::EmptyInput("registry point count"));
        }
        let value = 1.0 / (n_points as f64).sqrt();
        Ok(PolyRegistry {
            dim,
            f_layers: vec![vec![FEntry {
                poly: Polynomial::constant(value),
                rescale: 1.0,
            }]],
            g_layers: vec![vec![]],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest degree with an installed layer.
    pub fn top_degree(&self) -> usize {
        self.f_layers.len() - 1
    }

    pub fn f_layer(&self, degree: usize) -> &[FEntry] {
        self.f_layers.get(degree).map_or(&[], |l| l.as_slice())
    }

    pub fn g_layer(&self, degree: usize) -> &[Polynomial] {
        self.g_layers.get(degree).map_or(&[], |l| l.as_slice())
    }

    pub fn f_total(&self) -> usize {
        self.f_layers.iter().map(Vec::len).sum()
    }

    pub fn g_total(&self) -> usize {
        self.g_layers.iter().map(Vec::len).sum()
    }

    /// All F refs through `max_degree` inclusive, degree-major. This is the
    /// column order used whenever F evaluations form a matrix.
    pub fn f_refs_through(&self, max_degree: usize) -> Vec<PolyRef> {
        let mut refs = Vec::new();
        for d in 0..=max_degree.min(self.top_degree()) {
            for i in 0..self.f_layers[d].len() {
                refs.push(PolyRef::F {
                    degree: d,
                    index: i,
                });
            }
        }
        refs
    }

    /// G entries in degree-major construction order.
    pub fn g_iter(&self) -> impl Iterator<Item = (usize, usize, &Polynomial)> {
        self.g_layers
            .iter()
            .enumerate()
            .flat_map(|(d, layer)| layer.iter().enumerate().map(move |(i, p)| (d, i, p)))
    }

    pub fn resolve(&self, r: PolyRef) -> Result<&Polynomial> {
        match r {
            PolyRef::F { degree, index } => self
                .f_layers
                .get(degree)
                .and_then(|l| l.get(index))
                .map(|e| &e.poly)
                .ok_or(Error::DanglingRef(r)),
            PolyRef::G { degree, index } => self
                .g_layers
                .get(degree)
                .and_then(|l| l.get(index))
                .ok_or(Error::DanglingRef(r)),
            PolyRef::Coord { index } => {
                if index < self.dim {
                    // Primitives have no stored polynomial; callers use the
                    // ref directly. Resolution only checks the bound.
                    Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: index,
                        context: "coordinate refs resolve positionally, not to storage",
                    })
                } else {
                    Err(Error::DanglingRef(r))
                }
            }
        }
    }

    fn check_ref(&self, r: PolyRef, below_degree: usize) -> Result<()> {
        match r {
            PolyRef::F { degree, index } => {
                if degree >= below_degree
                    || self.f_layers.get(degree).map_or(true, |l| index >= l.len())
                {
                    return Err(Error::DanglingRef(r));
                }
            }
            PolyRef::G { degree, index } => {
                if degree >= below_degree
                    || self.g_layers.get(degree).map_or(true, |l| index >= l.len())
                {
                    return Err(Error::DanglingRef(r));
                }
            }
            PolyRef::Coord { index } => {
                if index >= self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: index,
                        context: "coordinate index",
                    });
                }
            }
        }
        Ok(())
    }

    /// Structural validation of a polynomial destined for layer `degree`.
    /// F/G refs must resolve strictly below `degree`; coordinate refs are
    /// primitives and only need to be in range (a degree-1 entry may carry
    /// degree-1 coordinate operands, which is how the first layer bootstraps).
    pub fn validate_poly(&self, poly: &Polynomial, degree: usize) -> Result<()> {
        if poly.degree != degree {
            return Err(Error::invalid_config(format!(
                "polynomial degree {} installed at layer {}",
                poly.degree, degree
            )));
        }
        match &poly.kind {
            PolyKind::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::NonFinite("constant polynomial value"));
                }
                if degree != 0 {
                    return Err(Error::invalid_config(
                        "constant polynomial above degree 0".to_string(),
                    ));
                }
            }
            PolyKind::Coordinate { index } => {
                if *index >= self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: *index,
                        context: "coordinate index",
                    });
                }
                if degree != 1 {
                    return Err(Error::invalid_config(
                        "coordinate polynomial must have degree 1".to_string(),
                    ));
                }
            }
            PolyKind::Combination {
                base_terms,
                lower_terms,
            } => {
                // check_ref bounds F/G operands strictly below `degree`;
                // coordinate operands are primitives and only need to be in
                // range, which is how the degree-1 layer bootstraps.
                for bt in base_terms {
                    if !bt.coef.is_finite() {
                        return Err(Error::NonFinite("base term coefficient"));
                    }
                    self.check_ref(bt.left, degree)?;
                    let mut sum = bt.left.degree();
                    if let Some(r) = bt.right {
                        self.check_ref(r, degree)?;
                        sum += r.degree();
                    }
                    if sum != degree {
                        return Err(Error::invalid_config(format!(
                            "base term degrees sum to {sum}, expected {degree}"
                        )));
                    }
                }
                for lt in lower_terms {
                    if !lt.coef.is_finite() {
                        return Err(Error::NonFinite("lower term coefficient"));
                    }
                    match lt.poly {
                        PolyRef::Coord { .. } => {
                            return Err(Error::invalid_config(
                                "lower terms must reference stored polynomials".to_string(),
                            ))
                        }
                        r => self.check_ref(r, degree)?,
                    }
                }
            }
        }
        Ok(())
    }

    /// Installs layer `degree`, which must be the next uncovered degree.
    pub fn push_layer(
        &mut self,
        degree: usize,
        g_polys: Vec<Polynomial>,
        f_entries: Vec<FEntry>,
    ) -> Result<()> {
        if degree != self.f_layers.len() {
            return Err(Error::invalid_config(format!(
                "layer {} installed out of order (next is {})",
                degree,
                self.f_layers.len()
            )));
        }
        self.validate_layer(degree, &g_polys, &f_entries)?;
        self.g_layers.push(g_polys);
        self.f_layers.push(f_entries);
        Ok(())
    }

    /// Replaces the top layer in place. Sound because nothing references a
    /// layer until the next degree's candidates are built from it.
    pub fn replace_top_layer(
        &mut self,
        degree: usize,
        g_polys: Vec<Polynomial>,
        f_entries: Vec<FEntry>,
    ) -> Result<()> {
        if degree == 0 || degree != self.top_degree() {
            return Err(Error::invalid_config(format!(
                "cannot replace layer {degree} (top is {})",
                self.top_degree()
            )));
        }
        self.validate_layer(degree, &g_polys, &f_entries)?;
        self.g_layers[degree] = g_polys;
        self.f_layers[degree] = f_entries;
        Ok(())
    }

    /// Full structural check, used after deserialization: layer shapes, the
    /// degree-0 constant, and every stored polynomial's reference discipline.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::EmptyInput("registry dimension"));
        }
        if self.f_layers.len() != self.g_layers.len() || self.f_layers.is_empty() {
            return Err(Error::invalid_config(
                "F and G layers must cover the same nonempty degree range".to_string(),
            ));
        }
        let base = &self.f_layers[0];
        let base_ok = base.len() == 1
            && matches!(base[0].poly.kind, PolyKind::Constant { value } if value.is_finite())
            && base[0].rescale == 1.0;
        if !base_ok || !self.g_layers[0].is_empty() {
            return Err(Error::invalid_config(
                "degree-0 layer must be exactly one constant with unit rescale".to_string(),
            ));
        }
        for degree in 0..self.f_layers.len() {
            self.validate_layer(degree, &self.g_layers[degree], &self.f_layers[degree])?;
        }
        Ok(())
    }

    fn validate_layer(
        &self,
        degree: usize,
        g_polys: &[Polynomial],
        f_entries: &[FEntry],
    ) -> Result<()> {
        for p in g_polys {
            self.validate_poly(p, degree)?;
        }
        for e in f_entries {
            self.validate_poly(&e.poly, degree)?;
            if !e.rescale.is_finite() || e.rescale <= 0.0 {
                return Err(Error::NonFinite("F entry rescale divisor"));
            }
        }
        Ok(())
    }
}

/// Per-point evaluations of every registry entry, computed bottom-up so each
/// entry is evaluated exactly once. F values are already divided by their
/// rescale divisor, matching reference semantics.
#[derive(Debug, Clone)]
pub struct PointValues {
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

impl PointValues {
    pub fn compute(reg: &PolyRegistry, point: &DVector<f64>) -> Result<Self> {
        let mut vals = PointValues {
            f: Vec::with_capacity(reg.f_layers.len()),
            g: Vec::with_capacity(reg.g_layers.len()),
        };
        vals.recompute(reg, point)?;
        Ok(vals)
    }

    /// Refills in place; reuses buffers when the registry shape is unchanged.
    pub fn recompute(&mut self, reg: &PolyRegistry, point: &DVector<f64>) -> Result<()> {
        if point.len() != reg.dim {
            return Err(Error::DimensionMismatch {
                expected: reg.dim,
                got: point.len(),
                context: "evaluation point dimension",
            });
        }
        self.f.resize(reg.f_layers.len(), Vec::new());
        self.g.resize(reg.g_layers.len(), Vec::new());
        for (d, layer) in reg.f_layers.iter().enumerate() {
            self.f[d].clear();
            for entry in layer {
                let raw = eval_kind_point(&entry.poly.kind, &self.f, &self.g, point)?;
                self.f[d].push(raw / entry.rescale);
            }
        }
        for (d, layer) in reg.g_layers.iter().enumerate() {
            self.g[d].clear();
            for poly in layer {
                let v = eval_kind_point(&poly.kind, &self.f, &self.g, point)?;
                self.g[d].push(v);
            }
        }
        Ok(())
    }

    pub fn eval(&self, poly: &Polynomial, point: &DVector<f64>) -> Result<f64> {
        eval_kind_point(&poly.kind, &self.f, &self.g, point)
    }

    /// Reverse sweep for gradients of scalars built from stored values: given
    /// seeds d(scalar)/d(value) for every layer entry (F seeds are w.r.t. the
    /// rescaled values, as stored), accumulates d(scalar)/d(point). `self`
    /// must hold the values of `reg` at `point`.
    pub fn backprop(
        &self,
        reg: &PolyRegistry,
        point: &DVector<f64>,
        mut seed_f: Vec<Vec<f64>>,
        mut seed_g: Vec<Vec<f64>>,
    ) -> Result<DVector<f64>> {
        let shape_ok = seed_f.len() == reg.f_layers.len()
            && seed_g.len() == reg.g_layers.len()
            && seed_f
                .iter()
                .zip(&reg.f_layers)
                .all(|(s, l)| s.len() == l.len())
            && seed_g
                .iter()
                .zip(&reg.g_layers)
                .all(|(s, l)| s.len() == l.len());
        if !shape_ok {
            return Err(Error::invalid_config(
                "gradient seeds must match the registry layer shapes".to_string(),
            ));
        }
        let mut grad = DVector::zeros(reg.dim);
        // References point strictly below their own degree, so sweeping
        // degrees top-down visits every adjoint after its last update.
        for d in (0..reg.f_layers.len()).rev() {
            for (i, poly) in reg.g_layers[d].iter().enumerate() {
                let a = seed_g[d][i];
                if a != 0.0 {
                    self.distribute(&poly.kind, a, &mut seed_f, &mut seed_g, &mut grad, point)?;
                }
            }
            for (i, entry) in reg.f_layers[d].iter().enumerate() {
                let a = seed_f[d][i];
                if a != 0.0 {
                    // Stored value is raw / rescale; chain through the divisor.
                    self.distribute(
                        &entry.poly.kind,
                        a / entry.rescale,
                        &mut seed_f,
                        &mut seed_g,
                        &mut grad,
                        point,
                    )?;
                }
            }
        }
        Ok(grad)
    }

    fn distribute(
        &self,
        kind: &PolyKind,
        adj: f64,
        seed_f: &mut [Vec<f64>],
        seed_g: &mut [Vec<f64>],
        grad: &mut DVector<f64>,
        point: &DVector<f64>,
    ) -> Result<()> {
        let mut add = |r: PolyRef, v: f64| -> Result<()> {
            match r {
                PolyRef::Coord { index } => {
                    if index >= grad.len() {
                        return Err(Error::DanglingRef(r));
                    }
                    grad[index] += v;
                }
                PolyRef::F { degree, index } => {
                    seed_f
                        .get_mut(degree)
                        .and_then(|l| l.get_mut(index))
                        .map(|s| *s += v)
                        .ok_or(Error::DanglingRef(r))?;
                }
                PolyRef::G { degree, index } => {
                    seed_g
                        .get_mut(degree)
                        .and_then(|l| l.get_mut(index))
                        .map(|s| *s += v)
                        .ok_or(Error::DanglingRef(r))?;
                }
            }
            Ok(())
        };
        match kind {
            PolyKind::Constant { .. } => {}
            PolyKind::Coordinate { index } => add(PolyRef::Coord { index: *index }, adj)?,
            PolyKind::Combination {
                base_terms,
                lower_terms,
            } => {
                for bt in base_terms {
                    let l_val = ref_value_point(bt.left, &self.f, &self.g, point)?;
                    match bt.right {
                        Some(r) => {
                            let r_val = ref_value_point(r, &self.f, &self.g, point)?;
                            add(bt.left, adj * bt.coef * r_val)?;
                            add(r, adj * bt.coef * l_val)?;
                        }
                        None => add(bt.left, adj * bt.coef)?,
                    }
                }
                for lt in lower_terms {
                    add(lt.poly, adj * lt.coef)?;
                }
            }
        }
        Ok(())
    }
}

fn ref_value_point(r: PolyRef, f: &[Vec<f64>], g: &[Vec<f64>], point: &DVector<f64>) -> Result<f64> {
    match r {
        PolyRef::F { degree, index } => f
            .get(degree)
            .and_then(|l| l.get(index))
            .copied()
            .ok_or(Error::DanglingRef(r)),
        PolyRef::G { degree, index } => g
            .get(degree)
            .and_then(|l| l.get(index))
            .copied()
            .ok_or(Error::DanglingRef(r)),
        PolyRef::Coord { index } => {
            if index < point.len() {
                Ok(point[index])
            } else {
                Err(Error::DimensionMismatch {
                    expected: point.len(),
                    got: index,
                    context: "coordinate index at evaluation",
                })
            }
        }
    }
}

fn eval_kind_point(
    kind: &PolyKind,
    f: &[Vec<f64>],
    g: &[Vec<f64>],
    point: &DVector<f64>,
) -> Result<f64> {
    match kind {
        PolyKind::Constant { value } => Ok(*value),
        PolyKind::Coordinate { index } => ref_value_point(PolyRef::Coord { index: *index }, f, g, point),
        PolyKind::Combination {
            base_terms,
            lower_terms,
        } => {
            let mut acc = 0.0;
            for bt in base_terms {
                let l = ref_value_point(bt.left, f, g, point)?;
                let r = match bt.right {
                    Some(rr) => ref_value_point(rr, f, g, point)?,
                    None => 1.0,
                };
                acc += bt.coef * l * r;
            }
            for lt in lower_terms {
                acc += lt.coef * ref_value_point(lt.poly, f, g, point)?;
            }
            Ok(acc)
        }
    }
}

/// Evaluation of one polynomial at one point.
pub fn evaluate(poly: &Polynomial, reg: &PolyRegistry, point: &DVector<f64>) -> Result<f64> {
    let vals = PointValues::compute(reg, point)?;
    vals.eval(poly, point)
}

/// Evaluation vectors of every registry entry over a point set, bottom-up.
#[derive(Debug, Clone)]
pub struct SetValues {
    pub f: Vec<Vec<DVector<f64>>>,
    pub g: Vec<Vec<DVector<f64>>>,
}

impl SetValues {
    pub fn compute(reg: &PolyRegistry, points: &PointSet) -> Result<Self> {
        if points.dim() != reg.dim {
            return Err(Error::DimensionMismatch {
                expected: reg.dim,
                got: points.dim(),
                context: "point set dimension",
            });
        }
        let mut f: Vec<Vec<DVector<f64>>> = Vec::with_capacity(reg.f_layers.len());
        let mut g: Vec<Vec<DVector<f64>>> = Vec::with_capacity(reg.g_layers.len());
        for layer in &reg.f_layers {
            let mut out = Vec::with_capacity(layer.len());
            for entry in layer {
                let raw = eval_kind_set(&entry.poly.kind, &f, &g, points)?;
                out.push(raw / entry.rescale);
            }
            f.push(out);
        }
        for layer in &reg.g_layers {
            let mut out = Vec::with_capacity(layer.len());
            for poly in layer {
                out.push(eval_kind_set(&poly.kind, &f, &g, points)?);
            }
            g.push(out);
        }
        Ok(SetValues { f, g })
    }

    pub fn eval_poly(&self, poly: &Polynomial, points: &PointSet) -> Result<DVector<f64>> {
        eval_kind_set(&poly.kind, &self.f, &self.g, points)
    }

    /// F evaluation matrix through `max_degree`, columns in `f_refs_through`
    /// order.
    pub fn f_matrix(&self, points: &PointSet, max_degree: usize) -> DMatrix<f64> {
        let cols: Vec<&DVector<f64>> = self
            .f
            .iter()
            .take(max_degree + 1)
            .flat_map(|l| l.iter())
            .collect();
        let mut m = DMatrix::zeros(points.len(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j, c);
        }
        m
    }

    /// Largest evaluation-vector norm over all G entries; None when G is empty.
    pub fn max_g_norm(&self) -> Option<f64> {
        self.g
            .iter()
            .flat_map(|l| l.iter())
            .map(|v| v.norm())
            .fold(None, |acc, n| Some(acc.map_or(n, |a: f64| a.max(n))))
    }
}

fn ref_value_set(
    r: PolyRef,
    f: &[Vec<DVector<f64>>],
    g: &[Vec<DVector<f64>>],
    points: &PointSet,
) -> Result<DVector<f64>> {
    match r {
        PolyRef::F { degree, index } => f
            .get(degree)
            .and_then(|l| l.get(index))
            .cloned()
            .ok_or(Error::DanglingRef(r)),
        PolyRef::G { degree, index } => g
            .get(degree)
            .and_then(|l| l.get(index))
            .cloned()
            .ok_or(Error::DanglingRef(r)),
        PolyRef::Coord { index } => {
            if index < points.dim() {
                Ok(points.matrix().column(index).into_owned())
            } else {
                Err(Error::DimensionMismatch {
                    expected: points.dim(),
                    got: index,
                    context: "coordinate index at evaluation",
                })
            }
        }
    }
}

fn eval_kind_set(
    kind: &PolyKind,
    f: &[Vec<DVector<f64>>],
    g: &[Vec<DVector<f64>>],
    points: &PointSet,
) -> Result<DVector<f64>> {
    let n = points.len();
    match kind {
        PolyKind::Constant { value } => Ok(DVector::repeat(n, *value)),
        PolyKind::Coordinate { index } => {
            ref_value_set(PolyRef::Coord { index: *index }, f, g, points)
        }
        PolyKind::Combination {
            base_terms,
            lower_terms,
        } => {
            let mut acc = DVector::zeros(n);
            for bt in base_terms {
                let l = ref_value_set(bt.left, f, g, points)?;
                match bt.right {
                    Some(rr) => {
                        let r = ref_value_set(rr, f, g, points)?;
                        for k in 0..n {
                            acc[k] += bt.coef * l[k] * r[k];
                        }
                    }
                    None => acc.axpy(bt.coef, &l, 1.0),
                }
            }
            for lt in lower_terms {
                let v = ref_value_set(lt.poly, f, g, points)?;
                acc.axpy(lt.coef, &v, 1.0);
            }
            Ok(acc)
        }
    }
}

/// Evaluation matrix of `polys` over `points` (one column per polynomial).
/// Column j equals pointwise evaluation of `polys[j]`, so any linear identity
/// between polynomials holds columnwise.
pub fn evaluate_matrix(
    polys: &[Polynomial],
    reg: &PolyRegistry,
    points: &PointSet,
) -> Result<DMatrix<f64>> {
    let vals = SetValues::compute(reg, points)?;
    let mut m = DMatrix::zeros(points.len(), polys.len());
    for (j, p) in polys.iter().enumerate() {
        let col = vals.eval_poly(p, points)?;
        m.set_column(j, &col);
    }
    Ok(m)
}

/// Exponent tuple (one entry per dimension) to coefficient.
pub type MonomialMap = BTreeMap<Vec<u32>, f64>;

/// Default degree cap for `expand_to_monomials`.
pub const ORACLE_DEGREE_CAP: usize = 6;

/// Expands a combination tree into explicit monomial coefficients. Intended
/// as a low-degree cross-check for tree evaluation; cost grows with the
/// monomial count, hence the cap.
pub fn expand_to_monomials(poly: &Polynomial, reg: &PolyRegistry) -> Result<MonomialMap> {
    expand_to_monomials_capped(poly, reg, ORACLE_DEGREE_CAP)
}

pub fn expand_to_monomials_capped(
    poly: &Polynomial,
    reg: &PolyRegistry,
    cap: usize,
) -> Result<MonomialMap> {
    if poly.degree > cap {
        return Err(Error::DegreeCapExceeded {
            degree: poly.degree,
            cap,
        });
    }
    let mut memo: std::collections::HashMap<PolyRef, MonomialMap> = std::collections::HashMap::new();
    expand_kind(&poly.kind, reg, &mut memo)
}

fn expand_ref(
    r: PolyRef,
    reg: &PolyRegistry,
    memo: &mut std::collections::HashMap<PolyRef, MonomialMap>,
) -> Result<MonomialMap> {
    if let Some(m) = memo.get(&r) {
        return Ok(m.clone());
    }
    let map = match r {
        PolyRef::Coord { index } => {
            if index >= reg.dim() {
                return Err(Error::DimensionMismatch {
                    expected: reg.dim(),
                    got: index,
                    context: "coordinate index in expansion",
                });
            }
            let mut exps = vec![0u32; reg.dim()];
            exps[index] = 1;
            let mut m = MonomialMap::new();
            m.insert(exps, 1.0);
            m
        }
        PolyRef::F { degree, index } => {
            let entry = reg
                .f_layer(degree)
                .get(index)
                .ok_or(Error::DanglingRef(r))?;
            let mut m = expand_kind(&entry.poly.kind, reg, memo)?;
            for v in m.values_mut() {
                *v /= entry.rescale;
            }
            m
        }
        PolyRef::G { .. } => {
            let poly = reg.resolve(r)?;
            expand_kind(&poly.kind, reg, memo)?
        }
    };
    memo.insert(r, map.clone());
    Ok(map)
}

fn expand_kind(
    kind: &PolyKind,
    reg: &PolyRegistry,
    memo: &mut std::collections::HashMap<PolyRef, MonomialMap>,
) -> Result<MonomialMap> {
    match kind {
        PolyKind::Constant { value } => {
            let mut m = MonomialMap::new();
            if *value != 0.0 {
                m.insert(vec![0u32; reg.dim()], *value);
            }
            Ok(m)
        }
        PolyKind::Coordinate { index } => expand_ref(PolyRef::Coord { index: *index }, reg, memo),
        PolyKind::Combination {
            base_terms,
            lower_terms,
        } => {
            let mut acc = MonomialMap::new();
            for bt in base_terms {
                let l = expand_ref(bt.left, reg, memo)?;
                let prod = match bt.right {
                    Some(rr) => {
                        let r = expand_ref(rr, reg, memo)?;
                        multiply_maps(&l, &r)
                    }
                    None => l,
                };
                accumulate(&mut acc, &prod, bt.coef);
            }
            for lt in lower_terms {
                let m = expand_ref(lt.poly, reg, memo)?;
                accumulate(&mut acc, &m, lt.coef);
            }
            acc.retain(|_, v| *v != 0.0);
            Ok(acc)
        }
    }
}

fn multiply_maps(a: &MonomialMap, b: &MonomialMap) -> MonomialMap {
    let mut out = MonomialMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let exps: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(exps).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn accumulate(acc: &mut MonomialMap, m: &MonomialMap, coef: f64) {
    for (e, c) in m {
        *acc.entry(e.clone()).or_insert(0.0) += coef * c;
    }
}

/// Evaluates a monomial map at a point; the independent arithmetic route used
/// to cross-check tree evaluation.
pub fn eval_monomials(map: &MonomialMap, point: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for (exps, coef) in map {
        let mut term = *coef;
        for (j, &e) in exps.iter().enumerate() {
            term *= point[j].powi(e as i32);
        }
        acc += term;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_dim_registry() -> PolyRegistry {
        // F0 = constant 0.5, F1 = {x0 - 1 (rescale 2), x1 (rescale 1)}
        let mut reg = PolyRegistry::with_constant(2, 4).unwrap();
        assert_eq!(reg.f_layer(0)[0].poly, Polynomial::constant(0.5));
        let f10 = Polynomial::combination(
            1,
            vec![ProductTerm {
                coef: 1.0,
                left: PolyRef::Coord { index: 0 },
                right: None,
            }],
            vec![LinearTerm {
                coef: -2.0,
                poly: PolyRef::F {
                    degree: 0,
                    index: 0,
                },
            }],
        );
        let f11 = Polynomial::combination(
            1,
            vec![ProductTerm {
                coef: 1.0,
                left: PolyRef::Coord { index: 1 },
                right: None,
            }],
            vec![],
        );
        reg.push_layer(
            1,
            vec![],
            vec![
                FEntry {
                    poly: f10,
                    rescale: 2.0,
                },
                FEntry {
                    poly: f11,
                    rescale: 1.0,
                },
            ],
        )
        .unwrap();
        reg
    }

    #[test]
    fn constant_and_coordinate_evaluate_directly() {
        let reg = PolyRegistry::with_constant(3, 9).unwrap();
        let p = DVector::from_vec(vec![2.0, -1.0, 7.0]);
        assert_eq!(evaluate(&Polynomial::constant(4.5), &reg, &p).unwrap(), 4.5);
        assert_eq!(evaluate(&Polynomial::coordinate(2), &reg, &p).unwrap(), 7.0);
        assert!(evaluate(&Polynomial::coordinate(3), &reg, &p).is_err());
    }

    #[test]
    fn combination_applies_rescale_divisors() {
        let reg = two_dim_registry();
        let p = DVector::from_vec(vec![3.0, 4.0]);
        // f10 evaluates to (3 - 1)/2 = 1, f11 to 4.
        let quad = Polynomial::combination(
            2,
            vec![ProductTerm {
                coef: 2.0,
                left: PolyRef::F {
                    degree: 1,
                    index: 0,
                },
                right: Some(PolyRef::F {
                    degree: 1,
                    index: 1,
                }),
            }],
            vec![LinearTerm {
                coef: -1.0,
                poly: PolyRef::F {
                    degree: 0,
                    index: 0,
                },
            }],
        );
        // 2*1*4 - 0.5 = 7.5
        assert_relative_eq!(evaluate(&quad, &reg, &p).unwrap(), 7.5);
    }

    #[test]
    fn dangling_reference_is_reported() {
        let reg = two_dim_registry();
        let p = DVector::from_vec(vec![0.0, 0.0]);
        let bad = Polynomial::combination(
            2,
            vec![],
            vec![LinearTerm {
                coef: 1.0,
                poly: PolyRef::F {
                    degree: 1,
                    index: 9,
                },
            }],
        );
        assert!(matches!(
            evaluate(&bad, &reg, &p),
            Err(Error::DanglingRef(_))
        ));
    }

    #[test]
    fn layer_installation_rejects_out_of_order_and_forward_refs() {
        let mut reg = PolyRegistry::with_constant(2, 4).unwrap();
        assert!(reg.push_layer(2, vec![], vec![]).is_err());
        // A degree-1 poly referencing the (not yet existing) F1 layer.
        let forward = Polynomial::combination(
            1,
            vec![],
            vec![LinearTerm {
                coef: 1.0,
                poly: PolyRef::F {
                    degree: 1,
                    index: 0,
                },
            }],
        );
        assert!(reg.push_layer(1, vec![forward], vec![]).is_err());
    }

    #[test]
    fn evaluation_matrix_columns_are_pointwise_evaluations() {
        let reg = two_dim_registry();
        let pts = PointSet::from_rows(&[vec![3.0, 4.0], vec![-1.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let polys = vec![Polynomial::coordinate(0), Polynomial::coordinate(1)];
        let m = evaluate_matrix(&polys, &reg, &pts).unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m.ncols(), 2);
        for i in 0..3 {
            for j in 0..2 {
                let v = evaluate(&polys[j], &reg, &pts.point(i)).unwrap();
                assert_relative_eq!(m[(i, j)], v, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn linear_combination_of_columns_matches_combined_tree() {
        let reg = two_dim_registry();
        let pts = PointSet::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0], vec![-4.0, 1.0]]).unwrap();
        let combo = Polynomial::combination(
            1,
            vec![],
            vec![
                LinearTerm {
                    coef: 0.7,
                    poly: PolyRef::F {
                        degree: 1,
                        index: 0,
                    },
                },
                LinearTerm {
                    coef: -1.3,
                    poly: PolyRef::F {
                        degree: 1,
                        index: 1,
                    },
                },
            ],
        );
        let vals = SetValues::compute(&reg, &pts).unwrap();
        let direct = vals.eval_poly(&combo, &pts).unwrap();
        let expected = &vals.f[1][0] * 0.7 + &vals.f[1][1] * -1.3;
        assert_relative_eq!((direct - expected).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn expansion_matches_hand_computed_coefficients() {
        let reg = two_dim_registry();
        // 2 * f10 * f11 - 1 * f00, with f10 = (x0 - 1)/2, f11 = x1, f00 = 0.5:
        // = x0*x1 - x1 - 0.5
        let quad = Polynomial::combination(
            2,
            vec![ProductTerm {
                coef: 2.0,
                left: PolyRef::F {
                    degree: 1,
                    index: 0,
                },
                right: Some(PolyRef::F {
                    degree: 1,
                    index: 1,
                }),
            }],
            vec![LinearTerm {
                coef: -1.0,
                poly: PolyRef::F {
                    degree: 0,
                    index: 0,
                },
            }],
        );
        let map = expand_to_monomials(&quad, &reg).unwrap();
        assert_relative_eq!(map[&vec![1, 1]], 1.0);
        assert_relative_eq!(map[&vec![0, 1]], -1.0);
        assert_relative_eq!(map[&vec![0, 0]], -0.5);
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn expansion_cap_is_enforced() {
        let reg = two_dim_registry();
        let p = Polynomial::combination(ORACLE_DEGREE_CAP + 1, vec![], vec![]);
        assert!(matches!(
            expand_to_monomials(&p, &reg),
            Err(Error::DegreeCapExceeded { .. })
        ));
    }

    /// Random registry for the tree-vs-monomial cross-check: a few layers of
    /// combinations with random coefficients and rescales.
    fn random_registry(
        dim: usize,
        max_degree: usize,
        coefs: &mut impl FnMut() -> f64,
    ) -> PolyRegistry {
        let mut reg = PolyRegistry::with_constant(dim, 5).unwrap();
        for t in 1..=max_degree {
            let mut f_entries = Vec::new();
            let mut g_polys = Vec::new();
            let per_layer = 2;
            for k in 0..per_layer {
                let base = if t == 1 {
                    vec![ProductTerm {
                        coef: coefs(),
                        left: PolyRef::Coord {
                            index: k % dim,
                        },
                        right: None,
                    }]
                } else {
                    let left_n = reg.f_layer(1).len();
                    let right_n = reg.f_layer(t - 1).len();
                    vec![ProductTerm {
                        coef: coefs(),
                        left: PolyRef::F {
                            degree: 1,
                            index: k % left_n,
                        },
                        right: Some(PolyRef::F {
                            degree: t - 1,
                            index: k % right_n,
                        }),
                    }]
                };
                let lower = vec![LinearTerm {
                    coef: coefs(),
                    poly: PolyRef::F {
                        degree: 0,
                        index: 0,
                    },
                }];
                let poly = Polynomial::combination(t, base, lower);
                if k == 0 {
                    f_entries.push(FEntry {
                        poly,
                        rescale: 0.5 + coefs().abs(),
                    });
                } else {
                    g_polys.push(poly);
                }
            }
            reg.push_layer(t, g_polys, f_entries).unwrap();
        }
        reg
    }

    proptest! {
        #[test]
        fn tree_evaluation_agrees_with_monomial_expansion(
            seedvals in proptest::collection::vec(-2.0f64..2.0, 40),
            px in -1.5f64..1.5,
            py in -1.5f64..1.5,
            pz in -1.5f64..1.5,
            dim in 1usize..4,
            max_degree in 1usize..5,
        ) {
            let mut idx = 0usize;
            let mut next = move || {
                let v = seedvals[idx % seedvals.len()];
                idx += 1;
                v
            };
            let reg = random_registry(dim, max_degree, &mut next);
            let point = DVector::from_vec(vec![px, py, pz][..dim].to_vec());
            let vals = PointValues::compute(&reg, &point).unwrap();
            for d in 0..=reg.top_degree() {
                for (i, entry) in reg.f_layer(d).iter().enumerate() {
                    let mut map = expand_to_monomials(&entry.poly, &reg).unwrap();
                    for v in map.values_mut() { *v /= entry.rescale; }
                    let oracle = eval_monomials(&map, &point);
                    let tree = vals.f[d][i];
                    prop_assert!((tree - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
                        "layer {} entry {}: tree {} vs oracle {}", d, i, tree, oracle);
                }
                for (i, poly) in reg.g_layer(d).iter().enumerate() {
                    let map = expand_to_monomials(poly, &reg).unwrap();
                    let oracle = eval_monomials(&map, &point);
                    let tree = vals.g[d][i];
                    prop_assert!((tree - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()));
                }
            }
        }
    }
}
