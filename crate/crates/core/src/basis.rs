//! Degree-by-degree construction of spanning and vanishing polynomial layers.
//!
//! Each degree starts from candidate products of previously kept spanning
//! polynomials, removes everything expressible at lower degree (projection on
//! the knot evaluations), then splits the remainder twice: once on the source
//! points at epsilon to separate vanishing directions, and once on the knots
//! at the current intermediate threshold to decide what survives there.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::model::{ConfigEcho, DegreeStats, Diagnostics, KnotModel, VcaConfig};
use crate::points::PointSet;
use crate::poly::{
    FEntry, LinearTerm, PolyKind, PolyRef, PolyRegistry, Polynomial, ProductTerm, SetValues,
};
use crate::spectral::{pseudo_inverse, spectral_split};

/// Candidate polynomials for one degree, prior to residualization. Degree 1
/// is the coordinates; degree t is every ordered product of a degree-(t-1)
/// spanning entry with a degree-1 spanning entry. Duplicate products are kept;
/// the spectral split absorbs the rank deficiency.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub degree: usize,
    pub polys: Vec<Polynomial>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }
}

/// Builds the candidate set for `degree` from the registry's spanning layers.
/// Empty when either contributing layer is empty (the construction's natural
/// termination signal).
pub fn generate_candidates(reg: &PolyRegistry, degree: usize) -> Result<CandidateSet> {
    if degree == 0 {
        return Err(Error::invalid_config("candidates start at degree 1"));
    }
    let polys = if degree == 1 {
        (0..reg.dim()).map(Polynomial::coordinate).collect()
    } else {
        let n_prev = reg.f_layer(degree - 1).len();
        let n_one = reg.f_layer(1).len();
        let mut out = Vec::with_capacity(n_prev * n_one);
        for p in 0..n_prev {
            for q in 0..n_one {
                out.push(Polynomial::combination(
                    degree,
                    vec![ProductTerm {
                        coef: 1.0,
                        left: PolyRef::F {
                            degree: degree - 1,
                            index: p,
                        },
                        right: Some(PolyRef::F { degree: 1, index: q }),
                    }],
                    vec![],
                ));
            }
        }
        out
    };
    Ok(CandidateSet { degree, polys })
}

/// Candidates with their lower-degree content removed: the projection of each
/// candidate's knot evaluation onto the span of the existing spanning
/// evaluations, subtracted as explicit lower terms.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    pub degree: usize,
    pub polys: Vec<Polynomial>,
    /// Residual evaluations on the projection points (one column each).
    pub on_points: DMatrix<f64>,
    /// Projection coefficients, one column per candidate, rows ordered like
    /// `f_refs`.
    pub coeffs: DMatrix<f64>,
    pub f_refs: Vec<PolyRef>,
}

/// Projects the candidates against spanning layers `0..=through_degree`
/// evaluated on `points`.
pub fn residualize(
    cands: &CandidateSet,
    reg: &PolyRegistry,
    points: &PointSet,
    through_degree: usize,
) -> Result<ResidualSet> {
    check_candidates(cands)?;
    let vals = SetValues::compute(reg, points)?;
    let mut tilde = DMatrix::zeros(points.len(), cands.polys.len());
    for (j, c) in cands.polys.iter().enumerate() {
        tilde.set_column(j, &vals.eval_poly(c, points)?);
    }
    let f_refs = reg.f_refs_through(through_degree);
    let fm = vals.f_matrix(points, through_degree);
    let coeffs = pseudo_inverse(&fm)? * &tilde;
    let on_points = &tilde - &fm * &coeffs;

    let polys = cands
        .polys
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let mut base = base_terms_of(cand, 1.0);
            let mut lower = Vec::new();
            for (j, r) in f_refs.iter().enumerate() {
                let c = -coeffs[(j, i)];
                if c != 0.0 {
                    lower.push(LinearTerm { coef: c, poly: *r });
                }
            }
            // Coordinate candidates become combinations with one base term.
            if base.is_empty() {
                if let PolyKind::Coordinate { index } = cand.kind() {
                    base.push(ProductTerm {
                        coef: 1.0,
                        left: PolyRef::Coord { index: *index },
                        right: None,
                    });
                }
            }
            Polynomial::combination(cands.degree, base, lower)
        })
        .collect();

    Ok(ResidualSet {
        degree: cands.degree,
        polys,
        on_points,
        coeffs,
        f_refs,
    })
}

fn check_candidates(cands: &CandidateSet) -> Result<()> {
    for c in &cands.polys {
        let ok = match c.kind() {
            PolyKind::Coordinate { .. } => cands.degree == 1,
            PolyKind::Combination { lower_terms, .. } => lower_terms.is_empty(),
            PolyKind::Constant { .. } => false,
        };
        if !ok || c.degree() != cands.degree {
            return Err(Error::invalid_config(
                "candidates must be bare coordinates or products without lower terms".to_string(),
            ));
        }
    }
    Ok(())
}

fn base_terms_of(cand: &Polynomial, scale: f64) -> Vec<ProductTerm> {
    match cand.kind() {
        PolyKind::Coordinate { index } => vec![ProductTerm {
            coef: scale,
            left: PolyRef::Coord { index: *index },
            right: None,
        }],
        PolyKind::Combination { base_terms, .. } => base_terms
            .iter()
            .map(|bt| ProductTerm {
                coef: scale * bt.coef,
                left: bt.left,
                right: bt.right,
            })
            .collect(),
        PolyKind::Constant { .. } => Vec::new(),
    }
}

/// One constructed degree: vanishing polynomials, spanning entries with their
/// rescale divisors, and the singular-value bookkeeping behind the split.
#[derive(Debug, Clone)]
pub struct BasisLayer {
    pub degree: usize,
    pub g_polys: Vec<Polynomial>,
    pub f_entries: Vec<FEntry>,
    /// Spectrum of the residual candidates on the source points.
    pub sv_source: Vec<f64>,
    /// Spectrum of the source-vanishing block on the knots.
    pub sv_knot_vanishing: Vec<f64>,
    /// Spectrum of the source-spanning block on the knots.
    pub sv_knot_spanning: Vec<f64>,
    /// Source-spanning directions dropped for vanishing on the knots.
    pub discarded_spanning: usize,
}

/// Splits one degree of candidates into vanishing and spanning parts.
///
/// Residualization and the knot-side splits run against `knots`; the
/// epsilon split runs against `source`. Vanishing outputs satisfy
/// `||g(source)|| <= epsilon` and `||g(knots)|| <= eta` up to rounding;
/// spanning outputs carry rescale divisors that normalize their knot
/// evaluation vectors.
pub fn find_basis(
    cands: &CandidateSet,
    reg: &PolyRegistry,
    knots: &PointSet,
    source: &PointSet,
    epsilon: f64,
    eta: f64,
) -> Result<BasisLayer> {
    for (value, name) in [(epsilon, "epsilon"), (eta, "eta")] {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid_config(format!(
                "{name} must be finite and nonnegative, got {value}"
            )));
        }
    }
    if knots.len() != source.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            got: knots.len(),
            context: "knot count vs source count",
        });
    }
    let t = cands.degree;
    let mut layer = BasisLayer {
        degree: t,
        g_polys: Vec::new(),
        f_entries: Vec::new(),
        sv_source: Vec::new(),
        sv_knot_vanishing: Vec::new(),
        sv_knot_spanning: Vec::new(),
        discarded_spanning: 0,
    };
    if cands.is_empty() {
        return Ok(layer);
    }

    let through = t - 1;
    let res = residualize(cands, reg, knots, through)?;

    // Residual evaluations on the source points reuse the same projection
    // coefficients, so source and knot columns describe the same polynomials.
    let svx = SetValues::compute(reg, source)?;
    let mut tilde_x = DMatrix::zeros(source.len(), cands.polys.len());
    for (j, c) in cands.polys.iter().enumerate() {
        tilde_x.set_column(j, &svx.eval_poly(c, source)?);
    }
    let fx = svx.f_matrix(source, through);
    let cx = &tilde_x - &fx * &res.coeffs;
    let cz = &res.on_points;

    let split_source = spectral_split(&cx, epsilon)?;
    let m_vanish = cz * &split_source.right_below;
    let split_vanish = spectral_split(&m_vanish, eta)?;
    let m_span = cz * &split_source.right_above;
    let split_span = spectral_split(&m_span, eta)?;

    layer.sv_source = split_source.singular_values.iter().copied().collect();
    layer.sv_knot_vanishing = split_vanish.singular_values.iter().copied().collect();
    layer.sv_knot_spanning = split_span.singular_values.iter().copied().collect();
    layer.discarded_spanning = split_span.n_below();

    let g_coeffs = &split_source.right_below * &split_vanish.right_below;
    for j in 0..g_coeffs.ncols() {
        layer.g_polys.push(flatten(
            t,
            &cands.polys,
            g_coeffs.column(j),
            &res.coeffs,
            &res.f_refs,
        ));
    }

    // Spanning part: source-spanning directions that survive on the knots,
    // then source-vanishing directions that do not vanish there. Each entry's
    // rescale divisor is its knot evaluation norm, which equals the singular
    // value of its block.
    let f_span_coeffs = &split_source.right_above * &split_span.right_above;
    for j in 0..f_span_coeffs.ncols() {
        layer.f_entries.push(FEntry {
            poly: flatten(
                t,
                &cands.polys,
                f_span_coeffs.column(j),
                &res.coeffs,
                &res.f_refs,
            ),
            rescale: split_span.singular_values[j],
        });
    }
    let f_vanish_coeffs = &split_source.right_below * &split_vanish.right_above;
    for j in 0..f_vanish_coeffs.ncols() {
        layer.f_entries.push(FEntry {
            poly: flatten(
                t,
                &cands.polys,
                f_vanish_coeffs.column(j),
                &res.coeffs,
                &res.f_refs,
            ),
            rescale: split_vanish.singular_values[j],
        });
    }

    Ok(layer)
}

/// Linear combination of residual candidates as a single flat polynomial:
/// scaled candidate products as base terms, the combined projection as lower
/// terms.
fn flatten(
    degree: usize,
    cands: &[Polynomial],
    weights: DVectorView<f64>,
    coeffs: &DMatrix<f64>,
    f_refs: &[PolyRef],
) -> Polynomial {
    let mut base = Vec::new();
    for (i, cand) in cands.iter().enumerate() {
        let wi = weights[i];
        if wi == 0.0 {
            continue;
        }
        base.extend(base_terms_of(cand, wi));
    }
    let w: DVector<f64> = weights.into_owned();
    let lw = coeffs * w;
    let mut lower = Vec::new();
    for (j, r) in f_refs.iter().enumerate() {
        let c = -lw[j];
        if c != 0.0 {
            lower.push(LinearTerm { coef: c, poly: *r });
        }
    }
    Polynomial::combination(degree, base, lower)
}

/// Knot-free baseline: iterate the basis split with the source points as
/// knots and eta pinned to epsilon until no candidates remain.
pub fn vca_fit(x: &PointSet, cfg: &VcaConfig) -> Result<KnotModel> {
    cfg.validate()?;
    let mut reg = PolyRegistry::with_constant(x.dim(), x.len())?;
    let mut diag = Diagnostics {
        eta_trace: vec![cfg.epsilon],
        final_eta: cfg.epsilon,
        ..Diagnostics::default()
    };
    let mut t = 1;
    loop {
        let cands = generate_candidates(&reg, t)?;
        if cands.is_empty() {
            break;
        }
        if t > cfg.max_degree {
            diag.truncated = true;
            break;
        }
        let layer = find_basis(&cands, &reg, x, x, cfg.epsilon, cfg.epsilon)?;
        diag.discarded_spanning += layer.discarded_spanning;
        reg.push_layer(t, layer.g_polys, layer.f_entries)?;
        t += 1;
    }
    finish_diagnostics(&mut diag, &reg, x, x)?;
    Ok(KnotModel {
        config: ConfigEcho::Vca(cfg.clone()),
        registry: reg,
        knots: x.clone(),
        diagnostics: diag,
    })
}

/// Records final layer sizes and re-evaluates the vanishing norms from the
/// stored trees.
pub(crate) fn finish_diagnostics(
    diag: &mut Diagnostics,
    reg: &PolyRegistry,
    source: &PointSet,
    knots: &PointSet,
) -> Result<()> {
    diag.degree_log = (0..=reg.top_degree())
        .map(|d| DegreeStats {
            degree: d,
            n_vanishing: reg.g_layer(d).len(),
            n_spanning: reg.f_layer(d).len(),
        })
        .collect();
    let on_source = SetValues::compute(reg, source)?;
    diag.max_g_norm_source = on_source.max_g_norm().unwrap_or(0.0);
    let on_knots = SetValues::compute(reg, knots)?;
    diag.max_g_norm_knots = on_knots.max_g_norm().unwrap_or(0.0);
    Ok(())
}
