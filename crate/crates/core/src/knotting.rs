//! Data knotting: moving each point onto the joint zero set of the vanishing
//! polynomials while staying close to its source point, one independent
//! optimization per point.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::optimize::{minimize_with_grad, OptimizerParams, StopReason};
use crate::points::PointSet;
use crate::poly::{PointValues, PolyRegistry};

/// Shape of the per-point objective: the sum over degrees of vanishing
/// evaluation norms at the knot, plus `lambda` times the sum over spanning
/// layers `1..=reg_max_degree` of distances to the source point's spanning
/// evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotObjectiveSpec {
    pub lambda: f64,
    /// Regularization stops at the degree where the first vanishing
    /// polynomial was found; deeper spanning layers are unconstrained.
    pub reg_max_degree: usize,
    /// Square the norms (smooth variant) instead of summing them raw.
    pub squared_norms: bool,
}

impl KnotObjectiveSpec {
    pub fn from_registry(reg: &PolyRegistry, lambda: f64, squared_norms: bool) -> Self {
        let first_vanishing = (1..=reg.top_degree()).find(|&d| !reg.g_layer(d).is_empty());
        KnotObjectiveSpec {
            lambda,
            reg_max_degree: first_vanishing.unwrap_or_else(|| reg.top_degree()),
            squared_norms,
        }
    }
}

fn norm_term(sum_sq: f64, squared: bool) -> f64 {
    if squared {
        sum_sq
    } else {
        sum_sq.sqrt()
    }
}

fn objective_from_values(
    vals: &PointValues,
    anchor_f: &[Vec<f64>],
    spec: &KnotObjectiveSpec,
) -> f64 {
    let mut total = 0.0;
    for layer in &vals.g {
        if layer.is_empty() {
            continue;
        }
        let s: f64 = layer.iter().map(|v| v * v).sum();
        total += norm_term(s, spec.squared_norms);
    }
    for d in 1..=spec.reg_max_degree.min(vals.f.len().saturating_sub(1)) {
        let fz = &vals.f[d];
        let fx = &anchor_f[d];
        if fz.is_empty() {
            continue;
        }
        let s: f64 = fz.iter().zip(fx).map(|(a, b)| (a - b) * (a - b)).sum();
        total += spec.lambda * norm_term(s, spec.squared_norms);
    }
    total
}

/// The objective at `z` anchored to `x`, computed from scratch.
pub fn knot_objective(
    z: &DVector<f64>,
    x: &DVector<f64>,
    spec: &KnotObjectiveSpec,
    reg: &PolyRegistry,
) -> Result<f64> {
    let at_x = PointValues::compute(reg, x)?;
    let at_z = PointValues::compute(reg, z)?;
    Ok(objective_from_values(&at_z, &at_x.f, spec))
}

/// Exact objective gradient at the point whose values fill `vals`, by a
/// reverse sweep through the registry. At a norm's kink (an exactly zero
/// block) the zero subgradient is used.
fn gradient_from_values(
    vals: &PointValues,
    anchor_f: &[Vec<f64>],
    spec: &KnotObjectiveSpec,
    reg: &PolyRegistry,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut seed_g: Vec<Vec<f64>> = vals.g.iter().map(|l| vec![0.0; l.len()]).collect();
    for (d, layer) in vals.g.iter().enumerate() {
        if layer.is_empty() {
            continue;
        }
        if spec.squared_norms {
            for (s, v) in seed_g[d].iter_mut().zip(layer) {
                *s = 2.0 * v;
            }
        } else {
            let norm = layer.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (s, v) in seed_g[d].iter_mut().zip(layer) {
                    *s = v / norm;
                }
            }
        }
    }
    let mut seed_f: Vec<Vec<f64>> = vals.f.iter().map(|l| vec![0.0; l.len()]).collect();
    for d in 1..=spec.reg_max_degree.min(vals.f.len().saturating_sub(1)) {
        let fz = &vals.f[d];
        let fx = &anchor_f[d];
        if fz.is_empty() {
            continue;
        }
        if spec.squared_norms {
            for (i, s) in seed_f[d].iter_mut().enumerate() {
                *s = spec.lambda * 2.0 * (fz[i] - fx[i]);
            }
        } else {
            let norm = fz
                .iter()
                .zip(fx)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for (i, s) in seed_f[d].iter_mut().enumerate() {
                    *s = spec.lambda * (fz[i] - fx[i]) / norm;
                }
            }
        }
    }
    vals.backprop(reg, z, seed_f, seed_g)
}

/// Standalone objective gradient at `z` anchored to `x`.
pub fn knot_gradient(
    z: &DVector<f64>,
    x: &DVector<f64>,
    spec: &KnotObjectiveSpec,
    reg: &PolyRegistry,
) -> Result<DVector<f64>> {
    let at_x = PointValues::compute(reg, x)?;
    let at_z = PointValues::compute(reg, z)?;
    gradient_from_values(&at_z, &at_x.f, spec, reg, z)
}

#[derive(Debug, Clone)]
pub struct KnotOutcome {
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// The search hit a non-finite objective and kept the best iterate.
    pub nonfinite: bool,
}

/// Optimizes one knot from `z_init`, anchored to `x`. The result never has a
/// larger objective than the initial point.
pub fn knot_point(
    x: &DVector<f64>,
    z_init: &DVector<f64>,
    spec: &KnotObjectiveSpec,
    reg: &PolyRegistry,
    params: &OptimizerParams,
) -> Result<KnotOutcome> {
    if x.len() != reg.dim() || z_init.len() != reg.dim() {
        return Err(Error::DimensionMismatch {
            expected: reg.dim(),
            got: x.len().max(z_init.len()),
            context: "knot_point inputs",
        });
    }
    let anchor = PointValues::compute(reg, x)?;
    let mut buf = PointValues::compute(reg, z_init)?;
    let mut grad_buf = PointValues::compute(reg, z_init)?;
    let objective = |z: &DVector<f64>| -> f64 {
        match buf.recompute(reg, z) {
            Ok(()) => objective_from_values(&buf, &anchor.f, spec),
            Err(_) => f64::NAN,
        }
    };
    let gradient = |z: &DVector<f64>| -> Option<DVector<f64>> {
        grad_buf.recompute(reg, z).ok()?;
        gradient_from_values(&grad_buf, &anchor.f, spec, reg, z).ok()
    };
    let out = minimize_with_grad(objective, gradient, z_init, params);
    Ok(KnotOutcome {
        z: out.x,
        objective: out.value,
        iterations: out.iterations,
        stop: out.stop,
        nonfinite: out.nonfinite,
    })
}

#[derive(Debug, Clone)]
pub struct KnotBatch {
    pub knots: PointSet,
    /// Rows whose optimization touched a non-finite objective.
    pub optimizer_failures: usize,
}

/// Knots every point independently: row i starts from the current knot
/// `z.row(i)` and stays anchored to the original source `x.row(i)`.
pub fn knot_all(
    x: &PointSet,
    z: &PointSet,
    spec: &KnotObjectiveSpec,
    reg: &PolyRegistry,
    params: &OptimizerParams,
) -> Result<KnotBatch> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
            context: "knot_all row counts",
        });
    }
    let mut out = z.clone();
    let mut failures = 0;
    for i in 0..x.len() {
        let res = knot_point(&x.point(i), &z.point(i), spec, reg, params)?;
        if res.nonfinite {
            failures += 1;
        }
        if res.z.iter().all(|v| v.is_finite()) {
            out.set_row(i, &res.z)?;
        }
    }
    Ok(KnotBatch {
        knots: out,
        optimizer_failures: failures,
    })
}

/// Distance between two points through the rescaled spanning layers
/// `1..=through_degree`, concatenated into one feature vector. The degree-0
/// constant cancels in the difference and is skipped.
pub fn generalized_distance(
    x: &DVector<f64>,
    y: &DVector<f64>,
    reg: &PolyRegistry,
    through_degree: usize,
) -> Result<f64> {
    let at_x = PointValues::compute(reg, x)?;
    let at_y = PointValues::compute(reg, y)?;
    let mut sum = 0.0;
    for d in 1..=through_degree.min(reg.top_degree()) {
        for (a, b) in at_x.f[d].iter().zip(&at_y.f[d]) {
            sum += (a - b) * (a - b);
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{find_basis, generate_candidates};
    use crate::poly::{evaluate_matrix, LinearTerm, PolyRef, Polynomial, ProductTerm, SetValues};
    use crate::spectral::spectral_split;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Registry with one vanishing polynomial x0 - 2 and no spanning layers
    /// beyond the constant.
    fn shifted_line_registry() -> PolyRegistry {
        let mut reg = PolyRegistry::with_constant(1, 4).unwrap();
        let g = Polynomial::combination(
            1,
            vec![ProductTerm {
                coef: 1.0,
                left: PolyRef::Coord { index: 0 },
                right: None,
            }],
            vec![LinearTerm {
                coef: -4.0, // constant layer holds 1/sqrt(4) = 0.5
                poly: PolyRef::F { degree: 0, index: 0 },
            }],
        );
        reg.push_layer(1, vec![g], vec![]).unwrap();
        reg
    }

    fn circle_registry(pts: &PointSet, eps: f64) -> PolyRegistry {
        let mut reg = PolyRegistry::with_constant(2, pts.len()).unwrap();
        for t in 1..=2 {
            let cands = generate_candidates(&reg, t).unwrap();
            let layer = find_basis(&cands, &reg, pts, pts, eps, eps).unwrap();
            reg.push_layer(t, layer.g_polys, layer.f_entries).unwrap();
        }
        reg
    }

    fn unit_circle(n: usize) -> PointSet {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                vec![a.cos(), a.sin()]
            })
            .collect();
        PointSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn objective_is_the_vanishing_magnitude_on_a_line() {
        let reg = shifted_line_registry();
        let spec = KnotObjectiveSpec {
            lambda: 0.0,
            reg_max_degree: 1,
            squared_norms: false,
        };
        let z = DVector::from_vec(vec![5.0]);
        let x = DVector::from_vec(vec![0.0]);
        // |(5) - 2| = 3
        assert_relative_eq!(knot_objective(&z, &x, &spec, &reg).unwrap(), 3.0);
    }

    #[test]
    fn objective_is_zero_at_the_anchor_without_vanishing_terms() {
        let pts = unit_circle(8);
        let reg = circle_registry(&pts, 1e-6); // tiny eps: no vanishing survives? keep G possibly nonempty
        let spec = KnotObjectiveSpec {
            lambda: 3.5,
            reg_max_degree: 2,
            squared_norms: false,
        };
        let x = DVector::from_vec(vec![0.4, -0.3]);
        let g_total: usize = (0..=reg.top_degree()).map(|d| reg.g_layer(d).len()).sum();
        if g_total == 0 {
            assert_relative_eq!(knot_objective(&x, &x, &spec, &reg).unwrap(), 0.0);
        } else {
            // Regularization still contributes nothing at z = x.
            let with_g = knot_objective(&x, &x, &spec, &reg).unwrap();
            let spec0 = KnotObjectiveSpec { lambda: 0.0, ..spec };
            assert_relative_eq!(
                with_g,
                knot_objective(&x, &x, &spec0, &reg).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn objective_matches_recomputation_through_matrix_evaluation() {
        let pts = unit_circle(10);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec::from_registry(&reg, 0.7, false);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..5 {
            let z = DVector::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let x = DVector::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let fast = knot_objective(&z, &x, &spec, &reg).unwrap();

            // Oracle: per-layer norms via one-point evaluation matrices.
            let zp = PointSet::from_rows(&[z.iter().copied().collect()]).unwrap();
            let xp = PointSet::from_rows(&[x.iter().copied().collect()]).unwrap();
            let mut slow = 0.0;
            for d in 1..=reg.top_degree() {
                let g: Vec<Polynomial> = reg.g_layer(d).to_vec();
                if !g.is_empty() {
                    let m = evaluate_matrix(&g, &reg, &zp).unwrap();
                    slow += m.row(0).norm();
                }
            }
            for d in 1..=spec.reg_max_degree {
                let vz = SetValues::compute(&reg, &zp).unwrap();
                let vx = SetValues::compute(&reg, &xp).unwrap();
                let s: f64 = vz.f[d]
                    .iter()
                    .zip(&vx.f[d])
                    .map(|(a, b)| (a[0] - b[0]) * (a[0] - b[0]))
                    .sum();
                slow += spec.lambda * s.sqrt();
            }
            assert_relative_eq!(fast, slow, epsilon = 1e-10);
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let circle = circle_registry(&unit_circle(10), 0.05);
        let mut rng = StdRng::seed_from_u64(23);
        let rand_rows: Vec<Vec<f64>> = (0..14)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rand_pts = PointSet::from_rows(&rand_rows).unwrap();
        let mut deep = PolyRegistry::with_constant(3, rand_pts.len()).unwrap();
        for t in 1..=3 {
            let cands = generate_candidates(&deep, t).unwrap();
            let layer = find_basis(&cands, &deep, &rand_pts, &rand_pts, 0.4, 0.4).unwrap();
            deep.push_layer(t, layer.g_polys, layer.f_entries).unwrap();
        }

        for reg in [&circle, &deep] {
            let dim = reg.dim();
            for &squared in &[false, true] {
                let spec = KnotObjectiveSpec::from_registry(reg, 0.7, squared);
                for _ in 0..6 {
                    let z = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
                    let x = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
                    let g = knot_gradient(&z, &x, &spec, reg).unwrap();
                    for j in 0..dim {
                        let h = 1e-6 * (1.0 + z[j].abs());
                        let mut zp = z.clone();
                        zp[j] += h;
                        let mut zm = z.clone();
                        zm[j] -= h;
                        let fd = (knot_objective(&zp, &x, &spec, reg).unwrap()
                            - knot_objective(&zm, &x, &spec, reg).unwrap())
                            / (2.0 * h);
                        assert_relative_eq!(g[j], fd, epsilon = 1e-6, max_relative = 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn knot_point_descends_to_the_circle() {
        let pts = unit_circle(12);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec {
            lambda: 0.0,
            reg_max_degree: 1,
            squared_norms: false,
        };
        // Start inside radius sqrt(2): beyond it a quasi-Newton step can jump
        // to the interior stationary point of |r^2 - 1| and still pass the
        // line search. Anchoring (lambda > 0) prevents that in production.
        let start = DVector::from_vec(vec![1.3, 0.2]);
        let out = knot_point(&start, &start, &spec, &reg, &OptimizerParams::default()).unwrap();
        assert!((out.z.norm() - 1.0).abs() <= 1e-4, "radius {}", out.z.norm());
        assert!(out.objective <= knot_objective(&start, &start, &spec, &reg).unwrap());
    }

    #[test]
    fn huge_lambda_pins_the_knot_to_its_anchor() {
        let pts = unit_circle(12);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec {
            lambda: 1e9,
            reg_max_degree: 2,
            squared_norms: false,
        };
        let x = DVector::from_vec(vec![1.4, 0.3]);
        let z0 = DVector::from_vec(vec![0.6, -0.5]);
        let out = knot_point(&x, &z0, &spec, &reg, &OptimizerParams::default()).unwrap();
        assert!((&out.z - &x).norm() <= 1e-4, "drift {}", (&out.z - &x).norm());
    }

    #[test]
    fn knotting_never_increases_the_objective() {
        let pts = unit_circle(9);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec::from_registry(&reg, 0.5, false);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let x = DVector::from_vec(vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]);
            let z = DVector::from_vec(vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]);
            let before = knot_objective(&z, &x, &spec, &reg).unwrap();
            let out = knot_point(&x, &z, &spec, &reg, &OptimizerParams::default()).unwrap();
            assert!(out.objective <= before + 1e-12);
        }
    }

    #[test]
    fn identical_rows_knot_identically_and_permutations_commute() {
        let pts = unit_circle(10);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec::from_registry(&reg, 1.0, false);
        let params = OptimizerParams::default();
        let x = PointSet::from_rows(&[
            vec![1.3, 0.2],
            vec![0.4, -0.9],
            vec![1.3, 0.2], // duplicate of row 0
        ])
        .unwrap();
        let batch = knot_all(&x, &x, &spec, &reg, &params).unwrap();
        assert_eq!(batch.knots.point(0), batch.knots.point(2));

        let perm = [1usize, 2, 0];
        let xp = x.select_rows(&perm).unwrap();
        let batch_p = knot_all(&xp, &xp, &spec, &reg, &params).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(batch_p.knots.point(new_row), batch.knots.point(old_row));
        }
    }

    #[test]
    fn points_already_on_the_variety_stay_put() {
        let pts = unit_circle(12);
        let reg = circle_registry(&pts, 0.05);
        let spec = KnotObjectiveSpec::from_registry(&reg, 1.0, false);
        let batch = knot_all(&pts, &pts, &spec, &reg, &OptimizerParams::default()).unwrap();
        let drift = (batch.knots.matrix() - pts.matrix()).norm();
        assert!(drift <= 1e-6, "drift {drift}");
    }

    #[test]
    fn noisy_circle_knots_move_toward_the_radius() {
        let mut rng = StdRng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..24)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64) / 24.0;
                vec![
                    a.cos() + 0.05 * rng.gen_range(-1.0..1.0),
                    a.sin() + 0.05 * rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let pts = PointSet::from_rows(&rows).unwrap();
        // 0.1 sits between the noise-level and functional singular values of
        // the rescaled degree-2 products, so exactly the circle relation
        // vanishes.
        let reg = circle_registry(&pts, 0.1);
        let spec = KnotObjectiveSpec::from_registry(&reg, 0.1, false);
        let batch = knot_all(&pts, &pts, &spec, &reg, &OptimizerParams::default()).unwrap();
        let mean_dev = |ps: &PointSet| {
            (0..ps.len())
                .map(|i| (ps.point(i).norm() - 1.0).abs())
                .sum::<f64>()
                / ps.len() as f64
        };
        assert!(mean_dev(&batch.knots) < mean_dev(&pts));
    }

    #[test]
    fn reg_max_degree_is_the_first_vanishing_degree() {
        let pts = unit_circle(8);
        let reg = circle_registry(&pts, 0.05);
        // No degree-1 vanishing on a centered circle; the first is degree 2.
        assert!(reg.g_layer(1).is_empty());
        assert!(!reg.g_layer(2).is_empty());
        let spec = KnotObjectiveSpec::from_registry(&reg, 1.0, false);
        assert_eq!(spec.reg_max_degree, 2);
    }

    #[test]
    fn generalized_distance_is_a_symmetric_premetric() {
        let pts = unit_circle(10);
        let reg = circle_registry(&pts, 0.05);
        let x = DVector::from_vec(vec![0.3, 0.8]);
        let y = DVector::from_vec(vec![-0.6, 0.1]);
        let dxy = generalized_distance(&x, &y, &reg, 2).unwrap();
        let dyx = generalized_distance(&y, &x, &reg, 2).unwrap();
        assert_relative_eq!(dxy, dyx, epsilon = 1e-12);
        assert!(dxy > 0.0);
        assert_relative_eq!(
            generalized_distance(&x, &x, &reg, 2).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degree_one_distance_matches_the_explicit_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..3 {
            let n = 14;
            let d = 3;
            let mut m = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
            // Mean-center and stretch one direction so the spectrum splits.
            for j in 0..d {
                let mean = m.column(j).mean();
                for i in 0..n {
                    m[(i, j)] -= mean;
                }
            }
            for i in 0..n {
                m[(i, 0)] *= 4.0;
            }
            let pts = PointSet::new(m.clone()).unwrap();

            // Degree-1 construction with eta below the smallest singular
            // value: every direction is kept as spanning.
            let probe = spectral_split(&m, 0.0).unwrap();
            let eps = (probe.singular_values[0] + probe.singular_values[1]) / 2.0;
            let mut reg = PolyRegistry::with_constant(d, n).unwrap();
            let cands = generate_candidates(&reg, 1).unwrap();
            let layer = find_basis(&cands, &reg, &pts, &pts, eps, 1e-10).unwrap();
            assert!(layer.g_polys.is_empty());
            assert_eq!(layer.f_entries.len(), d);
            reg.push_layer(1, layer.g_polys.clone(), layer.f_entries.clone())
                .unwrap();

            // Explicit inverse form from the split factors of the centered
            // data: V_above W E^-2 W^T V_above^T + V_below V~ D^-2 V~^T V_below^T.
            let centered = &m; // columns were centered above
            let s0 = spectral_split(centered, eps).unwrap();
            let mv = centered * &s0.right_below;
            let sv = spectral_split(&mv, 1e-10).unwrap();
            let ms = centered * &s0.right_above;
            let ss = spectral_split(&ms, 1e-10).unwrap();
            let mut sigma_inv = DMatrix::zeros(d, d);
            let span_dirs = &s0.right_above * &ss.right_above;
            for k in 0..span_dirs.ncols() {
                let v = span_dirs.column(k);
                let s = ss.singular_values[k];
                sigma_inv += (&v * v.transpose()) / (s * s);
            }
            let van_dirs = &s0.right_below * &sv.right_above;
            for k in 0..van_dirs.ncols() {
                let v = van_dirs.column(k);
                let s = sv.singular_values[k];
                sigma_inv += (&v * v.transpose()) / (s * s);
            }

            for _ in 0..4 {
                let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
                let y = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
                let gd = generalized_distance(&x, &y, &reg, 1).unwrap();
                let diff = &x - &y;
                let quad = (diff.transpose() * &sigma_inv * &diff)[(0, 0)];
                assert_relative_eq!(gd * gd, quad, max_relative = 1e-6);
            }
        }
    }
}
