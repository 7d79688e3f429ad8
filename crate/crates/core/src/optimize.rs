//! Quasi-Newton minimizer for small dense problems. BFGS on the inverse
//! Hessian, backtracking line search, central-difference gradients. The
//! objective is treated as a black box; non-finite values are handled by
//! rejecting the probe and falling back to the best iterate seen.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub max_iters: usize,
    /// Stop when the gradient infinity norm drops to this.
    pub grad_tol: f64,
    /// Stop when an accepted step is this short.
    pub step_tol: f64,
    /// Central-difference step is `fd_rel_step * (1 + |x_j|)` per coordinate.
    pub fd_rel_step: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            max_iters: 200,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            fd_rel_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFiniteObjective,
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// True when the objective produced a non-finite value at any probe.
    pub nonfinite: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_ALPHA: f64 = 1e-14;

/// Minimizes `f` from `x0` with central-difference gradients. The returned
/// value never exceeds `f(x0)` when `f(x0)` is finite: only strictly
/// improving steps are accepted.
pub fn minimize<F: FnMut(&DVector<f64>) -> f64>(
    f: F,
    x0: &DVector<f64>,
    params: &OptimizerParams,
) -> OptimOutcome {
    let cell = std::cell::RefCell::new(f);
    let value = |x: &DVector<f64>| (cell.borrow_mut())(x);
    let mut gradient =
        |x: &DVector<f64>, nonfinite: &mut bool| fd_gradient(&value, x, params, nonfinite);
    minimize_core(&value, &mut gradient, x0, params)
}

/// Same search, but gradients come from `grad`; `None` or non-finite entries
/// abort the run like a non-finite objective would.
pub fn minimize_with_grad<F, G>(
    f: F,
    mut grad: G,
    x0: &DVector<f64>,
    params: &OptimizerParams,
) -> OptimOutcome
where
    F: FnMut(&DVector<f64>) -> f64,
    G: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
{
    let cell = std::cell::RefCell::new(f);
    let value = |x: &DVector<f64>| (cell.borrow_mut())(x);
    let mut gradient = |x: &DVector<f64>, nonfinite: &mut bool| match grad(x) {
        Some(g) if g.iter().all(|v| v.is_finite()) => Some(g),
        _ => {
            *nonfinite = true;
            None
        }
    };
    minimize_core(&value, &mut gradient, x0, params)
}

fn minimize_core<F, G>(f: &F, gradf: &mut G, x0: &DVector<f64>, params: &OptimizerParams) -> OptimOutcome
where
    F: Fn(&DVector<f64>) -> f64,
    G: FnMut(&DVector<f64>, &mut bool) -> Option<DVector<f64>>,
{
    let n = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut nonfinite = false;
    if !fx.is_finite() {
        return OptimOutcome {
            x,
            value: fx,
            iterations: 0,
            stop: StopReason::NonFiniteObjective,
            nonfinite: true,
        };
    }

    let mut h = DMatrix::<f64>::identity(n, n);
    let mut grad = match gradf(&x, &mut nonfinite) {
        Some(g) => g,
        None => {
            return OptimOutcome {
                x,
                value: fx,
                iterations: 0,
                stop: StopReason::NonFiniteObjective,
                nonfinite: true,
            }
        }
    };

    let mut iterations = 0;
    let stop = loop {
        if grad.amax() <= params.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= params.max_iters {
            break StopReason::MaxIterations;
        }
        iterations += 1;

        let mut dir = -(&h * &grad);
        let mut slope = dir.dot(&grad);
        if !(slope < 0.0) {
            // Curvature information went bad; restart from steepest descent.
            h = DMatrix::identity(n, n);
            dir = -grad.clone();
            slope = dir.dot(&grad);
            if !(slope < 0.0) {
                break StopReason::GradientTolerance;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= MIN_ALPHA {
            let cand = &x + &dir * alpha;
            let fc = f(&cand);
            if fc.is_finite() {
                if fc <= fx + ARMIJO_C1 * alpha * slope {
                    accepted = Some((cand, fc));
                    break;
                }
            } else {
                nonfinite = true;
            }
            alpha *= BACKTRACK;
        }
        let (x_new, f_new) = match accepted {
            Some(a) => a,
            None => break StopReason::LineSearchFailed,
        };

        let step = &x_new - &x;
        let step_norm = step.norm();
        x = x_new;
        fx = f_new;
        if step_norm <= params.step_tol {
            break StopReason::StepTolerance;
        }

        let grad_new = match gradf(&x, &mut nonfinite) {
            Some(g) => g,
            None => break StopReason::NonFiniteObjective,
        };
        let y = &grad_new - &grad;
        let sy = step.dot(&y);
        if sy > 1e-10 * step_norm * y.norm() {
            // BFGS update of the inverse Hessian:
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // Expanded form avoids building the rank-1 projectors.
            let c = (1.0 + rho * yhy) * rho;
            h += c * (&step * step.transpose());
            let hy_s = &hy * step.transpose();
            h -= rho * (&hy_s + hy_s.transpose());
        }
        grad = grad_new;
    };

    OptimOutcome {
        x,
        value: fx,
        iterations,
        stop,
        nonfinite,
    }
}

fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x: &DVector<f64>,
    params: &OptimizerParams,
    nonfinite: &mut bool,
) -> Option<DVector<f64>> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut probe = x.clone();
    for j in 0..n {
        let hj = params.fd_rel_step * (1.0 + x[j].abs());
        probe[j] = x[j] + hj;
        let fp = f(&probe);
        probe[j] = x[j] - hj;
        let fm = f(&probe);
        probe[j] = x[j];
        if !fp.is_finite() || !fm.is_finite() {
            *nonfinite = true;
            return None;
        }
        g[j] = (fp - fm) / (2.0 * hj);
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_reaches_the_minimum() {
        let f = |x: &DVector<f64>| {
            let a = x[0] - 2.0;
            let b = x[1] + 1.0;
            3.0 * a * a + 0.5 * b * b + a * b
        };
        let out = minimize(f, &DVector::from_vec(vec![10.0, -7.0]), &OptimizerParams::default());
        assert!(out.value <= f(&DVector::from_vec(vec![10.0, -7.0])));
        // Unique minimizer of the positive definite form.
        assert!((out.x[0] - 2.0).abs() < 1e-4, "x = {}", out.x);
        assert!((out.x[1] + 1.0).abs() < 1e-4);
        assert!(!out.nonfinite);
    }

    #[test]
    fn rosenbrock_valley_is_traversed() {
        let f = |x: &DVector<f64>| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let start = DVector::from_vec(vec![-1.2, 1.0]);
        let out = minimize(f, &start, &OptimizerParams::default());
        assert!(out.value < 1e-6, "value = {}", out.value);
        assert!((out.x[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn nonsmooth_objective_still_descends() {
        let f = |x: &DVector<f64>| x[0].abs() + 0.5 * x[1].abs();
        let start = DVector::from_vec(vec![3.0, -2.0]);
        let f0 = f(&start);
        let out = minimize(f, &start, &OptimizerParams::default());
        assert!(out.value <= f0);
        assert!(out.value < 1e-3, "value = {}", out.value);
    }

    #[test]
    fn non_finite_region_reverts_to_best_iterate() {
        // NaN wall left of zero; minimum sits against it.
        let f = |x: &DVector<f64>| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 0.5) * (x[0] - 0.5)
            }
        };
        let start = DVector::from_vec(vec![4.0]);
        let out = minimize(f, &start, &OptimizerParams::default());
        assert!(out.value.is_finite());
        assert!(out.value <= f(&start));
    }

    #[test]
    fn immediate_non_finite_start_is_reported() {
        let f = |_: &DVector<f64>| f64::NAN;
        let out = minimize(f, &DVector::from_vec(vec![1.0]), &OptimizerParams::default());
        assert_eq!(out.stop, StopReason::NonFiniteObjective);
        assert!(out.nonfinite);
    }
}
