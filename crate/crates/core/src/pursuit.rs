//! The joint fitting driver: builds the basis degree by degree, interleaving
//! knot optimization with threshold cooling until every vanishing polynomial
//! is small on the knots, restarting from scratch at a cooler threshold when
//! the construction exhausts itself with the contract unmet.

use crate::basis::{find_basis, finish_diagnostics, generate_candidates};
use crate::error::Result;
use crate::knotting::{knot_all, KnotObjectiveSpec};
use crate::model::{ConfigEcho, Diagnostics, KnotAnchor, KnotModel, PursuitConfig, ResetEvent};
use crate::points::PointSet;
use crate::poly::{PolyRegistry, SetValues};

/// Absolute slack on the knot-side vanishing contract; keeps the stopping
/// test robust to rounding in the norm computation.
pub const DELTA_SLACK: f64 = 1e-8;

/// One cooling step: shrink by `gamma`, never past the current worst
/// vanishing norm (when one exists), and snap to the floor `delta` once the
/// remaining gap is below `eta_floor_snap`.
pub fn cool_eta(eta: f64, max_g_norm: Option<f64>, cfg: &PursuitConfig) -> f64 {
    let mut next = cfg.gamma * eta;
    if let Some(m) = max_g_norm {
        next = next.min(m);
    }
    if next <= cfg.delta + cfg.eta_floor_snap {
        cfg.delta
    } else {
        next
    }
}

fn worst_g_norm(reg: &PolyRegistry, z: &PointSet) -> Result<f64> {
    Ok(SetValues::compute(reg, z)?.max_g_norm().unwrap_or(0.0))
}

/// Refines the top layer in place: alternate knot optimization with rebuilds
/// of the layer at progressively cooler thresholds, until the vanishing
/// polynomials are small on the knots or the threshold reaches its floor.
/// Returns the updated knots.
pub fn exact_vanish_pursuit(
    reg: &mut PolyRegistry,
    x0: &PointSet,
    mut z: PointSet,
    eta: &mut f64,
    cfg: &PursuitConfig,
    diag: &mut Diagnostics,
) -> Result<PointSet> {
    let t = reg.top_degree();
    while *eta > cfg.delta && !reg.g_layer(t).is_empty() {
        let spec = KnotObjectiveSpec::from_registry(reg, cfg.lambda, cfg.squared_norms);
        let anchors = match cfg.anchor {
            KnotAnchor::Source => x0,
            KnotAnchor::Previous => &z,
        };
        let batch = knot_all(anchors, &z, &spec, reg, &cfg.optimizer)?;
        z = batch.knots;
        diag.knot_updates += 1;
        diag.optimizer_failures += batch.optimizer_failures;
        let max_norm = worst_g_norm(reg, &z)?;
        if max_norm <= cfg.delta + DELTA_SLACK {
            break;
        }
        *eta = cool_eta(*eta, Some(max_norm), cfg);
        diag.eta_trace.push(*eta);
        let cands = generate_candidates(reg, t)?;
        let layer = find_basis(&cands, reg, &z, x0, cfg.epsilon, *eta)?;
        diag.discarded_spanning += layer.discarded_spanning;
        reg.replace_top_layer(t, layer.g_polys, layer.f_entries)?;
    }
    Ok(z)
}

/// Fits the joint model: vanishing polynomials small on the source points at
/// `epsilon` and on the optimized knots at `delta`.
pub fn fit(x0: &PointSet, cfg: &PursuitConfig) -> Result<KnotModel> {
    cfg.validate()?;
    let mut reg = PolyRegistry::with_constant(x0.dim(), x0.len())?;
    let mut z = x0.clone();
    let mut eta = cfg.epsilon;
    let mut diag = Diagnostics {
        eta_trace: vec![eta],
        ..Diagnostics::default()
    };
    let mut t = 1usize;
    loop {
        let cands = generate_candidates(&reg, t)?;
        if t > cfg.max_degree || cands.is_empty() {
            if worst_g_norm(&reg, &z)? <= cfg.delta + DELTA_SLACK {
                // Degree cap with product space left over: the basis stops
                // short of rank exhaustion.
                diag.truncated |= !cands.is_empty();
                break;
            }
            if diag.resets.len() >= cfg.max_resets {
                diag.truncated = true;
                break;
            }
            // Restart the construction at a cooler threshold. Knots carry
            // over; they stay anchored to the original points regardless.
            let eta_before = eta;
            eta = cool_eta(eta, None, cfg);
            diag.eta_trace.push(eta);
            diag.resets.push(ResetEvent {
                at_degree: reg.top_degree(),
                eta_before,
                eta_after: eta,
            });
            reg = PolyRegistry::with_constant(x0.dim(), x0.len())?;
            t = 1;
            continue;
        }
        let layer = find_basis(&cands, &reg, &z, x0, cfg.epsilon, eta)?;
        diag.discarded_spanning += layer.discarded_spanning;
        reg.push_layer(t, layer.g_polys, layer.f_entries)?;
        z = exact_vanish_pursuit(&mut reg, x0, z, &mut eta, cfg, &mut diag)?;
        t += 1;
    }
    diag.final_eta = eta;
    finish_diagnostics(&mut diag, &reg, x0, &z)?;
    Ok(KnotModel {
        config: ConfigEcho::Proposed(cfg.clone()),
        registry: reg,
        knots: z,
        diagnostics: diag,
    })
}
