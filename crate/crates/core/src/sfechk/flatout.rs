//! Verification of candidate flat outputs.
//!
//! A verified model carries a distinguished codistribution: the annihilator
//! of the closing distribution `F_0` when integrator chains sit on top, or
//! the annihilator of the involutive corank-one subdistribution when `F_0`
//! already fills the tangent space.  A candidate flat output passes when its
//! component differentials are pointwise independent and span exactly that
//! codistribution.

use nalgebra::DMatrix;

use crate::expr::Expr;
use crate::geom::{agree_count, min_valid_count, OneForm};
use crate::model::SystemModel;
use crate::numlin::{self, CheckConfig};

use super::{analyze, CheckError, FlatOutputStatus, TargetForm, Verdict};

/// Check a candidate flat output `phi` against the structure of `model`.
///
/// Runs the triangular-form analysis first (shift 0, then shift 1); a model
/// without a triangular verdict cannot certify a flat output and yields
/// [`CheckError::StructureNotEstablished`].  The number of components must
/// match the corank of the closing distribution.
pub fn verify_flat_output(
    model: &SystemModel,
    phi: &[Expr],
    cfg: &CheckConfig,
) -> Result<FlatOutputStatus, CheckError> {
    let mut analysis = analyze(model, cfg, TargetForm::Tf0, false)?;
    if !matches!(analysis.report.verdict, Verdict::Tf0) {
        analysis = analyze(model, cfg, TargetForm::Tf1, false)?;
        if !matches!(analysis.report.verdict, Verdict::Tf1) {
            return Err(CheckError::StructureNotEstablished(
                analysis.report.verdict.to_string(),
            ));
        }
    }
    let verdict = analysis.report.verdict.to_string();
    let ctx = &mut analysis.ctx;
    let n = ctx.n();
    let Some(f0) = &analysis.f0 else {
        return Err(CheckError::StructureNotEstablished(verdict));
    };

    // Target codistribution the differentials must span.
    let target: Vec<OneForm> = if f0.rank == n {
        let Some(l) = &analysis.l_dist else {
            return Err(CheckError::StructureNotEstablished(verdict));
        };
        ctx.annihilator(l)?
    } else {
        ctx.annihilator(f0)?
    };
    if phi.len() != target.len() {
        return Err(CheckError::DimensionMismatch {
            expected: target.len(),
            got: phi.len(),
        });
    }

    let dphi: Vec<OneForm> = phi
        .iter()
        .map(|p| OneForm::new(model.states.iter().map(|x| p.diff(x)).collect()))
        .collect();

    // Evaluate both families at every sample and vote on mutual inclusion
    // plus independence of the candidate differentials.
    let k = target.len();
    let mut exprs: Vec<Expr> = Vec::with_capacity(2 * k * n);
    for omega in dphi.iter().chain(target.iter()) {
        exprs.extend(omega.comps.iter().cloned());
    }
    let rows = ctx.eval_at_samples(&exprs);
    let tol = cfg.tol_rel;
    let total = rows.len();
    // Mask near-pole draws: a point whose values dwarf the median point's is
    // evaluating the rational coefficients next to a pole.
    let row_scale =
        |vals: &[f64]| vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut scales: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|v| row_scale(v)))
        .collect();
    scales.sort_by(f64::total_cmp);
    let median = scales.get(scales.len() / 2).copied().unwrap_or(0.0);
    let mut recorded = 0usize;
    let mut passed = 0usize;
    let mut worst_pass = 0.0_f64;
    let mut worst_fail = 0.0_f64;
    for row in &rows {
        let Ok(vals) = row else { continue };
        if median > 0.0 && row_scale(vals) > numlin::SCALE_SPREAD * median {
            continue;
        }
        recorded += 1;
        let a = DMatrix::from_fn(n, k, |i, j| vals[j * n + i]);
        let b = DMatrix::from_fn(n, k, |i, j| vals[(k + j) * n + i]);
        let mut inside = numlin::rank_at(&a, tol) == k;
        let mut residual = 0.0_f64;
        for j in 0..k {
            let ca = a.column(j).into_owned();
            let cb = b.column(j).into_owned();
            let fwd = numlin::in_span_at(&b, &ca, tol);
            let bwd = numlin::in_span_at(&a, &cb, tol);
            inside &= fwd.inside && bwd.inside;
            residual = residual.max(fwd.residual).max(bwd.residual);
        }
        if inside {
            passed += 1;
            worst_pass = worst_pass.max(residual);
        } else {
            worst_fail = worst_fail.max(residual);
        }
    }
    let ok = recorded >= min_valid_count(total) && passed >= agree_count(recorded);
    Ok(FlatOutputStatus {
        status: if ok { "verified" } else { "failed" }.to_string(),
        basis_residual: if ok { worst_pass } else { worst_fail },
    })
}
