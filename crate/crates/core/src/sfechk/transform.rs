//! Verification of a candidate state/input transformation against the
//! triangular normal form with given structure indices.
//!
//! The candidate consists of the new state `z = Φ(x)` and the new input
//! `w = α(x) + β(x)u`.  Writing the transformed system as
//! `ż_r = A_r(x) + Σ_j B_rj(x) w_j`, the rows `A` and `B` are recovered
//! symbolically (the `B` row solves a linear system against `βᵀ`, the
//! `A` row subtracts the feedback part) and compared against the row
//! template of the normal form: integrator rows must copy their successor,
//! fixed input coefficients must match exactly, and the free drift and
//! coefficient slots must depend only on their allowed block of new
//! coordinates.  Argument restrictions are checked through the chain rule:
//! the gradient of a free slot in new coordinates solves `JΦᵀ · ∇_z = ∇_x`,
//! and every forbidden component must vanish on the sample set.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::expr::{Expr, ExprDag};
use crate::geom::{agree_count, GeoCtx, VectorField};
use crate::model::SystemModel;
use crate::normalforms::{TfLayout, TfRow};
use crate::numlin::{self, CheckConfig};

use super::{CheckError, StructureIndices};

/// A candidate transformation into the triangular normal form: new states
/// `phi` (in canonical layout order) and new inputs `w_j = alpha[j] +
/// Σ_k beta[j][k] u_k`, all expressions over the model states.
#[derive(Clone, Debug)]
pub struct TransformMaps {
    pub phi: Vec<Expr>,
    pub alpha: Vec<Expr>,
    pub beta: Vec<Vec<Expr>>,
}

/// Worst residuals for one transformed state row.
#[derive(Clone, Debug, Serialize)]
pub struct RowResidual {
    /// Canonical variable name of the row (`xi2_1`, `chi0`, ...).
    pub name: String,
    /// Worst structural residual: fixed coefficients and integrator copies.
    pub structural: f64,
    /// Worst forbidden-argument residual of the row's free slot.
    pub argument: f64,
}

/// Outcome of a transformation check.
#[derive(Clone, Debug, Serialize)]
pub struct TransformReport {
    pub verified: bool,
    pub max_structural: f64,
    pub max_argument: f64,
    pub rows: Vec<RowResidual>,
}

impl std::fmt::Display for TransformReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "transformation {}: max structural residual {:.3e}, max argument residual {:.3e}",
            if self.verified { "verified" } else { "failed" },
            self.max_structural,
            self.max_argument
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "  {:<10} structural {:.3e}  argument {:.3e}",
                r.name, r.structural, r.argument
            )?;
        }
        Ok(())
    }
}

/// Lie derivative of a scalar along a vector field.
fn lie(dag: &ExprDag, f: &VectorField, states: &[Expr], h: &Expr) -> Expr {
    let terms: Vec<Expr> = states
        .iter()
        .zip(&f.comps)
        .map(|(x, fi)| dag.mul(&[fi.clone(), h.diff(x)]))
        .collect();
    dag.add(&terms)
}

/// Residual expressions contributed by one state row.
struct RowSlots {
    structural: Vec<Expr>,
    argument: Vec<Expr>,
}

/// Verify that `maps` takes `model` into the triangular normal form with the
/// given structure indices.
///
/// All residuals are evaluated on the model's sample set and compared to the
/// absolute tolerance `tol`; the report carries the worst residual per row.
/// Fails early when the dimensions are inconsistent, the indices are not
/// those of a triangular form, or `β` / the Jacobian of `Φ` are singular on
/// the samples.
pub fn verify_transformation(
    model: &SystemModel,
    maps: &TransformMaps,
    indices: &StructureIndices,
    cfg: &CheckConfig,
    tol: f64,
) -> Result<TransformReport, CheckError> {
    let n = model.n();
    let m1 = model.num_inputs();
    if indices.m + 1 != m1 {
        return Err(CheckError::DimensionMismatch {
            expected: indices.m + 1,
            got: m1,
        });
    }
    let layout = TfLayout::new(indices).map_err(|e| CheckError::InvalidIndices(e.to_string()))?;
    if layout.n() != n {
        return Err(CheckError::DimensionMismatch {
            expected: layout.n(),
            got: n,
        });
    }
    if maps.phi.len() != n {
        return Err(CheckError::DimensionMismatch {
            expected: n,
            got: maps.phi.len(),
        });
    }
    if maps.alpha.len() != m1 || maps.beta.len() != m1 || maps.beta.iter().any(|r| r.len() != m1) {
        return Err(CheckError::DimensionMismatch {
            expected: m1,
            got: maps.alpha.len().min(maps.beta.len()),
        });
    }

    let dag = &model.dag;
    let states = &model.states;
    let samples = model.draw_samples(cfg).map_err(CheckError::Model)?;
    let mut ctx = GeoCtx::new(dag, states, samples, cfg.clone()).map_err(CheckError::Geom)?;

    // Jacobian of Φ, stored transposed: jt[l][k] = ∂Φ_k/∂x_l.
    let jt: Vec<Vec<Expr>> = states
        .iter()
        .map(|x| maps.phi.iter().map(|p| p.diff(x)).collect())
        .collect();
    // β transposed: bt[k][j] = beta[j][k].
    let bt: Vec<Vec<Expr>> = (0..m1)
        .map(|k| (0..m1).map(|j| maps.beta[j][k].clone()).collect())
        .collect();

    check_regular(&mut ctx, &bt, m1, cfg, CheckError::SingularBeta)?;
    check_regular(&mut ctx, &jt, n, cfg, CheckError::SingularJacobian)?;

    // Transformed rows: ż_r = arow[r] + Σ_j brow[r][j] w_j.
    let mut brow: Vec<Vec<Expr>> = Vec::with_capacity(n);
    let mut arow: Vec<Expr> = Vec::with_capacity(n);
    for p in &maps.phi {
        let lg: Vec<Expr> = model.inputs.iter().map(|g| lie(dag, g, states, p)).collect();
        let b = dag.solve(&bt, &lg);
        let feedback: Vec<Expr> = b
            .iter()
            .zip(&maps.alpha)
            .map(|(bj, aj)| dag.mul(&[bj.clone(), aj.clone()]))
            .collect();
        let lf = lie(dag, &model.drift, states, p);
        arow.push(dag.sub(&lf, &dag.add(&feedback)));
        brow.push(b);
    }

    // Gradient of a scalar in new coordinates, via JΦᵀ ∇_z = ∇_x.
    let z_grad = |h: &Expr| -> Vec<Expr> {
        let gx: Vec<Expr> = states.iter().map(|x| h.diff(x)).collect();
        dag.solve(&jt, &gx)
    };
    // Forbidden components of the new-coordinate gradient of a free slot.
    let forbidden = |h: &Expr, allowed: &[usize]| -> Vec<Expr> {
        z_grad(h)
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !allowed.contains(k))
            .map(|(_, e)| e)
            .collect()
    };

    let idx = |row: TfRow| layout.index_of(row);
    let phi_at = |row: TfRow| maps.phi[idx(row)].clone();
    let direct = layout.direct_w0();
    let k_chi = indices.k_chi;
    let k_zeta = indices.k_zeta;
    let one = dag.one();

    let mut slots: Vec<RowSlots> = Vec::with_capacity(n);
    for (r, row) in layout.rows().iter().enumerate() {
        let mut structural: Vec<Expr> = Vec::new();
        let mut argument: Vec<Expr> = Vec::new();
        // Most rows have no input coefficients at all; rows with a fixed or
        // free coefficient overwrite the relevant entries below.
        match *row {
            TfRow::Xi { level, chain } => {
                structural.extend(brow[r].iter().cloned());
                let succ = if level < indices.k_xi[chain] {
                    TfRow::Xi {
                        level: level + 1,
                        chain,
                    }
                } else if chain == 0 {
                    TfRow::Chi0
                } else {
                    TfRow::Chi { level: 1, chain }
                };
                structural.push(dag.sub(&arow[r], &phi_at(succ)));
            }
            TfRow::Chi0 => {
                if direct {
                    structural.push(dag.sub(&brow[r][0], &one));
                    structural.extend(brow[r][1..].iter().cloned());
                    structural.push(arow[r].clone());
                } else {
                    structural.extend(brow[r].iter().cloned());
                    let z10 = phi_at(TfRow::Zeta { level: 1, chain: 0 });
                    structural.push(dag.sub(&arow[r], &z10));
                }
            }
            TfRow::Chi { level, chain } if level < k_chi => {
                let succ = phi_at(TfRow::Chi {
                    level: level + 1,
                    chain,
                });
                let allowed = layout.chi_drift_args(level);
                if direct {
                    structural.push(dag.sub(&brow[r][0], &succ));
                    structural.extend(brow[r][1..].iter().cloned());
                    argument.extend(forbidden(&arow[r], &allowed));
                } else {
                    structural.extend(brow[r].iter().cloned());
                    let z10 = phi_at(TfRow::Zeta { level: 1, chain: 0 });
                    let free = dag.sub(&arow[r], &dag.mul(&[succ, z10]));
                    argument.extend(forbidden(&free, &allowed));
                }
            }
            TfRow::Chi { chain, .. } => {
                let z1c = phi_at(TfRow::Zeta { level: 1, chain });
                let allowed = layout.chi_top_args();
                if direct {
                    structural.extend(brow[r][1..].iter().cloned());
                    structural.push(dag.sub(&arow[r], &z1c));
                    argument.extend(forbidden(&brow[r][0], &allowed));
                } else {
                    structural.extend(brow[r].iter().cloned());
                    let h = dag.sub(&arow[r], &z1c);
                    let coeff = z_grad(&h)
                        .swap_remove(idx(TfRow::Zeta { level: 1, chain: 0 }));
                    let z10 = phi_at(TfRow::Zeta { level: 1, chain: 0 });
                    structural.push(dag.sub(&h, &dag.mul(&[coeff.clone(), z10])));
                    argument.extend(forbidden(&coeff, &allowed));
                }
            }
            TfRow::Zeta { level, chain } => {
                let top = if chain == 0 { k_zeta - indices.s } else { k_zeta };
                if level < top {
                    structural.extend(brow[r].iter().cloned());
                    let succ = phi_at(TfRow::Zeta {
                        level: level + 1,
                        chain,
                    });
                    structural.push(dag.sub(&arow[r], &succ));
                } else {
                    for (j, b) in brow[r].iter().enumerate() {
                        if j == chain {
                            structural.push(dag.sub(b, &one));
                        } else {
                            structural.push(b.clone());
                        }
                    }
                    structural.push(arow[r].clone());
                }
            }
        }
        slots.push(RowSlots {
            structural,
            argument,
        });
    }

    // Batch every residual into one evaluation pass.
    let mut exprs: Vec<Expr> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(n);
    for s in &slots {
        spans.push((s.structural.len(), s.argument.len()));
        exprs.extend(s.structural.iter().cloned());
        exprs.extend(s.argument.iter().cloned());
    }
    let evals = ctx.eval_at_samples(&exprs);
    let total = evals.len();
    let mut valid = 0usize;
    let mut worst = vec![(0.0_f64, 0.0_f64); n];
    for row in &evals {
        let Ok(vals) = row else { continue };
        valid += 1;
        let mut off = 0;
        for (r, &(ns, na)) in spans.iter().enumerate() {
            for v in &vals[off..off + ns] {
                worst[r].0 = worst[r].0.max(v.abs());
            }
            for v in &vals[off + ns..off + ns + na] {
                worst[r].1 = worst[r].1.max(v.abs());
            }
            off += ns + na;
        }
    }

    let rows: Vec<RowResidual> = layout
        .names()
        .iter()
        .zip(&worst)
        .map(|(name, &(structural, argument))| RowResidual {
            name: name.clone(),
            structural,
            argument,
        })
        .collect();
    let max_structural = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let max_argument = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let verified =
        valid >= agree_count(total) && max_structural <= tol && max_argument <= tol;
    Ok(TransformReport {
        verified,
        max_structural,
        max_argument,
        rows,
    })
}

/// Vote that a square symbolic matrix (given as rows) has full rank on the
/// sample set; returns the supplied error otherwise.
fn check_regular(
    ctx: &mut GeoCtx,
    rows: &[Vec<Expr>],
    dim: usize,
    cfg: &CheckConfig,
    err: CheckError,
) -> Result<(), CheckError> {
    let mut exprs: Vec<Expr> = Vec::with_capacity(dim * dim);
    for row in rows {
        exprs.extend(row.iter().cloned());
    }
    let evals = ctx.eval_at_samples(&exprs);
    let total = evals.len();
    let mut full = 0usize;
    for e in &evals {
        let Ok(vals) = e else { continue };
        let mat = DMatrix::from_fn(dim, dim, |i, j| vals[i * dim + j]);
        if numlin::rank_at(&mat, cfg.tol_rel) == dim {
            full += 1;
        }
    }
    if full >= agree_count(total) {
        Ok(())
    } else {
        Err(err)
    }
}
