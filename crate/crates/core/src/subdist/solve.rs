//! Numeric point-solver for the quadratic coupling conditions.
//!
//! At a fixed sample point the conditions on candidate coefficients α become
//! a system of bilinear equations `α_iᵀ T_c α_j = 0` (one equation per pair
//! `i ≤ j` and per direction `c` transverse to the reference distribution).
//! This solver projects the double-bracket vectors onto that transverse
//! complement, runs Levenberg–Marquardt from several random starts with a
//! unit-column penalty, and deduplicates converged solutions by the
//! orthogonal projector onto the column space of α — the conditions only
//! constrain that span.

use super::{double_brackets, tri_index, SubdistError};
use crate::expr::{Expr, Point};
use crate::geom::{Distribution, GeoCtx, GeomError, VectorField};
use crate::numlin;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pointwise solutions of the quadratic coupling conditions.
///
/// Each solution is a full-column-rank `(m+1) × m` coefficient matrix with
/// unit columns; solutions with the same column space are reported once.
/// `degenerate` is set when the conditions carry no information at the
/// point (every double bracket already lies in the reference distribution),
/// in which case `solutions` is empty.
#[derive(Clone, Debug)]
pub struct AnsatzSolutions {
    pub solutions: Vec<DMatrix<f64>>,
    pub degenerate: bool,
}

const QUAD_TOL: f64 = 1e-10;
const MIN_SINGULAR: f64 = 1e-3;
const PROJECTOR_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 120;

/// Solve the quadratic coupling conditions for `base.len() − 1` candidate
/// columns at the point `p`, using `n_starts` random initializations.
pub fn solve_ansatz_at(
    ctx: &mut GeoCtx,
    f: &VectorField,
    base: &[VectorField],
    d2: &Distribution,
    p: &Point,
    n_starts: usize,
) -> Result<AnsatzSolutions, SubdistError> {
    let w = base.len();
    if w < 2 {
        return Err(SubdistError::Hypothesis(
            "the candidate base needs at least two fields".into(),
        ));
    }
    let m = w - 1;
    let n = ctx.n();
    let sfields = double_brackets(ctx, f, base);

    let mut exprs: Vec<Expr> = Vec::new();
    for sf in &sfields {
        exprs.extend(sf.comps.iter().cloned());
    }
    for g in &d2.gens {
        exprs.extend(g.comps.iter().cloned());
    }
    let vals = ctx.evaluator().eval(&exprs, p).map_err(GeomError::from)?;
    let ns = sfields.len();
    let svecs: Vec<DVector<f64>> = (0..ns)
        .map(|i| DVector::from_column_slice(&vals[i * n..(i + 1) * n]))
        .collect();
    let basis = DMatrix::from_fn(n, d2.gens.len(), |r, c| vals[ns * n + c * n + r]);

    // Project the double brackets onto the complement of the reference
    // span: only those components constrain α.
    let u = numlin::nullspace_at(&basis.transpose(), ctx.cfg.tol_rel);
    let q = u.ncols();
    let smax = svecs.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let mut tvecs: Vec<DVector<f64>> = svecs.iter().map(|s| u.tr_mul(s)).collect();
    let tmax = tvecs.iter().map(|t| t.norm()).fold(0.0, f64::max);
    if q == 0 || tmax <= 1e-9 * (1.0 + smax) {
        return Ok(AnsatzSolutions {
            solutions: Vec::new(),
            degenerate: true,
        });
    }
    for t in &mut tvecs {
        *t /= tmax;
    }

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i..m).map(move |j| (i, j)))
        .collect();
    let n_res = pairs.len() * q + m;
    let n_var = w * m;

    // T_c α_x for every candidate column x: entry (c, k) of ta[x].
    let apply = |alpha: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
        (0..m)
            .map(|x| {
                let mut ta = DMatrix::zeros(q, w);
                for k in 0..w {
                    for l in 0..w {
                        let t = &tvecs[tri_index(k.min(l), k.max(l), w)];
                        let a = alpha[(l, x)];
                        for c in 0..q {
                            ta[(c, k)] += t[c] * a;
                        }
                    }
                }
                ta
            })
            .collect()
    };
    let residual = |alpha: &DMatrix<f64>, ta: &[DMatrix<f64>]| -> DVector<f64> {
        let mut fv = DVector::zeros(n_res);
        for (pr, &(i, j)) in pairs.iter().enumerate() {
            for c in 0..q {
                let mut acc = 0.0;
                for k in 0..w {
                    acc += alpha[(k, i)] * ta[j][(c, k)];
                }
                fv[pr * q + c] = acc;
            }
        }
        for i in 0..m {
            fv[pairs.len() * q + i] = alpha.column(i).norm_squared() - 1.0;
        }
        fv
    };
    let jacobian = |alpha: &DMatrix<f64>, ta: &[DMatrix<f64>]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(n_res, n_var);
        for (pr, &(i, j)) in pairs.iter().enumerate() {
            for c in 0..q {
                for k in 0..w {
                    jac[(pr * q + c, i * w + k)] += ta[j][(c, k)];
                    jac[(pr * q + c, j * w + k)] += ta[i][(c, k)];
                }
            }
        }
        for i in 0..m {
            for k in 0..w {
                jac[(pairs.len() * q + i, i * w + k)] = 2.0 * alpha[(k, i)];
            }
        }
        jac
    };

    let mut solutions: Vec<DMatrix<f64>> = Vec::new();
    let mut projectors: Vec<DMatrix<f64>> = Vec::new();
    for start in 0..n_starts {
        let seed = ctx
            .cfg
            .seed
            .wrapping_add((start as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alpha = DMatrix::from_fn(w, m, |_, _| rng.gen_range(-1.0..1.0));
        for mut col in alpha.column_iter_mut() {
            let nrm = col.norm();
            if nrm > 1e-12 {
                col /= nrm;
            }
        }

        let mut ta = apply(&alpha);
        let mut fv = residual(&alpha, &ta);
        let mut cost = fv.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITERS {
            if cost < 1e-26 {
                break;
            }
            let jac = jacobian(&alpha, &ta);
            let jtj = jac.tr_mul(&jac);
            let jtf = jac.tr_mul(&fv);
            let mut improved = false;
            for _ in 0..8 {
                let mut lhs = jtj.clone();
                for d in 0..n_var {
                    lhs[(d, d)] += lambda;
                }
                let Some(delta) = lhs.lu().solve(&(-&jtf)) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut cand = alpha.clone();
                for x in 0..m {
                    for k in 0..w {
                        cand[(k, x)] += delta[x * w + k];
                    }
                }
                let cta = apply(&cand);
                let cfv = residual(&cand, &cta);
                let ccost = cfv.norm_squared();
                if ccost < cost {
                    alpha = cand;
                    ta = cta;
                    fv = cfv;
                    cost = ccost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }

        let quad_inf = (0..pairs.len() * q).map(|r| fv[r].abs()).fold(0.0, f64::max);
        if quad_inf >= QUAD_TOL {
            continue;
        }
        let svd = alpha.clone().svd(true, false);
        if svd.singular_values.min() < MIN_SINGULAR {
            continue;
        }
        let ubasis = svd.u.as_ref().expect("u requested");
        let proj = ubasis * ubasis.transpose();
        if projectors
            .iter()
            .any(|p0| (p0 - &proj).norm() < PROJECTOR_TOL)
        {
            continue;
        }
        for mut col in alpha.column_iter_mut() {
            let nrm = col.norm();
            col /= nrm;
        }
        projectors.push(proj);
        solutions.push(alpha);
    }

    Ok(AnsatzSolutions {
        solutions,
        degenerate: false,
    })
}
