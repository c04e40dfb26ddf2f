//! Symbolic kernel of an expression matrix.
//!
//! Gaussian elimination over expressions uses cross-multiplication
//! (`row_i ← p·row_i − e·row_p`) so no division happens during the sweep;
//! quotients appear only in the final back-substitution, divided by pivots.
//! The pivot pattern is chosen numerically at a reference sample point and
//! must reproduce the generic (modal) rank; the resulting kernel vectors are
//! then verified against the matrix at every sample point. Degenerate
//! reference points are skipped, up to the configured resample budget.

use super::{agree_count, matrix_scale, min_valid_count, GeomError, GeoCtx};
use crate::expr::{Expr, Point};
use crate::numlin;
use nalgebra::{DMatrix, DVector};

/// Residuals of `M·k` are pure rounding noise when the kernel is exact;
/// this bound is far below any structural violation but leaves room for
/// cancellation error in the cross-multiplied pivots.
const KERNEL_VERIFY_TOL: f64 = 1e-6;

/// A symbolic kernel basis together with the matrix's generic rank.
#[derive(Clone, Debug)]
pub struct SymKernel {
    /// Kernel basis vectors, each with one expression per matrix column.
    pub basis: Vec<Vec<Expr>>,
    /// Modal rank of the matrix over the sample points.
    pub rank: usize,
}

impl GeoCtx {
    /// Kernel of the matrix given by `rows`, as expressions.
    pub fn symbolic_kernel(&mut self, rows: &[Vec<Expr>]) -> Result<SymKernel, GeomError> {
        let m = rows.len();
        let n = rows.first().map(|r| r.len()).unwrap_or(0);
        for r in rows {
            assert_eq!(r.len(), n, "ragged matrix");
        }
        if n == 0 {
            return Ok(SymKernel {
                basis: Vec::new(),
                rank: 0,
            });
        }
        if m == 0 {
            return Ok(SymKernel {
                basis: identity_basis(self, n),
                rank: 0,
            });
        }

        // Numeric copies of the matrix at every sample point. Near-pole
        // points are masked the same way `eval_columns` masks them.
        let exprs: Vec<Expr> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        let evals = self.ev.eval_partial(&exprs, &self.samples);
        let mut first_err = None;
        let mut mats: Vec<Option<DMatrix<f64>>> = evals
            .into_iter()
            .map(|r| match r {
                Ok(vals) => Some(DMatrix::from_row_iterator(m, n, vals)),
                Err(e) => {
                    first_err.get_or_insert(e);
                    None
                }
            })
            .collect();
        if mats.iter().all(|x| x.is_none()) {
            return Err(GeomError::Eval(first_err.unwrap()));
        }
        let mut scales: Vec<f64> = mats.iter().flatten().map(matrix_scale).collect();
        scales.sort_by(f64::total_cmp);
        let median = scales[scales.len() / 2];
        if median > 0.0 {
            for slot in mats.iter_mut() {
                if slot.as_ref().is_some_and(|mm| matrix_scale(mm) > numlin::SCALE_SPREAD * median) {
                    *slot = None;
                }
            }
        }
        let total = mats.len();
        let valid = mats.iter().filter(|x| x.is_some()).count();
        if valid < min_valid_count(total) {
            return Err(GeomError::EvalUnstable { valid, total });
        }
        // The forms are the rows; rank them as generators (columns of the
        // transpose) so per-form scaling cannot skew the threshold. Points
        // with an ambiguous spectrum abstain from the vote.
        let ranks: Vec<usize> = mats
            .iter()
            .flatten()
            .filter_map(|mm| numlin::rank_at_confident(&mm.transpose(), self.cfg.tol_rel))
            .collect();
        if ranks.len() < min_valid_count(total) {
            return Err(GeomError::EvalUnstable {
                valid: ranks.len(),
                total,
            });
        }
        let vote = numlin::modal_rank(&ranks);
        if !vote.is_stable() {
            return Err(GeomError::RankNotLocallyConstant {
                modal: vote.modal,
                votes: vote.votes,
                total: vote.total,
            });
        }
        let rank = vote.modal;
        if rank == n {
            return Ok(SymKernel {
                basis: Vec::new(),
                rank,
            });
        }

        let mut tried = 0;
        let budget = self.cfg.max_resample.max(1);
        let mut worst_seen = 0.0f64;
        for pi in 0..mats.len() {
            if tried >= budget {
                break;
            }
            let Some(ref_mat) = &mats[pi] else { continue };
            // Only a point that confidently sees the generic rank can
            // produce the generic pivot pattern.
            if numlin::rank_at_confident(&ref_mat.transpose(), self.cfg.tol_rel) != Some(rank) {
                continue;
            }
            tried += 1;
            let point = self.samples[pi].clone();
            let Some(basis) = self.eliminate(rows, n, rank, &point) else {
                continue;
            };
            let (ok, worst) = self.verify_kernel(&mats, &basis);
            if ok {
                return Ok(SymKernel { basis, rank });
            }
            worst_seen = worst_seen.max(worst);
        }
        if worst_seen > 0.0 {
            Err(GeomError::VerificationFailed {
                residual: worst_seen,
            })
        } else {
            Err(GeomError::PivotDegenerate { tried })
        }
    }

    /// One elimination sweep with pivots chosen by magnitude at `point`.
    ///
    /// Fraction-free in Bareiss' sense: every update divides the
    /// cross-multiplied entry by the previous pivot, which is exact, so each
    /// intermediate expression evaluates to a minor of the input matrix.
    /// Without that division the entries double in degree per round and
    /// their values overflow on matrices whose entries are themselves
    /// quotients from an earlier elimination.
    fn eliminate(
        &mut self,
        rows: &[Vec<Expr>],
        n: usize,
        rank: usize,
        point: &Point,
    ) -> Option<Vec<Vec<Expr>>> {
        let dag = self.dag.clone();
        let m = rows.len();
        let mut work: Vec<Vec<Expr>> = rows.to_vec();
        let mut row_used = vec![false; m];
        let mut col_used = vec![false; n];
        let mut pivots: Vec<(usize, usize)> = Vec::with_capacity(rank);
        let mut prev: Option<Expr> = None;

        for _ in 0..rank {
            // Collect live candidate entries and evaluate them at the point.
            let mut cand: Vec<(usize, usize)> = Vec::new();
            let mut cand_exprs: Vec<Expr> = Vec::new();
            for (i, row) in work.iter().enumerate() {
                if row_used[i] {
                    continue;
                }
                for (j, e) in row.iter().enumerate() {
                    if !col_used[j] && !e.is_zero() {
                        cand.push((i, j));
                        cand_exprs.push(e.clone());
                    }
                }
            }
            let vals = self.ev.eval(&cand_exprs, point).ok()?;
            let (best, bestval) = cand
                .iter()
                .zip(&vals)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(c, v)| (*c, *v))?;
            if bestval.abs() < numlin::RANK_FLOOR {
                return None; // degenerate at this reference
            }
            let (pr, pc) = best;
            row_used[pr] = true;
            col_used[pc] = true;
            pivots.push((pr, pc));
            let pivot = work[pr][pc].clone();
            let prow = work[pr].clone();
            for (i, row) in work.iter_mut().enumerate() {
                if row_used[i] {
                    continue;
                }
                let factor = row[pc].clone();
                for (j, e) in row.iter_mut().enumerate() {
                    if col_used[j] && j != pc {
                        continue; // stays structurally zero
                    }
                    if j == pc {
                        *e = dag.zero();
                        continue;
                    }
                    let a = dag.mul(&[pivot.clone(), e.clone()]);
                    let s = if factor.is_zero() {
                        a
                    } else {
                        let b = dag.mul(&[factor.clone(), prow[j].clone()]);
                        dag.sub(&a, &b)
                    };
                    *e = match (&prev, s.is_zero()) {
                        (_, true) => s,
                        (None, _) => s,
                        (Some(p), _) => dag.quot(&s, p),
                    };
                }
            }
            prev = Some(pivot);
        }

        // Back-substitute one kernel vector per free column.
        let mut basis = Vec::with_capacity(n - rank);
        for cf in (0..n).filter(|&j| !col_used[j]) {
            let mut x = vec![dag.zero(); n];
            x[cf] = dag.one();
            for &(r, c) in pivots.iter().rev() {
                let terms: Vec<Expr> = (0..n)
                    .filter(|&j| j != c && !work[r][j].is_zero() && !x[j].is_zero())
                    .map(|j| dag.mul(&[work[r][j].clone(), x[j].clone()]))
                    .collect();
                let s = dag.add(&terms);
                x[c] = if s.is_zero() {
                    dag.zero()
                } else {
                    let q = dag.quot(&s, &work[r][c]);
                    dag.neg(&q)
                };
            }
            basis.push(x);
        }
        Some(basis)
    }

    /// Check `M·k ≈ 0` for every kernel vector at every sample point.
    fn verify_kernel(
        &mut self,
        mats: &[Option<DMatrix<f64>>],
        basis: &[Vec<Expr>],
    ) -> (bool, f64) {
        if basis.is_empty() {
            return (true, 0.0);
        }
        let exprs: Vec<Expr> = basis.iter().flat_map(|b| b.iter().cloned()).collect();
        let n = basis[0].len();
        let evals = self.ev.eval_partial(&exprs, &self.samples);
        let mut passed = 0usize;
        let mut recorded = 0usize;
        let mut worst = 0.0f64;
        let total = mats.len();
        for (mm, kv) in mats.iter().zip(&evals) {
            let (Some(mat), Ok(kvals)) = (mm, kv) else {
                continue;
            };
            recorded += 1;
            let mut ok = true;
            for (bi, _) in basis.iter().enumerate() {
                let k = DVector::from_column_slice(&kvals[bi * n..(bi + 1) * n]);
                let res = (mat * &k).norm();
                let rel = res / (1.0 + mat.norm() * k.norm());
                worst = worst.max(rel);
                ok &= rel <= KERNEL_VERIFY_TOL;
            }
            if ok {
                passed += 1;
            }
        }
        let ok = recorded >= min_valid_count(total) && passed >= agree_count(recorded);
        (ok, worst)
    }
}

fn identity_basis(ctx: &GeoCtx, n: usize) -> Vec<Vec<Expr>> {
    let dag = ctx.dag();
    (0..n)
        .map(|i| {
            let mut v = vec![dag.zero(); n];
            v[i] = dag.one();
            v
        })
        .collect()
}
