//! Structured subdistributions of a bracket-generated flag.
//!
//! Two constructions live here. The first finds the involutive corank-one
//! subdistribution of a given distribution when one exists: one-forms
//! completing the annihilator of the derived distribution to the annihilator
//! of the distribution itself each carve out a kernel subdistribution, and
//! the sum of any two kernels is the unique candidate. The second handles
//! candidate fields `c_i = Σ_k α^k_i v_k` over a base `v_0..v_m`: their
//! coefficients must satisfy a family of quadratic bracket conditions
//! (membership of symmetrized double brackets in a reference distribution),
//! which this module evaluates as residuals, solves numerically at a point,
//! and verifies at the field level through a Cauchy-characteristic identity.

mod solve;

pub use solve::{solve_ansatz_at, AnsatzSolutions};

use crate::expr::{Expr, Point};
use crate::geom::{min_valid_count, Distribution, GeoCtx, GeomError, OneForm, VectorField};
use crate::numlin;
use nalgebra::{DMatrix, DVector};
use std::error::Error;
use std::fmt;

#[derive(Debug)]
pub enum SubdistError {
    /// A structural hypothesis of the construction is not met.
    Hypothesis(String),
    Geom(GeomError),
}

impl fmt::Display for SubdistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubdistError::Hypothesis(msg) => write!(f, "hypothesis violated: {msg}"),
            SubdistError::Geom(e) => write!(f, "{e}"),
        }
    }
}

impl Error for SubdistError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            SubdistError::Geom(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GeomError> for SubdistError {
    fn from(e: GeomError) -> Self {
        SubdistError::Geom(e)
    }
}

/// One corank-one candidate, labeled by the pair of completion forms that
/// produced it (indices into the annihilator basis of the distribution).
#[derive(Debug)]
pub struct CorankPair {
    pub form_i: usize,
    pub form_j: usize,
    pub dist: Distribution,
    pub involutive: bool,
}

/// The unique involutive corank-one subdistribution of `d`, if one exists.
///
/// Requires the derived distribution `d + [d, d]` to exceed `d` by at least
/// two ranks (`r ≥ 2`). Forms ω completing the annihilator of the derived
/// distribution to the annihilator of `d` each yield the kernel
/// `W_ω = {v ∈ d : dω(v, ·) vanishes on d}`; the sum of two such kernels is
/// the only possible candidate, independently of the pair chosen. Returns
/// `None` when no pair yields a corank-one sum or when the candidate fails
/// involutivity — in either case no involutive corank-one subdistribution
/// exists.
pub fn involutive_corank_one(
    ctx: &mut GeoCtx,
    d: &Distribution,
) -> Result<Option<Distribution>, SubdistError> {
    let pairs = corank_pairs(ctx, d, false)?;
    Ok(pairs
        .into_iter()
        .next()
        .filter(|p| p.involutive)
        .map(|p| p.dist))
}

/// Every completion-form pair whose kernel sum has corank one in `d`,
/// with its involutivity verdict. Diagnostic companion to
/// [`involutive_corank_one`]: all returned candidates must agree pointwise.
pub fn involutive_corank_one_candidates(
    ctx: &mut GeoCtx,
    d: &Distribution,
) -> Result<Vec<CorankPair>, SubdistError> {
    corank_pairs(ctx, d, true)
}

fn corank_pairs(
    ctx: &mut GeoCtx,
    d: &Distribution,
    all: bool,
) -> Result<Vec<CorankPair>, SubdistError> {
    let d1 = ctx.derived_step(d)?;
    let r = d1.rank - d.rank;
    if r < 2 {
        return Err(SubdistError::Hypothesis(format!(
            "the derived distribution must add at least two directions, it adds {r}"
        )));
    }
    let pool = ctx.annihilator(d)?;
    let base = ctx.annihilator(&d1)?;
    let picked = completion_forms(ctx, &base, &pool, r)?;

    // Brackets of all generator pairs, shared by every kernel system.
    let k = d.gens.len();
    let mut bracket: Vec<Vec<Option<VectorField>>> = vec![vec![None; k]; k];
    for j in 0..k {
        for l in (j + 1)..k {
            bracket[j][l] = Some(ctx.lie_bracket(&d.gens[j], &d.gens[l]));
        }
    }

    // W_ω for v = Σ λ^j w_j: since ω annihilates d, dω(w_j, w_l) reduces to
    // −⟨ω, [w_j, w_l]⟩, so each form contributes one linear system in λ.
    let dag = ctx.dag().clone();
    let mut kernels: Vec<Vec<VectorField>> = Vec::with_capacity(r);
    for &fi in &picked {
        let om = &pool[fi];
        let mut rows = Vec::with_capacity(k);
        for l in 0..k {
            let mut row = Vec::with_capacity(k);
            for j in 0..k {
                let entry = if j == l {
                    dag.zero()
                } else if j < l {
                    ctx.pairing(om, bracket[j][l].as_ref().unwrap())
                } else {
                    let e = ctx.pairing(om, bracket[l][j].as_ref().unwrap());
                    dag.neg(&e)
                };
                row.push(entry);
            }
            rows.push(row);
        }
        let kern = ctx.symbolic_kernel(&rows)?;
        kernels.push(
            kern.basis
                .iter()
                .map(|lam| ctx.combine(lam, &d.gens))
                .collect(),
        );
    }

    let mut out = Vec::new();
    for a in 0..r {
        for b in (a + 1)..r {
            let mut gens = kernels[a].clone();
            gens.extend(kernels[b].iter().cloned());
            if gens.is_empty() {
                continue;
            }
            let cand = ctx.distribution(gens)?;
            if cand.rank + 1 != d.rank || !ctx.contains_dist(d, &cand).holds() {
                continue;
            }
            let involutive = ctx.is_involutive(&cand)?.holds();
            out.push(CorankPair {
                form_i: picked[a],
                form_j: picked[b],
                dist: cand,
                involutive,
            });
            if !all {
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Pick `r` forms from `pool` extending the span of `base` to full rank
/// `base.len() + r`, greedily at a reference sample point and verified by a
/// modal rank vote over all points.
fn completion_forms(
    ctx: &mut GeoCtx,
    base: &[OneForm],
    pool: &[OneForm],
    r: usize,
) -> Result<Vec<usize>, SubdistError> {
    let nb = base.len();
    let want = nb + r;
    // Coefficient vectors of one-forms evaluate exactly like field components.
    let cols: Vec<VectorField> = base
        .iter()
        .chain(pool.iter())
        .map(|f| VectorField::new(f.comps.clone()))
        .collect();
    let mats = ctx.eval_columns(&cols)?;
    let budget = ctx.cfg.max_resample.max(1);
    let mut tried = 0;
    for mat in mats.iter().flatten() {
        if tried >= budget {
            break;
        }
        tried += 1;
        let base_idx: Vec<usize> = (0..nb).collect();
        if numlin::rank_at(&mat.select_columns(base_idx.iter()), ctx.cfg.tol_rel) != nb {
            continue;
        }
        let mut sel: Vec<usize> = Vec::with_capacity(r);
        let mut cur = nb;
        for j in 0..pool.len() {
            if cur == want {
                break;
            }
            let mut trial = base_idx.clone();
            trial.extend(sel.iter().map(|&s| nb + s));
            trial.push(nb + j);
            let rk = numlin::rank_at(&mat.select_columns(trial.iter()), ctx.cfg.tol_rel);
            if rk > cur {
                sel.push(j);
                cur = rk;
            }
        }
        if cur < want {
            continue;
        }
        let keep: Vec<usize> = base_idx
            .iter()
            .copied()
            .chain(sel.iter().map(|&s| nb + s))
            .collect();
        // Confirmation vote over all points; ambiguous spectra abstain.
        let ranks: Vec<usize> = mats
            .iter()
            .flatten()
            .filter_map(|m| {
                numlin::rank_at_confident(&m.select_columns(keep.iter()), ctx.cfg.tol_rel)
            })
            .collect();
        if ranks.len() < min_valid_count(mats.len()) {
            continue;
        }
        let vote = numlin::modal_rank(&ranks);
        if vote.modal == want && vote.is_stable() {
            return Ok(sel);
        }
    }
    Err(GeomError::PivotDegenerate { tried }.into())
}

/// Candidate fields `c_i = Σ_k alpha[i][k] · base[k]`: a coefficient row per
/// candidate over a shared base of vector fields.
#[derive(Clone, Debug)]
pub struct AlphaAnsatz {
    pub base: Vec<VectorField>,
    pub alpha: Vec<Vec<Expr>>,
}

impl AlphaAnsatz {
    /// A set of `base.len() − 1` candidates, each with one coefficient per
    /// base field.
    pub fn new(base: Vec<VectorField>, alpha: Vec<Vec<Expr>>) -> Result<Self, SubdistError> {
        if base.len() < 2 {
            return Err(SubdistError::Hypothesis(
                "the candidate base needs at least two fields".into(),
            ));
        }
        if alpha.len() + 1 != base.len() {
            return Err(SubdistError::Hypothesis(format!(
                "expected {} candidate rows over a base of {} fields, got {}",
                base.len() - 1,
                base.len(),
                alpha.len()
            )));
        }
        if let Some(row) = alpha.iter().find(|row| row.len() != base.len()) {
            return Err(SubdistError::Hypothesis(format!(
                "every candidate row needs {} coefficients, got {}",
                base.len(),
                row.len()
            )));
        }
        Ok(AlphaAnsatz { base, alpha })
    }

    /// Number of candidate fields.
    pub fn num_candidates(&self) -> usize {
        self.alpha.len()
    }

    /// The candidate fields as symbolic combinations of the base.
    pub fn c_fields(&self, ctx: &GeoCtx) -> Vec<VectorField> {
        self.alpha
            .iter()
            .map(|row| ctx.combine(row, &self.base))
            .collect()
    }
}

/// The repeated-bracket base `v_k = ad_f^(k−1) g_k` of the input fields,
/// which spans the k-th bracket-flag member modulo the previous one.
pub fn canonical_base(
    ctx: &GeoCtx,
    f: &VectorField,
    inputs: &[VectorField],
    k: usize,
) -> Vec<VectorField> {
    inputs
        .iter()
        .map(|g| ctx.ad_pow(f, g, k.saturating_sub(1)))
        .collect()
}

/// Index into the flattened upper triangle (l ≤ p) of a symmetric
/// `(m+1)×(m+1)` layout.
fn tri_index(l: usize, p: usize, width: usize) -> usize {
    debug_assert!(l <= p && p < width);
    l * width - l * (l + 1) / 2 + p
}

/// The symmetrized double brackets `[v_l, [v_p, f]]` for l ≤ p, flattened in
/// `tri_index` order. These are the vector coefficients of the quadratic
/// conditions: candidate coefficients α enter as `α_iᵀ S α_j`.
fn double_brackets(ctx: &GeoCtx, f: &VectorField, base: &[VectorField]) -> Vec<VectorField> {
    let w = base.len();
    let mut out = Vec::with_capacity(w * (w + 1) / 2);
    for l in 0..w {
        for p in l..w {
            let inner = ctx.lie_bracket(&base[p], f);
            out.push(ctx.lie_bracket(&base[l], &inner));
        }
    }
    out
}

/// Residuals of the quadratic coupling conditions at the point `p`.
///
/// Entry `(i, j)` is the least-squares distance of
/// `Σ_k α^k_i α^k_j [v_k,[v_k,f]] + Σ_{l<q} (α^l_i α^q_j + α^q_i α^l_j) [v_l,[v_q,f]]`
/// from the span of `d2` at `p`; the matrix is symmetric and a zero entry
/// means that condition holds at the point. The candidates must be linearly
/// independent at `p` (full column rank of the coefficient matrix).
pub fn ansatz_residuals(
    ctx: &mut GeoCtx,
    ansatz: &AlphaAnsatz,
    f: &VectorField,
    d2: &Distribution,
    p: &Point,
) -> Result<DMatrix<f64>, SubdistError> {
    let w = ansatz.base.len();
    let m = ansatz.num_candidates();
    let n = ctx.n();
    let sfields = double_brackets(ctx, f, &ansatz.base);

    let mut exprs: Vec<Expr> = Vec::new();
    for sf in &sfields {
        exprs.extend(sf.comps.iter().cloned());
    }
    for row in &ansatz.alpha {
        exprs.extend(row.iter().cloned());
    }
    for g in &d2.gens {
        exprs.extend(g.comps.iter().cloned());
    }
    let vals = ctx.evaluator().eval(&exprs, p).map_err(GeomError::from)?;

    let ns = sfields.len();
    let svals: Vec<DVector<f64>> = (0..ns)
        .map(|i| DVector::from_column_slice(&vals[i * n..(i + 1) * n]))
        .collect();
    let aoff = ns * n;
    let amat = DMatrix::from_fn(w, m, |k, i| vals[aoff + i * w + k]);
    let boff = aoff + m * w;
    let basis = DMatrix::from_fn(n, d2.gens.len(), |r, c| vals[boff + c * n + r]);

    if numlin::rank_at(&amat, ctx.cfg.tol_rel) != m {
        return Err(SubdistError::Hypothesis(
            "candidate coefficients are linearly dependent at the sample point".into(),
        ));
    }

    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut r = DVector::zeros(n);
            for l in 0..w {
                for q in l..w {
                    let coeff = if l == q {
                        amat[(l, i)] * amat[(l, j)]
                    } else {
                        amat[(l, i)] * amat[(q, j)] + amat[(q, i)] * amat[(l, j)]
                    };
                    r += &svals[tri_index(l, q, w)] * coeff;
                }
            }
            let chk = numlin::in_span_at(&basis, &r, ctx.cfg.tol_rel);
            out[(i, j)] = chk.residual;
            out[(j, i)] = chk.residual;
        }
    }
    Ok(out)
}

/// Field-level verification of candidate fields `c`.
///
/// Builds `E = d_top + span{[f, c_i]}` and accepts the candidates exactly
/// when the Cauchy characteristic of `E` equals `d_prev + span{c}` at the
/// sample points (both inclusions), with the `c_i` lying in `d_top` and
/// independent modulo `d_prev`.
pub fn verify_candidate_fields(
    ctx: &mut GeoCtx,
    c: &[VectorField],
    f: &VectorField,
    d_top: &Distribution,
    d_prev: &Distribution,
) -> Result<bool, SubdistError> {
    for ci in c {
        if !ctx.contains_field(d_top, ci)?.holds() {
            return Ok(false);
        }
    }
    let mut low_gens = d_prev.gens.clone();
    low_gens.extend(c.iter().cloned());
    let target = ctx.distribution(low_gens)?;
    if target.rank != d_prev.rank + c.len() {
        return Ok(false);
    }
    let mut egens = d_top.gens.clone();
    egens.extend(c.iter().map(|ci| ctx.lie_bracket(f, ci)));
    let e = ctx.distribution(egens)?;
    let ce = ctx.cauchy_characteristic(&e)?;
    Ok(ctx.same_dist(&ce, &target))
}
