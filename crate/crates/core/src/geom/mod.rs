//! Vector fields, distributions and the bracket calculus over sample points.
//!
//! Symbolic objects (fields, one-forms) live in an [`ExprDag`]; every rank or
//! inclusion question about them is decided numerically at a set of sample
//! points drawn from the model domain. Ranks use the modal vote from
//! [`crate::numlin`]; inclusion tests pass when they hold on at least the
//! same fraction of points. Constructions that need symbolic output — the
//! annihilator of a distribution, its Cauchy characteristic — run a pivoted
//! symbolic elimination whose pivot pattern is chosen numerically at a
//! reference point and then verified at every sample point.

mod symkernel;

pub use symkernel::SymKernel;

use crate::expr::{EvalError, Evaluator, Expr, ExprDag, Point};
use crate::numlin::{self, CheckConfig, MODAL_AGREEMENT_MIN};
use nalgebra::{DMatrix, DVector};
use std::error::Error;
use std::fmt;

/// A vector field, one expression per state coordinate.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub comps: Vec<Expr>,
}

impl VectorField {
    pub fn new(comps: Vec<Expr>) -> Self {
        VectorField { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }
}

/// A differential one-form, one coefficient expression per coordinate.
#[derive(Clone, Debug)]
pub struct OneForm {
    pub comps: Vec<Expr>,
}

impl OneForm {
    pub fn new(comps: Vec<Expr>) -> Self {
        OneForm { comps }
    }
}

#[derive(Debug)]
pub enum GeomError {
    /// The per-point ranks did not agree on a modal value strongly enough.
    RankNotLocallyConstant {
        modal: usize,
        votes: usize,
        total: usize,
    },
    /// No reference point produced a pivot pattern that matched the generic
    /// rank and passed verification.
    PivotDegenerate { tried: usize },
    /// A symbolically constructed object failed its pointwise verification.
    VerificationFailed { residual: f64 },
    /// Too many sample points failed to evaluate.
    EvalUnstable { valid: usize, total: usize },
    /// Evaluation failed at every sample point.
    Eval(EvalError),
    NoSamples,
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::RankNotLocallyConstant { modal, votes, total } => write!(
                f,
                "rank is not locally constant: modal rank {modal} held at only {votes} of {total} points"
            ),
            GeomError::PivotDegenerate { tried } => write!(
                f,
                "no usable pivot pattern found after {tried} reference points"
            ),
            GeomError::VerificationFailed { residual } => write!(
                f,
                "pointwise verification failed with residual {residual:e}"
            ),
            GeomError::EvalUnstable { valid, total } => write!(
                f,
                "only {valid} of {total} sample points evaluated cleanly"
            ),
            GeomError::Eval(e) => write!(f, "evaluation failed at every sample point: {e}"),
            GeomError::NoSamples => write!(f, "no sample points supplied"),
            GeomError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} components, got {got}")
            }
        }
    }
}

impl Error for GeomError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            GeomError::Eval(e) => Some(e),
            _ => None,
        }
    }
}

impl From<EvalError> for GeomError {
    fn from(e: EvalError) -> Self {
        GeomError::Eval(e)
    }
}

/// A distribution: symbolic generators plus their values at every sample
/// point (columns of the matrices) and the modal rank.
#[derive(Clone)]
pub struct Distribution {
    pub gens: Vec<VectorField>,
    mats: Vec<Option<DMatrix<f64>>>,
    pub rank: usize,
    /// Per sample point: does the evaluated basis confidently span the
    /// generic rank there? Span tests against this distribution only count
    /// points where it does — where the basis collapses, "outside the span"
    /// says nothing about the generic containment question.
    full: Vec<bool>,
}

impl Distribution {
    /// Generator values at sample point `i`, if it evaluated cleanly.
    pub fn basis_at(&self, i: usize) -> Option<&DMatrix<f64>> {
        self.mats[i].as_ref()
    }
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Distribution(rank {}, {} gens)", self.rank, self.gens.len())
    }
}

/// Outcome of a pointwise inclusion test.
#[derive(Clone, Debug)]
pub struct SpanVote {
    pub passed: usize,
    /// Number of sample points that produced a usable verdict (points whose
    /// evaluation failed or was discarded do not vote either way).
    pub total: usize,
    /// Number of sample points drawn for the check.
    sample_count: usize,
    worst_pass: f64,
    worst_fail: f64,
    worst_pass_at: Option<usize>,
    worst_fail_at: Option<usize>,
}

impl SpanVote {
    fn new(sample_count: usize) -> Self {
        SpanVote {
            passed: 0,
            total: 0,
            sample_count,
            worst_pass: 0.0,
            worst_fail: 0.0,
            worst_pass_at: None,
            worst_fail_at: None,
        }
    }

    fn record(&mut self, idx: usize, inside: bool, residual: f64) {
        self.total += 1;
        if inside {
            self.passed += 1;
            if residual >= self.worst_pass || self.worst_pass_at.is_none() {
                self.worst_pass = self.worst_pass.max(residual);
                self.worst_pass_at = Some(idx);
            }
        } else if residual >= self.worst_fail || self.worst_fail_at.is_none() {
            self.worst_fail = self.worst_fail.max(residual);
            self.worst_fail_at = Some(idx);
        }
    }

    /// Mark every drawn point as passing (for inclusions that hold by
    /// construction, without evaluating anything).
    fn pass_all(&mut self) {
        self.passed = self.sample_count;
        self.total = self.sample_count;
    }

    /// True when enough points produced verdicts and at least the
    /// modal-agreement fraction of them saw the inclusion hold.
    pub fn holds(&self) -> bool {
        self.total >= min_valid_count(self.sample_count) && self.passed >= agree_count(self.total)
    }

    /// Largest residual among the points that decided the verdict.
    pub fn residual(&self) -> f64 {
        if self.holds() {
            self.worst_pass
        } else {
            self.worst_fail
        }
    }

    /// Index of the sample point behind [`residual`](Self::residual).
    pub fn worst_point(&self) -> Option<usize> {
        if self.holds() {
            self.worst_pass_at
        } else {
            self.worst_fail_at
        }
    }
}

pub(crate) fn agree_count(total: usize) -> usize {
    (MODAL_AGREEMENT_MIN * total as f64).ceil() as usize
}

/// How many reference points column pruning may try before giving up.
const PRUNE_REFERENCES: usize = 8;

pub(crate) fn min_valid_count(total: usize) -> usize {
    (numlin::MIN_VALID_FRACTION * total as f64).ceil() as usize
}

/// Largest column norm of an evaluated generator matrix, used as the scale
/// of a sample point when masking near-pole draws.
fn matrix_scale(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Shared context for geometric computations: the expression DAG, the state
/// coordinates, the sample points and the numeric configuration.
pub struct GeoCtx {
    dag: ExprDag,
    states: Vec<Expr>,
    samples: Vec<Point>,
    pub cfg: CheckConfig,
    ev: Evaluator,
}

impl GeoCtx {
    pub fn new(
        dag: &ExprDag,
        states: &[Expr],
        samples: Vec<Point>,
        cfg: CheckConfig,
    ) -> Result<Self, GeomError> {
        if samples.is_empty() {
            return Err(GeomError::NoSamples);
        }
        for s in states {
            assert!(s.as_symbol().is_some(), "state coordinates must be symbols");
        }
        Ok(GeoCtx {
            dag: dag.clone(),
            states: states.to_vec(),
            samples,
            cfg,
            ev: Evaluator::new(dag),
        })
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn dag(&self) -> &ExprDag {
        &self.dag
    }

    pub fn states(&self) -> &[Expr] {
        &self.states
    }

    pub fn samples(&self) -> &[Point] {
        &self.samples
    }

    pub fn evaluator(&mut self) -> &mut Evaluator {
        &mut self.ev
    }

    /// Evaluate a list of expressions at every sample point, one result row
    /// per point (failed points keep their error).
    pub fn eval_at_samples(&mut self, exprs: &[Expr]) -> Vec<Result<Vec<f64>, EvalError>> {
        self.ev.eval_partial(exprs, &self.samples)
    }

    /// The coordinate field ∂/∂xᵢ.
    pub fn coord_field(&self, i: usize) -> VectorField {
        let mut comps = vec![self.dag.zero(); self.n()];
        comps[i] = self.dag.one();
        VectorField::new(comps)
    }

    /// Lie derivative of a scalar along a field: Σⱼ vⱼ ∂h/∂xⱼ.
    pub fn lie_scalar(&self, v: &VectorField, h: &Expr) -> Expr {
        let mut terms = Vec::new();
        for (j, vj) in v.comps.iter().enumerate() {
            if vj.is_zero() {
                continue;
            }
            let dh = h.diff(&self.states[j]);
            if dh.is_zero() {
                continue;
            }
            terms.push(self.dag.mul(&[vj.clone(), dh]));
        }
        self.dag.add(&terms)
    }

    /// Lie bracket [v, w]ᵢ = Σⱼ vⱼ ∂wᵢ/∂xⱼ − wⱼ ∂vᵢ/∂xⱼ.
    pub fn lie_bracket(&self, v: &VectorField, w: &VectorField) -> VectorField {
        let n = self.n();
        assert_eq!(v.dim(), n, "field dimension mismatch");
        assert_eq!(w.dim(), n, "field dimension mismatch");
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let fwd = self.lie_scalar(v, &w.comps[i]);
            let bwd = self.lie_scalar(w, &v.comps[i]);
            comps.push(self.dag.sub(&fwd, &bwd));
        }
        VectorField::new(comps)
    }

    /// Iterated bracket ad_f^k g = [f, [f, ... [f, g]]].
    pub fn ad_pow(&self, f: &VectorField, g: &VectorField, k: usize) -> VectorField {
        let mut cur = g.clone();
        for _ in 0..k {
            cur = self.lie_bracket(f, &cur);
        }
        cur
    }

    /// Pointwise linear combination Σⱼ cⱼ vⱼ with expression coefficients.
    pub fn combine(&self, coeffs: &[Expr], fields: &[VectorField]) -> VectorField {
        assert_eq!(coeffs.len(), fields.len());
        let n = self.n();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let terms: Vec<Expr> = coeffs
                .iter()
                .zip(fields)
                .filter(|(c, v)| !c.is_zero() && !v.comps[i].is_zero())
                .map(|(c, v)| self.dag.mul(&[c.clone(), v.comps[i].clone()]))
                .collect();
            comps.push(self.dag.add(&terms));
        }
        VectorField::new(comps)
    }

    /// Pairing ⟨ω, v⟩ = Σᵢ ωᵢ vᵢ.
    pub fn pairing(&self, om: &OneForm, v: &VectorField) -> Expr {
        let terms: Vec<Expr> = om
            .comps
            .iter()
            .zip(&v.comps)
            .filter(|(o, c)| !o.is_zero() && !c.is_zero())
            .map(|(o, c)| self.dag.mul(&[o.clone(), c.clone()]))
            .collect();
        self.dag.add(&terms)
    }

    /// dω(v, w) = L_v⟨ω, w⟩ − L_w⟨ω, v⟩ − ⟨ω, [v, w]⟩.
    pub fn two_form_action(&self, om: &OneForm, v: &VectorField, w: &VectorField) -> Expr {
        let ow = self.pairing(om, w);
        let ov = self.pairing(om, v);
        let a = self.lie_scalar(v, &ow);
        let b = self.lie_scalar(w, &ov);
        let br = self.lie_bracket(v, w);
        let c = self.pairing(om, &br);
        let ab = self.dag.sub(&a, &b);
        self.dag.sub(&ab, &c)
    }

    /// Evaluate fields at every sample point; failed points become `None`,
    /// as do points whose values blow up far above the median point (the
    /// draw landed near a pole of the rational expressions, so its digits
    /// are not trustworthy). Errors out when fewer than
    /// [`numlin::MIN_VALID_FRACTION`] of the points survive.
    pub(crate) fn eval_columns(
        &mut self,
        fields: &[VectorField],
    ) -> Result<Vec<Option<DMatrix<f64>>>, GeomError> {
        let n = self.n();
        let k = fields.len();
        let mut exprs = Vec::with_capacity(n * k);
        for f in fields {
            if f.dim() != n {
                return Err(GeomError::DimensionMismatch {
                    expected: n,
                    got: f.dim(),
                });
            }
            exprs.extend(f.comps.iter().cloned());
        }
        let rows = self.ev.eval_partial(&exprs, &self.samples);
        let mut first_err = None;
        let mut mats: Vec<Option<DMatrix<f64>>> = rows
            .into_iter()
            .map(|r| match r {
                // Values arrive field-major; fields are the columns.
                Ok(vals) => Some(DMatrix::from_vec(n, k, vals)),
                Err(e) => {
                    first_err.get_or_insert(e);
                    None
                }
            })
            .collect();
        if mats.iter().all(|m| m.is_none()) {
            return Err(GeomError::Eval(first_err.unwrap()));
        }
        let mut scales: Vec<f64> = mats.iter().flatten().map(matrix_scale).collect();
        scales.sort_by(f64::total_cmp);
        let median = scales[scales.len() / 2];
        if median > 0.0 {
            for slot in mats.iter_mut() {
                if slot.as_ref().is_some_and(|m| matrix_scale(m) > numlin::SCALE_SPREAD * median) {
                    *slot = None;
                }
            }
        }
        let valid = mats.iter().filter(|m| m.is_some()).count();
        if valid < min_valid_count(self.samples.len()) {
            return Err(GeomError::EvalUnstable {
                valid,
                total: self.samples.len(),
            });
        }
        Ok(mats)
    }

    /// Build a distribution from generators: evaluate them, take the modal
    /// rank, and prune the generator list to a subset of that size when it
    /// is redundant (keeping the span, verified at every point).
    pub fn distribution(&mut self, gens: Vec<VectorField>) -> Result<Distribution, GeomError> {
        let mats = self.eval_columns(&gens)?;
        let rank = self.vote_rank(&mats)?;
        if gens.len() > rank {
            // Pruning must succeed: carrying a redundant generator list
            // forward makes the next bracket step explode quadratically in
            // expression count, so an unprunable list is treated as a
            // degenerate draw rather than kept.
            let Some(keep) = self.prune_columns(&mats, rank) else {
                return Err(GeomError::PivotDegenerate {
                    tried: PRUNE_REFERENCES,
                });
            };
            let gens: Vec<VectorField> = keep.iter().map(|&j| gens[j].clone()).collect();
            let mats: Vec<Option<DMatrix<f64>>> = mats
                .iter()
                .map(|m| m.as_ref().map(|m| m.select_columns(keep.iter())))
                .collect();
            let full = self.full_mask(&mats, rank);
            return Ok(Distribution { gens, mats, rank, full });
        }
        let full = self.full_mask(&mats, rank);
        Ok(Distribution { gens, mats, rank, full })
    }

    /// Points where an evaluated basis confidently shows the given rank.
    fn full_mask(&self, mats: &[Option<DMatrix<f64>>], rank: usize) -> Vec<bool> {
        mats.iter()
            .map(|m| {
                m.as_ref()
                    .is_some_and(|m| numlin::rank_at_confident(m, self.cfg.tol_rel) == Some(rank))
            })
            .collect()
    }

    /// Modal rank over the sample points. Points whose spectrum leaves the
    /// decision ambiguous abstain (see [`numlin::rank_at_confident`]); the
    /// vote needs enough confident points and the usual agreement share
    /// among them.
    fn vote_rank(&self, mats: &[Option<DMatrix<f64>>]) -> Result<usize, GeomError> {
        let ranks: Vec<usize> = mats
            .iter()
            .flatten()
            .filter_map(|m| numlin::rank_at_confident(m, self.cfg.tol_rel))
            .collect();
        if ranks.len() < min_valid_count(self.samples.len()) {
            return Err(GeomError::EvalUnstable {
                valid: ranks.len(),
                total: self.samples.len(),
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
        Ok(vote.modal)
    }

    /// Pick `rank` columns spanning the same space, confirmed at every
    /// point. A near-degenerate reference point selects a useless subset,
    /// so several confident reference points are tried before giving up.
    fn prune_columns(&self, mats: &[Option<DMatrix<f64>>], rank: usize) -> Option<Vec<usize>> {
        let mut tried = 0usize;
        for reference in mats.iter().flatten() {
            if tried == PRUNE_REFERENCES {
                return None;
            }
            // Only points that confidently see the voted rank may steer the
            // greedy selection.
            if numlin::rank_at_confident(reference, self.cfg.tol_rel) != Some(rank) {
                continue;
            }
            tried += 1;
            let k = reference.ncols();
            let mut keep: Vec<usize> = Vec::with_capacity(rank);
            let mut cur = 0usize;
            for j in 0..k {
                if keep.len() == rank {
                    break;
                }
                let mut trial = keep.clone();
                trial.push(j);
                let r = numlin::rank_at(&reference.select_columns(trial.iter()), self.cfg.tol_rel);
                if r > cur {
                    keep.push(j);
                    cur = r;
                }
            }
            if keep.len() != rank {
                continue;
            }
            let ranks: Vec<usize> = mats
                .iter()
                .flatten()
                .filter_map(|m| {
                    numlin::rank_at_confident(&m.select_columns(keep.iter()), self.cfg.tol_rel)
                })
                .collect();
            if ranks.len() < min_valid_count(self.samples.len()) {
                continue;
            }
            let vote = numlin::modal_rank(&ranks);
            if vote.modal == rank && vote.is_stable() {
                return Some(keep);
            }
        }
        None
    }

    /// Test whether a field lies in a distribution at the sample points.
    pub fn contains_field(
        &mut self,
        d: &Distribution,
        v: &VectorField,
    ) -> Result<SpanVote, GeomError> {
        let cols = self.eval_columns(std::slice::from_ref(v))?;
        let mut vote = SpanVote::new(self.samples.len());
        for (idx, (m, c)) in d.mats.iter().zip(&cols).enumerate() {
            if let (Some(basis), Some(col)) = (m, c) {
                if !d.full[idx] {
                    continue;
                }
                let vec = DVector::from_column_slice(col.as_slice());
                let chk = numlin::in_span_at(basis, &vec, self.cfg.tol_rel);
                vote.record(idx, chk.inside, chk.residual);
            }
        }
        Ok(vote)
    }

    /// Test whether `inner ⊆ outer` at the sample points (all generators of
    /// `inner` inside the span of `outer`, point by point).
    pub fn contains_dist(&mut self, outer: &Distribution, inner: &Distribution) -> SpanVote {
        let mut vote = SpanVote::new(self.samples.len());
        for (idx, (om, im)) in outer.mats.iter().zip(&inner.mats).enumerate() {
            if !outer.full[idx] {
                continue;
            }
            if let (Some(basis), Some(cols)) = (om, im) {
                let mut ok = true;
                let mut worst = 0.0f64;
                for j in 0..cols.ncols() {
                    let chk =
                        numlin::in_span_at(basis, &cols.column(j).into_owned(), self.cfg.tol_rel);
                    ok &= chk.inside;
                    worst = worst.max(chk.residual);
                }
                vote.record(idx, ok, worst);
            }
        }
        vote
    }

    /// Equality of distributions: same modal rank and mutual inclusion.
    pub fn same_dist(&mut self, a: &Distribution, b: &Distribution) -> bool {
        a.rank == b.rank && self.contains_dist(a, b).holds() && self.contains_dist(b, a).holds()
    }

    /// Are all brackets of generators contained in the distribution?
    pub fn is_involutive(&mut self, d: &Distribution) -> Result<SpanVote, GeomError> {
        let mut vote = SpanVote::new(self.samples.len());
        if d.rank == self.n() || d.gens.len() <= 1 {
            // The full tangent space and line fields are involutive without
            // computing any brackets.
            vote.pass_all();
            return Ok(vote);
        }
        let mut brackets = Vec::new();
        for i in 0..d.gens.len() {
            for j in (i + 1)..d.gens.len() {
                brackets.push(self.lie_bracket(&d.gens[i], &d.gens[j]));
            }
        }
        let cols = self.eval_columns(&brackets)?;
        for (idx, (m, c)) in d.mats.iter().zip(&cols).enumerate() {
            if !d.full[idx] {
                continue;
            }
            if let (Some(basis), Some(bm)) = (m, c) {
                let mut ok = true;
                let mut worst = 0.0f64;
                for j in 0..bm.ncols() {
                    let chk =
                        numlin::in_span_at(basis, &bm.column(j).into_owned(), self.cfg.tol_rel);
                    ok &= chk.inside;
                    worst = worst.max(chk.residual);
                }
                vote.record(idx, ok, worst);
            }
        }
        Ok(vote)
    }

    /// One step of the derived flag: D + [D, D].
    pub fn derived_step(&mut self, d: &Distribution) -> Result<Distribution, GeomError> {
        if d.rank == self.n() || d.gens.len() <= 1 {
            return Ok(d.clone());
        }
        let mut gens = d.gens.clone();
        for i in 0..d.gens.len() {
            for j in (i + 1)..d.gens.len() {
                gens.push(self.lie_bracket(&d.gens[i], &d.gens[j]));
            }
        }
        self.distribution(gens)
    }

    /// The derived flag D ⊆ D + [D,D] ⊆ ..., stopping when the rank stops
    /// growing or reaches the full dimension.
    pub fn derived_flag(&mut self, d: Distribution) -> Result<Vec<Distribution>, GeomError> {
        let mut flag = vec![d];
        loop {
            let last = flag.last().unwrap();
            if last.rank == self.n() {
                break;
            }
            let next = self.derived_step(last)?;
            if next.rank == last.rank {
                break;
            }
            flag.push(next);
            if flag.len() > self.n() + 1 {
                break; // ranks strictly increase, so this cannot trigger
            }
        }
        Ok(flag)
    }

    /// Smallest involutive distribution containing `d`.
    pub fn involutive_closure(&mut self, d: Distribution) -> Result<Distribution, GeomError> {
        Ok(self.derived_flag(d)?.pop().unwrap())
    }

    /// Annihilator D^⊥: one-forms vanishing on every generator, obtained by
    /// symbolic elimination and verified at the sample points.
    pub fn annihilator(&mut self, d: &Distribution) -> Result<Vec<OneForm>, GeomError> {
        let n = self.n();
        if d.rank == n {
            return Ok(Vec::new());
        }
        if d.gens.is_empty() {
            return Ok((0..n)
                .map(|i| OneForm::new(self.coord_field(i).comps))
                .collect());
        }
        let rows: Vec<Vec<Expr>> = d.gens.iter().map(|g| g.comps.clone()).collect();
        let kern = self.symbolic_kernel(&rows)?;
        Ok(kern.basis.into_iter().map(OneForm::new).collect())
    }

    /// Cauchy characteristic C(D) = { v ∈ D : [v, D] ⊆ D }.
    ///
    /// Writing v = Σ λⱼ wⱼ in the generators, the condition reduces to the
    /// linear system Σⱼ λⱼ ⟨ωᵃ, [wⱼ, wₖ]⟩ = 0 over all annihilator forms ωᵃ
    /// and generators wₖ (the derivative terms drop because ωᵃ(wⱼ) ≡ 0), so
    /// the characteristic directions come from one more symbolic kernel.
    pub fn cauchy_characteristic(&mut self, d: &Distribution) -> Result<Distribution, GeomError> {
        let n = self.n();
        if d.rank == n || d.gens.len() <= 1 {
            return Ok(d.clone());
        }
        let forms = self.annihilator(d)?;
        let k = d.gens.len();
        // Brackets of all ordered pairs; [wⱼ, wₖ] = −[wₖ, wⱼ] fills the rest.
        let mut bracket = vec![vec![None; k]; k];
        for j in 0..k {
            for l in (j + 1)..k {
                let b = self.lie_bracket(&d.gens[j], &d.gens[l]);
                bracket[j][l] = Some(b);
            }
        }
        let mut rows = Vec::with_capacity(forms.len() * k);
        for om in &forms {
            for kk in 0..k {
                let mut row = Vec::with_capacity(k);
                for j in 0..k {
                    let entry = if j == kk {
                        self.dag.zero()
                    } else if j < kk {
                        self.pairing(om, bracket[j][kk].as_ref().unwrap())
                    } else {
                        let e = self.pairing(om, bracket[kk][j].as_ref().unwrap());
                        self.dag.neg(&e)
                    };
                    row.push(entry);
                }
                rows.push(row);
            }
        }
        let kern = self.symbolic_kernel(&rows)?;
        let gens: Vec<VectorField> = kern
            .basis
            .iter()
            .map(|lambda| self.combine(lambda, &d.gens))
            .collect();
        if gens.is_empty() {
            return Ok(Distribution {
                gens: Vec::new(),
                mats: self
                    .samples
                    .iter()
                    .map(|_| Some(DMatrix::zeros(n, 0)))
                    .collect(),
                rank: 0,
                full: self.samples.iter().map(|_| true).collect(),
            });
        }
        self.distribution(gens)
    }
}
