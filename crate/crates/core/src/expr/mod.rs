//! Immutable, hash-consed expression graphs with exact differentiation.
//!
//! All symbolic objects in this crate are nodes in an append-only DAG owned by
//! an [`ExprDag`]. Structurally identical subexpressions are interned to the
//! same node, so equality of [`Expr`] handles is O(1) and repeated
//! differentiation shares work through a global derivative cache.
//!
//! The node language is deliberately small: constants (exact rationals or
//! floats), symbols, n-ary sums and products, quotients, integer powers,
//! `sin`/`cos`/`tan`, negation, and a first-class linear-solve node
//! `solve(M, b)` representing the components of `M⁻¹ b`. The solve node is
//! what lets Euler–Lagrange models avoid symbolic mass-matrix inversion while
//! remaining exactly differentiable.

mod dd;
mod diff;
mod eval;
mod parse;
mod print;

pub use eval::{EvalError, Evaluator, Point};
pub use parse::{ParseError, ParseErrorKind};
pub use print::PrintError;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{ToPrimitive, Zero};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, MutexGuard};

/// Index of a node inside its owning DAG.
pub(crate) type NodeId = u32;

/// Interned symbol identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct SymbolId(pub(crate) u32);

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub(crate) enum Node {
    /// Exact rational constant.
    Rat(Box<BigRational>),
    /// Floating constant, stored as bits so the node is hashable.
    Float(u64),
    Sym(SymbolId),
    Sum(Box<[NodeId]>),
    Prod(Box<[NodeId]>),
    Quot(NodeId, NodeId),
    Pow(NodeId, i32),
    Sin(NodeId),
    Cos(NodeId),
    Tan(NodeId),
    Neg(NodeId),
    /// Linear system `M x = b`; evaluates to the whole solution vector.
    /// Row-major matrix of `dim * dim` entries, `dim = rhs.len()`.
    SolveSys { mat: Box<[NodeId]>, rhs: Box<[NodeId]> },
    /// One component of a [`Node::SolveSys`] solution vector.
    SolveComp { sys: NodeId, idx: u32 },
}

pub(crate) struct DagInner {
    pub(crate) nodes: Vec<Node>,
    intern: HashMap<u64, Vec<NodeId>>,
    pub(crate) sym_names: Vec<String>,
    sym_ids: HashMap<String, SymbolId>,
    /// Global derivative cache: (node, symbol) -> derivative node.
    /// Solve-system nodes map to their derived system under the same key.
    deriv: HashMap<(NodeId, SymbolId), NodeId>,
    zero: NodeId,
    one: NodeId,
}

/// Shared, thread-safe expression arena. Cloning is cheap and refers to the
/// same underlying graph.
#[derive(Clone)]
pub struct ExprDag {
    inner: Arc<Mutex<DagInner>>,
}

/// Handle to one node of an [`ExprDag`].
#[derive(Clone)]
pub struct Expr {
    pub(crate) dag: ExprDag,
    pub(crate) id: NodeId,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.dag.inner, &other.dag.inner) && self.id == other.id
    }
}
impl Eq for Expr {}
impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}
impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.display())
    }
}
impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.display())
    }
}

fn hash_node(n: &Node) -> u64 {
    let mut h = DefaultHasher::new();
    n.hash(&mut h);
    h.finish()
}

impl DagInner {
    fn intern(&mut self, n: Node) -> NodeId {
        let h = hash_node(&n);
        if let Some(bucket) = self.intern.get(&h) {
            for &id in bucket {
                if self.nodes[id as usize] == n {
                    return id;
                }
            }
        }
        let id = self.nodes.len() as NodeId;
        assert!(id < u32::MAX, "expression graph exhausted");
        self.nodes.push(n);
        self.intern.entry(h).or_default().push(id);
        id
    }

    pub(crate) fn rat_of(&self, id: NodeId) -> Option<&BigRational> {
        match &self.nodes[id as usize] {
            Node::Rat(r) => Some(r),
            _ => None,
        }
    }

    fn const_of(&self, id: NodeId) -> Option<f64> {
        match &self.nodes[id as usize] {
            Node::Rat(r) => r.to_f64(),
            Node::Float(b) => Some(f64::from_bits(*b)),
            _ => None,
        }
    }

    fn is_const(&self, id: NodeId) -> bool {
        matches!(self.nodes[id as usize], Node::Rat(_) | Node::Float(_))
    }

    pub(crate) fn irat(&mut self, r: BigRational) -> NodeId {
        self.intern(Node::Rat(Box::new(r)))
    }

    pub(crate) fn iint(&mut self, k: i64) -> NodeId {
        self.irat(BigRational::from(BigInt::from(k)))
    }

    pub(crate) fn ifloat(&mut self, v: f64) -> NodeId {
        assert!(v.is_finite(), "non-finite constant");
        // Keep a single representation of zero/one so identity folding fires.
        if v == 0.0 {
            return self.zero;
        }
        if v == 1.0 {
            return self.one;
        }
        self.intern(Node::Float(v.to_bits()))
    }

    pub(crate) fn isym(&mut self, name: &str) -> NodeId {
        let sid = self.sym_id(name);
        self.intern(Node::Sym(sid))
    }

    pub(crate) fn sym_id(&mut self, name: &str) -> SymbolId {
        if let Some(&sid) = self.sym_ids.get(name) {
            return sid;
        }
        let sid = SymbolId(self.sym_names.len() as u32);
        self.sym_names.push(name.to_string());
        self.sym_ids.insert(name.to_string(), sid);
        sid
    }

    pub(crate) fn lookup_sym(&self, name: &str) -> Option<SymbolId> {
        self.sym_ids.get(name).copied()
    }

    /// Fold a set of constant ids into one constant id, exactly when all are
    /// rational, through f64 otherwise. `mul` selects product vs sum.
    fn fold_consts(&mut self, ids: &[NodeId], mul: bool) -> NodeId {
        let all_rat = ids.iter().all(|&i| matches!(self.nodes[i as usize], Node::Rat(_)));
        if all_rat {
            let mut acc = if mul {
                BigRational::from(BigInt::from(1))
            } else {
                BigRational::zero()
            };
            for &i in ids {
                let r = self.rat_of(i).unwrap().clone();
                if mul {
                    acc *= r;
                } else {
                    acc += r;
                }
            }
            self.irat(acc)
        } else {
            let mut acc = if mul { 1.0 } else { 0.0 };
            for &i in ids {
                let v = self.const_of(i).unwrap();
                if mul {
                    acc *= v;
                } else {
                    acc += v;
                }
            }
            self.ifloat(acc)
        }
    }

    /// Splice nested sums (or products, per `tag`) one level deep.
    fn flatten(&self, children: &[NodeId], sums: bool) -> Vec<NodeId> {
        let mut flat = Vec::with_capacity(children.len());
        for &c in children {
            match &self.nodes[c as usize] {
                Node::Sum(inner) if sums => flat.extend_from_slice(inner),
                Node::Prod(inner) if !sums => flat.extend_from_slice(inner),
                _ => flat.push(c),
            }
        }
        flat
    }

    /// n-ary sum with flattening, constant folding, `x + 0 = x` and
    /// cancellation of exact `t + (-t)` pairs.
    pub(crate) fn iadd(&mut self, children: &[NodeId]) -> NodeId {
        let flat = self.flatten(children, true);
        let mut consts = Vec::new();
        let mut rest = Vec::new();
        for c in flat {
            if self.is_const(c) {
                consts.push(c);
            } else {
                rest.push(c);
            }
        }
        self.cancel_pairs(&mut rest);
        // Canonical child order makes the sum commutative at the node level,
        // so differently built but equal sums intern to one id.
        rest.sort_unstable();
        let cid = self.fold_consts(&consts, false);
        let mut out = Vec::with_capacity(rest.len() + 1);
        if cid != self.zero {
            out.push(cid);
        }
        out.extend(rest);
        match out.len() {
            0 => self.zero,
            1 => out[0],
            _ => self.intern(Node::Sum(out.into_boxed_slice())),
        }
    }

    /// Remove matching `t`/`Neg(t)` pairs from a term list, keeping order.
    fn cancel_pairs(&self, terms: &mut Vec<NodeId>) {
        let core = |id: NodeId| -> (NodeId, bool) {
            match self.nodes[id as usize] {
                Node::Neg(x) => (x, true),
                _ => (id, false),
            }
        };
        let mut pos: HashMap<NodeId, usize> = HashMap::new();
        let mut neg: HashMap<NodeId, usize> = HashMap::new();
        for &t in terms.iter() {
            let (c, negated) = core(t);
            *if negated { &mut neg } else { &mut pos }.entry(c).or_insert(0) += 1;
        }
        let mut cancel: HashMap<NodeId, (usize, usize)> = HashMap::new();
        for (&c, &np) in &pos {
            if let Some(&nn) = neg.get(&c) {
                let k = np.min(nn);
                cancel.insert(c, (k, k));
            }
        }
        if cancel.is_empty() {
            return;
        }
        terms.retain(|&t| {
            let (c, negated) = core(t);
            if let Some(slot) = cancel.get_mut(&c) {
                let n = if negated { &mut slot.1 } else { &mut slot.0 };
                if *n > 0 {
                    *n -= 1;
                    return false;
                }
            }
            true
        });
    }

    /// n-ary product with flattening, constant folding, `x * 1 = x`, `x * 0 = 0`.
    pub(crate) fn iprod(&mut self, children: &[NodeId]) -> NodeId {
        let flat = self.flatten(children, false);
        let mut consts = Vec::new();
        let mut rest = Vec::new();
        for c in flat {
            if self.is_const(c) {
                consts.push(c);
            } else {
                rest.push(c);
            }
        }
        let cid = self.fold_consts(&consts, true);
        if cid == self.zero {
            return self.zero;
        }
        rest.sort_unstable();
        let mut out = Vec::with_capacity(rest.len() + 1);
        if cid != self.one {
            out.push(cid);
        }
        out.extend(rest);
        match out.len() {
            0 => self.one,
            1 => out[0],
            _ => self.intern(Node::Prod(out.into_boxed_slice())),
        }
    }

    pub(crate) fn isub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.ineg(b);
        self.iadd(&[a, nb])
    }

    pub(crate) fn iquot(&mut self, num: NodeId, den: NodeId) -> NodeId {
        if den == self.one {
            return num;
        }
        if let (Node::Rat(_), Node::Rat(_)) = (&self.nodes[num as usize], &self.nodes[den as usize]) {
            let d = self.rat_of(den).unwrap();
            if !d.is_zero() {
                let q = self.rat_of(num).unwrap() / d;
                return self.irat(q);
            }
        }
        if self.is_const(num) && self.is_const(den) {
            let d = self.const_of(den).unwrap();
            if d != 0.0 {
                let q = self.const_of(num).unwrap() / d;
                return self.ifloat(q);
            }
        }
        self.intern(Node::Quot(num, den))
    }

    pub(crate) fn ipow(&mut self, base: NodeId, k: i32) -> NodeId {
        if k == 0 {
            return self.one; // 0^0 = 1 by convention
        }
        if k == 1 {
            return base;
        }
        if let Node::Rat(r) = &self.nodes[base as usize] {
            let r = (**r).clone();
            if !r.is_zero() || k > 0 {
                return self.irat(r.pow(k));
            }
        }
        if let Node::Float(b) = self.nodes[base as usize] {
            let v = f64::from_bits(b);
            if v != 0.0 || k > 0 {
                let p = v.powi(k);
                if p.is_finite() {
                    return self.ifloat(p);
                }
            }
        }
        self.intern(Node::Pow(base, k))
    }

    pub(crate) fn ineg(&mut self, a: NodeId) -> NodeId {
        match &self.nodes[a as usize] {
            Node::Rat(r) => {
                let r = -(**r).clone();
                self.irat(r)
            }
            Node::Float(b) => {
                let v = -f64::from_bits(*b);
                self.ifloat(v)
            }
            Node::Neg(x) => *x,
            // Distribute over sums so that a − (b + c) and a − b − c meet in
            // one canonical node and pairwise cancellation can see through.
            Node::Sum(ch) => {
                let ch = ch.clone();
                let negd: Vec<NodeId> = ch.iter().map(|&c| self.ineg(c)).collect();
                self.iadd(&negd)
            }
            _ => self.intern(Node::Neg(a)),
        }
    }

    // Trigonometric functions fold only at the exact special value zero;
    // folding at other constants would trade an exact node for an inexact
    // float and break print/parse round trips.
    pub(crate) fn isin(&mut self, a: NodeId) -> NodeId {
        if a == self.zero {
            return self.zero;
        }
        self.intern(Node::Sin(a))
    }

    pub(crate) fn icos(&mut self, a: NodeId) -> NodeId {
        if a == self.zero {
            return self.one;
        }
        self.intern(Node::Cos(a))
    }

    pub(crate) fn itan(&mut self, a: NodeId) -> NodeId {
        if a == self.zero {
            return self.zero;
        }
        self.intern(Node::Tan(a))
    }

    /// Intern the solve system `M x = b` and return the component nodes.
    pub(crate) fn isolve(&mut self, mat: &[NodeId], rhs: &[NodeId]) -> Vec<NodeId> {
        let dim = rhs.len();
        assert_eq!(mat.len(), dim * dim, "solve matrix must be square");
        assert!(dim > 0, "empty solve system");
        let sys = self.intern(Node::SolveSys {
            mat: mat.to_vec().into_boxed_slice(),
            rhs: rhs.to_vec().into_boxed_slice(),
        });
        (0..dim as u32)
            .map(|idx| self.intern(Node::SolveComp { sys, idx }))
            .collect()
    }

    /// Ascending node ids reachable from `roots`; a valid topological order
    /// because constructors only refer to already-interned children.
    pub(crate) fn reachable(&self, roots: &[NodeId]) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = Vec::new();
        for &r in roots {
            if !seen[r as usize] {
                seen[r as usize] = true;
                stack.push(r);
            }
        }
        let mut out = Vec::new();
        let mut kids: Vec<NodeId> = Vec::new();
        while let Some(id) = stack.pop() {
            out.push(id);
            kids.clear();
            self.children_of(id, &mut kids);
            for &c in &kids {
                if !seen[c as usize] {
                    seen[c as usize] = true;
                    stack.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub(crate) fn children_of(&self, id: NodeId, out: &mut Vec<NodeId>) {
        match &self.nodes[id as usize] {
            Node::Rat(_) | Node::Float(_) | Node::Sym(_) => {}
            Node::Sum(ch) | Node::Prod(ch) => out.extend_from_slice(ch),
            Node::Quot(a, b) => {
                out.push(*a);
                out.push(*b);
            }
            Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Tan(a) | Node::Neg(a) => {
                out.push(*a)
            }
            Node::SolveSys { mat, rhs } => {
                out.extend_from_slice(mat);
                out.extend_from_slice(rhs);
            }
            Node::SolveComp { sys, .. } => out.push(*sys),
        }
    }
}

impl Default for ExprDag {
    fn default() -> Self {
        Self::new()
    }
}

impl ExprDag {
    pub fn new() -> Self {
        let mut inner = DagInner {
            nodes: Vec::new(),
            intern: HashMap::new(),
            sym_names: Vec::new(),
            sym_ids: HashMap::new(),
            deriv: HashMap::new(),
            zero: 0,
            one: 0,
        };
        inner.zero = inner.irat(BigRational::zero());
        inner.one = inner.irat(BigRational::from(BigInt::from(1)));
        ExprDag {
            inner: Arc::new(Mutex::new(inner)),
        }
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, DagInner> {
        self.inner.lock().expect("expression dag poisoned")
    }

    fn wrap(&self, id: NodeId) -> Expr {
        Expr {
            dag: self.clone(),
            id,
        }
    }

    pub fn same_dag(&self, other: &ExprDag) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Number of interned nodes (diagnostic).
    pub fn len(&self) -> usize {
        self.lock().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the zero/one constants always exist
    }

    pub fn int(&self, k: i64) -> Expr {
        let id = self.lock().iint(k);
        self.wrap(id)
    }

    pub fn rat(&self, num: i64, den: i64) -> Expr {
        assert!(den != 0, "zero denominator");
        let r = BigRational::new(BigInt::from(num), BigInt::from(den));
        let id = self.lock().irat(r);
        self.wrap(id)
    }

    pub fn float(&self, v: f64) -> Expr {
        let id = self.lock().ifloat(v);
        self.wrap(id)
    }

    pub fn zero(&self) -> Expr {
        let id = self.lock().zero;
        self.wrap(id)
    }

    pub fn one(&self) -> Expr {
        let id = self.lock().one;
        self.wrap(id)
    }

    pub fn symbol(&self, name: &str) -> Expr {
        let id = self.lock().isym(name);
        self.wrap(id)
    }

    pub fn symbol_id(&self, name: &str) -> SymbolId {
        self.lock().sym_id(name)
    }

    pub fn symbol_name(&self, sid: SymbolId) -> String {
        self.lock().sym_names[sid.0 as usize].clone()
    }

    pub fn add(&self, terms: &[Expr]) -> Expr {
        let ids: Vec<NodeId> = terms.iter().map(|e| self.check(e)).collect();
        let id = self.lock().iadd(&ids);
        self.wrap(id)
    }

    pub fn mul(&self, factors: &[Expr]) -> Expr {
        let ids: Vec<NodeId> = factors.iter().map(|e| self.check(e)).collect();
        let id = self.lock().iprod(&ids);
        self.wrap(id)
    }

    pub fn sub(&self, a: &Expr, b: &Expr) -> Expr {
        let (a, b) = (self.check(a), self.check(b));
        let id = self.lock().isub(a, b);
        self.wrap(id)
    }

    pub fn quot(&self, num: &Expr, den: &Expr) -> Expr {
        let (n, d) = (self.check(num), self.check(den));
        let id = self.lock().iquot(n, d);
        self.wrap(id)
    }

    pub fn pow(&self, base: &Expr, k: i32) -> Expr {
        let b = self.check(base);
        let id = self.lock().ipow(b, k);
        self.wrap(id)
    }

    pub fn neg(&self, a: &Expr) -> Expr {
        let a = self.check(a);
        let id = self.lock().ineg(a);
        self.wrap(id)
    }

    pub fn sin(&self, a: &Expr) -> Expr {
        let a = self.check(a);
        let id = self.lock().isin(a);
        self.wrap(id)
    }

    pub fn cos(&self, a: &Expr) -> Expr {
        let a = self.check(a);
        let id = self.lock().icos(a);
        self.wrap(id)
    }

    pub fn tan(&self, a: &Expr) -> Expr {
        let a = self.check(a);
        let id = self.lock().itan(a);
        self.wrap(id)
    }

    /// Components of the solution of `M x = b`. Row-major matrix.
    pub fn solve(&self, mat: &[Vec<Expr>], rhs: &[Expr]) -> Vec<Expr> {
        let dim = rhs.len();
        assert!(mat.len() == dim && mat.iter().all(|r| r.len() == dim));
        let mids: Vec<NodeId> = mat.iter().flatten().map(|e| self.check(e)).collect();
        let rids: Vec<NodeId> = rhs.iter().map(|e| self.check(e)).collect();
        let ids = self.lock().isolve(&mids, &rids);
        ids.into_iter().map(|i| self.wrap(i)).collect()
    }

    fn check(&self, e: &Expr) -> NodeId {
        assert!(
            Arc::ptr_eq(&self.inner, &e.dag.inner),
            "expression belongs to a different dag"
        );
        e.id
    }
}

impl Expr {
    pub fn dag(&self) -> &ExprDag {
        &self.dag
    }

    /// True if this node is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        let inner = self.dag.lock();
        self.id == inner.zero
    }

    /// Constant value if the node is a literal constant.
    pub fn as_const(&self) -> Option<f64> {
        self.dag.lock().const_of(self.id)
    }

    /// Symbol id if the node is a symbol.
    pub fn as_symbol(&self) -> Option<SymbolId> {
        match self.dag.lock().nodes[self.id as usize] {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    /// Set of symbols occurring structurally in the expression.
    pub fn free_symbols(&self) -> Vec<SymbolId> {
        let inner = self.dag.lock();
        let mut out = Vec::new();
        for id in inner.reachable(&[self.id]) {
            if let Node::Sym(s) = inner.nodes[id as usize] {
                out.push(s);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn depends_on(&self, sym: SymbolId) -> bool {
        self.free_symbols().contains(&sym)
    }
}

#[cfg(test)]
mod tests;
