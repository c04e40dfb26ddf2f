//! Exact partial differentiation.
//!
//! Derivatives are computed bottom-up over the reachable node set, so shared
//! subgraphs are differentiated once. Results are memoized in the dag itself
//! keyed by (node, symbol): repeated Lie-bracket computations reuse earlier
//! work instead of re-deriving the same components.
//!
//! Solve systems use the implicit rule: with `s = M⁻¹ b`,
//! `∂s = M⁻¹ (∂b − (∂M) s)`, which stays inside the node language and shares
//! the original system's matrix.

use super::{DagInner, Expr, Node, NodeId, SymbolId};

impl DagInner {
    fn deriv_cached(&self, id: NodeId, x: SymbolId) -> Option<NodeId> {
        self.deriv.get(&(id, x)).copied()
    }

    /// Derivative of `root` with respect to symbol `x`.
    pub(crate) fn idiff(&mut self, root: NodeId, x: SymbolId) -> NodeId {
        if let Some(d) = self.deriv_cached(root, x) {
            return d;
        }
        let order = self.reachable(&[root]);
        for id in order {
            if self.deriv_cached(id, x).is_some() {
                continue;
            }
            let d = self.diff_node(id, x);
            self.deriv.insert((id, x), d);
        }
        self.deriv_cached(root, x).expect("derivative computed")
    }

    fn dch(&self, id: NodeId, x: SymbolId) -> NodeId {
        self.deriv_cached(id, x)
            .expect("child derivative available in topological order")
    }

    fn diff_node(&mut self, id: NodeId, x: SymbolId) -> NodeId {
        match self.nodes[id as usize].clone() {
            Node::Rat(_) | Node::Float(_) => self.zero,
            Node::Sym(s) => {
                if s == x {
                    self.one
                } else {
                    self.zero
                }
            }
            Node::Sum(ch) => {
                let parts: Vec<NodeId> = ch.iter().map(|&c| self.dch(c, x)).collect();
                self.iadd(&parts)
            }
            Node::Prod(ch) => {
                let mut terms = Vec::new();
                for i in 0..ch.len() {
                    let di = self.dch(ch[i], x);
                    if di == self.zero {
                        continue;
                    }
                    let mut factors: Vec<NodeId> = Vec::with_capacity(ch.len());
                    factors.extend_from_slice(&ch[..i]);
                    factors.push(di);
                    factors.extend_from_slice(&ch[i + 1..]);
                    terms.push(self.iprod(&factors));
                }
                self.iadd(&terms)
            }
            Node::Quot(a, b) => {
                let da = self.dch(a, x);
                let db = self.dch(b, x);
                if db == self.zero {
                    return self.iquot(da, b);
                }
                let num = if da == self.zero {
                    let t = self.iprod(&[a, db]);
                    self.ineg(t)
                } else {
                    let t1 = self.iprod(&[da, b]);
                    let t2 = self.iprod(&[a, db]);
                    self.isub(t1, t2)
                };
                let den = self.ipow(b, 2);
                self.iquot(num, den)
            }
            Node::Pow(a, k) => {
                let da = self.dch(a, x);
                if da == self.zero {
                    return self.zero;
                }
                let kk = self.iint(k as i64);
                let pw = self.ipow(a, k - 1);
                self.iprod(&[kk, pw, da])
            }
            Node::Sin(a) => {
                let da = self.dch(a, x);
                let c = self.icos(a);
                self.iprod(&[c, da])
            }
            Node::Cos(a) => {
                let da = self.dch(a, x);
                let s = self.isin(a);
                let p = self.iprod(&[s, da]);
                self.ineg(p)
            }
            Node::Tan(a) => {
                let da = self.dch(a, x);
                let t = self.itan(a);
                let t2 = self.ipow(t, 2);
                let sec2 = self.iadd(&[self.one, t2]);
                self.iprod(&[sec2, da])
            }
            Node::Neg(a) => {
                let da = self.dch(a, x);
                self.ineg(da)
            }
            Node::SolveSys { mat, rhs } => {
                // The "derivative" slot of a system node holds the derived
                // system solving M s' = b' − M' s.
                let dim = rhs.len();
                let sol: Vec<NodeId> = (0..dim as u32)
                    .map(|idx| self.intern_comp(id, idx))
                    .collect();
                let mut new_rhs = Vec::with_capacity(dim);
                for r in 0..dim {
                    let mut terms = vec![self.dch(rhs[r], x)];
                    for c in 0..dim {
                        let dm = self.dch(mat[r * dim + c], x);
                        if dm == self.zero {
                            continue;
                        }
                        let p = self.iprod(&[dm, sol[c]]);
                        terms.push(self.ineg(p));
                    }
                    new_rhs.push(self.iadd(&terms));
                }
                if new_rhs.iter().all(|&r| r == self.zero) {
                    // The whole solution vector is constant in x; mark with
                    // the zero node so component derivatives fold away.
                    return self.zero;
                }
                let mat: Vec<NodeId> = mat.to_vec();
                let ids = self.isolve(&mat, &new_rhs);
                // Return the derived system node (parent of the components).
                match self.nodes[ids[0] as usize] {
                    Node::SolveComp { sys, .. } => sys,
                    _ => unreachable!(),
                }
            }
            Node::SolveComp { sys, idx } => {
                let dsys = self.dch(sys, x);
                if dsys == self.zero {
                    return self.zero;
                }
                self.intern_comp(dsys, idx)
            }
        }
    }

    fn intern_comp(&mut self, sys: NodeId, idx: u32) -> NodeId {
        self.intern(Node::SolveComp { sys, idx })
    }
}

impl DagInner {
    /// Rebuild `roots` with symbols replaced per `map`. Untouched subgraphs
    /// keep their identity through interning.
    pub(crate) fn isubst(
        &mut self,
        roots: &[NodeId],
        map: &std::collections::HashMap<SymbolId, NodeId>,
    ) -> Vec<NodeId> {
        let order = self.reachable(roots);
        let mut out: std::collections::HashMap<NodeId, NodeId> =
            std::collections::HashMap::with_capacity(order.len());
        for id in order {
            let new = match self.nodes[id as usize].clone() {
                Node::Sym(s) => map.get(&s).copied().unwrap_or(id),
                Node::Rat(_) | Node::Float(_) => id,
                Node::Sum(ch) => {
                    let ch: Vec<NodeId> = ch.iter().map(|c| out[c]).collect();
                    self.iadd(&ch)
                }
                Node::Prod(ch) => {
                    let ch: Vec<NodeId> = ch.iter().map(|c| out[c]).collect();
                    self.iprod(&ch)
                }
                Node::Quot(a, b) => {
                    let (a, b) = (out[&a], out[&b]);
                    self.iquot(a, b)
                }
                Node::Pow(a, k) => {
                    let a = out[&a];
                    self.ipow(a, k)
                }
                Node::Sin(a) => {
                    let a = out[&a];
                    self.isin(a)
                }
                Node::Cos(a) => {
                    let a = out[&a];
                    self.icos(a)
                }
                Node::Tan(a) => {
                    let a = out[&a];
                    self.itan(a)
                }
                Node::Neg(a) => {
                    let a = out[&a];
                    self.ineg(a)
                }
                Node::SolveSys { mat, rhs } => {
                    let m: Vec<NodeId> = mat.iter().map(|c| out[c]).collect();
                    let r: Vec<NodeId> = rhs.iter().map(|c| out[c]).collect();
                    let comps = self.isolve(&m, &r);
                    match self.nodes[comps[0] as usize] {
                        Node::SolveComp { sys, .. } => sys,
                        _ => unreachable!(),
                    }
                }
                Node::SolveComp { sys, idx } => {
                    let s = out[&sys];
                    self.intern(Node::SolveComp { sys: s, idx })
                }
            };
            out.insert(id, new);
        }
        roots.iter().map(|r| out[r]).collect()
    }
}

impl Expr {
    /// Exact partial derivative with respect to `var`, which must be a symbol.
    pub fn diff(&self, var: &Expr) -> Expr {
        let sid = var.as_symbol().expect("diff variable must be a symbol");
        self.diff_sym(sid)
    }

    pub(crate) fn diff_sym(&self, sid: SymbolId) -> Expr {
        let id = self.dag.lock().idiff(self.id, sid);
        Expr {
            dag: self.dag.clone(),
            id,
        }
    }

    /// Replace symbols by expressions (simultaneous substitution).
    pub fn subst(&self, map: &[(Expr, Expr)]) -> Expr {
        Self::subst_many(std::slice::from_ref(self), map).pop().unwrap()
    }

    /// Substitute into a batch of expressions sharing one rebuild pass.
    pub fn subst_many(exprs: &[Expr], map: &[(Expr, Expr)]) -> Vec<Expr> {
        if exprs.is_empty() {
            return Vec::new();
        }
        let dag = exprs[0].dag.clone();
        let mut imap = std::collections::HashMap::new();
        for (sym, rep) in map {
            dag.check(sym);
            dag.check(rep);
            let sid = sym.as_symbol().expect("subst keys must be symbols");
            imap.insert(sid, rep.id);
        }
        let roots: Vec<NodeId> = exprs.iter().map(|e| e.id).collect();
        let ids = dag.lock().isubst(&roots, &imap);
        ids.into_iter()
            .map(|id| Expr {
                dag: dag.clone(),
                id,
            })
            .collect()
    }
}
