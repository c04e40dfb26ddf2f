//! Numeric evaluation with per-call memoization.
//!
//! Evaluation walks the reachable nodes of a batch of expressions once per
//! point, in ascending node-id order (a topological order by construction).
//! Solve systems are eliminated with partial pivoting at the point; every
//! component of the same system shares the one elimination.
//!
//! All arithmetic runs in double-double precision (see [`super::dd`]) and
//! results are rounded to doubles at the roots: elimination chains amplify
//! rounding error by many orders of magnitude, and plain doubles lose enough
//! digits to corrupt downstream rank and span decisions.

use super::dd::{dd_from_rational, Dd};
use super::{DagInner, Expr, ExprDag, Node, NodeId};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// Assignment of numeric values to symbols, keyed by symbol name.
///
/// The ordered map keeps serialized witness points deterministic.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct Point(pub BTreeMap<String, f64>);

impl Point {
    pub fn new() -> Self {
        Point(BTreeMap::new())
    }

    pub fn from_pairs<'a, I: IntoIterator<Item = (&'a str, f64)>>(pairs: I) -> Self {
        Point(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }

    pub fn set(&mut self, name: &str, v: f64) {
        self.0.insert(name.to_string(), v);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

/// Evaluation failure, reporting the offending node and point.
#[derive(Debug, Clone)]
pub enum EvalError {
    DivisionByZero { node: u32, point: Point },
    SingularSolve { node: u32, point: Point },
    UnboundSymbol { name: String },
    NonFinite { node: u32, point: Point },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DivisionByZero { node, .. } => {
                write!(f, "division by zero while evaluating node #{node}")
            }
            EvalError::SingularSolve { node, .. } => {
                write!(f, "singular linear system in solve node #{node}")
            }
            EvalError::UnboundSymbol { name } => {
                write!(f, "no value bound for symbol `{name}`")
            }
            EvalError::NonFinite { node, .. } => {
                write!(f, "non-finite value produced at node #{node}")
            }
        }
    }
}

impl std::error::Error for EvalError {}

/// Reusable evaluation scratch for one [`ExprDag`].
pub struct Evaluator {
    dag: ExprDag,
    val: Vec<Dd>,
    cur: u32,
    sym_val: Vec<f64>,
    sym_stamp: Vec<u32>,
    order: Vec<NodeId>,
    solve_vals: HashMap<NodeId, Vec<Dd>>,
    /// Rational constants converted once per node, not once per point.
    rat_cache: HashMap<NodeId, Dd>,
}

impl Evaluator {
    pub fn new(dag: &ExprDag) -> Self {
        Evaluator {
            dag: dag.clone(),
            val: Vec::new(),
            cur: 0,
            sym_val: Vec::new(),
            sym_stamp: Vec::new(),
            order: Vec::new(),
            solve_vals: HashMap::new(),
            rat_cache: HashMap::new(),
        }
    }

    /// Evaluate a batch of expressions at one point.
    pub fn eval(&mut self, exprs: &[Expr], point: &Point) -> Result<Vec<f64>, EvalError> {
        let mut rows = self.eval_at_points(exprs, std::slice::from_ref(point))?;
        Ok(rows.pop().unwrap())
    }

    /// Evaluate a single expression at one point.
    pub fn eval1(&mut self, expr: &Expr, point: &Point) -> Result<f64, EvalError> {
        Ok(self.eval(std::slice::from_ref(expr), point)?[0])
    }

    /// Evaluate a batch of expressions at several points, sharing the
    /// reachable-set computation. Row `i` of the result holds the values at
    /// `points[i]` in expression order.
    pub fn eval_at_points(
        &mut self,
        exprs: &[Expr],
        points: &[Point],
    ) -> Result<Vec<Vec<f64>>, EvalError> {
        let dag = self.dag.clone();
        let inner = dag.lock();
        let roots: Vec<NodeId> = exprs.iter().map(|e| e.id).collect();
        self.order = inner.reachable(&roots);
        let mut rows = Vec::with_capacity(points.len());
        for p in points {
            self.eval_pass(&inner, p)?;
            rows.push(roots.iter().map(|&r| self.val[r as usize].to_f64()).collect());
        }
        Ok(rows)
    }

    /// Like [`Evaluator::eval_at_points`], but a failure at one point does
    /// not abort the batch; each point yields its own result.
    pub fn eval_partial(
        &mut self,
        exprs: &[Expr],
        points: &[Point],
    ) -> Vec<Result<Vec<f64>, EvalError>> {
        let dag = self.dag.clone();
        let inner = dag.lock();
        let roots: Vec<NodeId> = exprs.iter().map(|e| e.id).collect();
        self.order = inner.reachable(&roots);
        points
            .iter()
            .map(|p| {
                self.eval_pass(&inner, p)
                    .map(|()| roots.iter().map(|&r| self.val[r as usize].to_f64()).collect())
            })
            .collect()
    }

    fn eval_pass(&mut self, inner: &DagInner, point: &Point) -> Result<(), EvalError> {
        let n = inner.nodes.len();
        if self.val.len() < n {
            self.val.resize(n, Dd::ZERO);
        }
        let ns = inner.sym_names.len();
        if self.sym_val.len() < ns {
            self.sym_val.resize(ns, 0.0);
            self.sym_stamp.resize(ns, 0);
        }
        self.cur = self.cur.wrapping_add(1);
        if self.cur == 0 {
            self.sym_stamp.iter_mut().for_each(|s| *s = 0);
            self.cur = 1;
        }
        let cur = self.cur;
        for (name, v) in &point.0 {
            if let Some(sid) = inner.lookup_sym(name) {
                self.sym_val[sid.0 as usize] = *v;
                self.sym_stamp[sid.0 as usize] = cur;
            }
        }
        self.solve_vals.clear();

        for idx in 0..self.order.len() {
            let id = self.order[idx];
            let v = match &inner.nodes[id as usize] {
                Node::Rat(r) => match self.rat_cache.get(&id) {
                    Some(d) => *d,
                    None => {
                        let d = dd_from_rational(r).ok_or(EvalError::NonFinite {
                            node: id,
                            point: point.clone(),
                        })?;
                        self.rat_cache.insert(id, d);
                        d
                    }
                },
                Node::Float(b) => Dd::from(f64::from_bits(*b)),
                Node::Sym(s) => {
                    if self.sym_stamp[s.0 as usize] != cur {
                        return Err(EvalError::UnboundSymbol {
                            name: inner.sym_names[s.0 as usize].clone(),
                        });
                    }
                    Dd::from(self.sym_val[s.0 as usize])
                }
                Node::Sum(ch) => ch
                    .iter()
                    .fold(Dd::ZERO, |acc, &c| acc.add(self.val[c as usize])),
                Node::Prod(ch) => ch
                    .iter()
                    .fold(Dd::ONE, |acc, &c| acc.mul(self.val[c as usize])),
                Node::Quot(a, b) => {
                    let den = self.val[*b as usize];
                    if den.is_zero() {
                        return Err(EvalError::DivisionByZero {
                            node: id,
                            point: point.clone(),
                        });
                    }
                    self.val[*a as usize].div(den)
                }
                Node::Pow(a, k) => {
                    let base = self.val[*a as usize];
                    if base.is_zero() && *k < 0 {
                        return Err(EvalError::DivisionByZero {
                            node: id,
                            point: point.clone(),
                        });
                    }
                    base.powi(*k)
                }
                Node::Sin(a) => self.val[*a as usize].sin(),
                Node::Cos(a) => self.val[*a as usize].cos(),
                Node::Tan(a) => self.val[*a as usize].tan(),
                Node::Neg(a) => self.val[*a as usize].neg(),
                Node::SolveSys { mat, rhs } => {
                    let d = rhs.len();
                    let mut m: Vec<Dd> = mat.iter().map(|&c| self.val[c as usize]).collect();
                    let mut b: Vec<Dd> = rhs.iter().map(|&c| self.val[c as usize]).collect();
                    let x = solve_dense(&mut m, &mut b, d).ok_or(EvalError::SingularSolve {
                        node: id,
                        point: point.clone(),
                    })?;
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(EvalError::SingularSolve {
                            node: id,
                            point: point.clone(),
                        });
                    }
                    self.solve_vals.insert(id, x);
                    Dd::ZERO // the vector lives in solve_vals; the scalar slot is unused
                }
                Node::SolveComp { sys, idx } => self.solve_vals[sys][*idx as usize],
            };
            if !v.is_finite() {
                return Err(EvalError::NonFinite {
                    node: id,
                    point: point.clone(),
                });
            }
            self.val[id as usize] = v;
        }

        Ok(())
    }
}

/// Solve the `d × d` row-major system `m · x = b` by Gaussian elimination
/// with partial pivoting, in double-double arithmetic.
fn solve_dense(m: &mut [Dd], b: &mut [Dd], d: usize) -> Option<Vec<Dd>> {
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&r, &s| {
                m[r * d + col]
                    .hi
                    .abs()
                    .total_cmp(&m[s * d + col].hi.abs())
            })
            .unwrap();
        if m[pivot_row * d + col].is_zero() {
            return None;
        }
        if pivot_row != col {
            for j in 0..d {
                m.swap(col * d + j, pivot_row * d + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = m[col * d + col];
        for r in (col + 1)..d {
            let factor = m[r * d + col].div(pivot);
            if factor.is_zero() {
                continue;
            }
            for j in (col + 1)..d {
                m[r * d + j] = m[r * d + j].sub(factor.mul(m[col * d + j]));
            }
            m[r * d + col] = Dd::ZERO;
            b[r] = b[r].sub(factor.mul(b[col]));
        }
    }
    let mut x = vec![Dd::ZERO; d];
    for row in (0..d).rev() {
        let mut acc = b[row];
        for j in (row + 1)..d {
            acc = acc.sub(m[row * d + j].mul(x[j]));
        }
        x[row] = acc.div(m[row * d + row]);
    }
    Some(x)
}
