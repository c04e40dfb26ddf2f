//! Rendering expressions back to the text grammar.
//!
//! `to_source` produces a string that reparses to the identical node whenever
//! every constant in the expression is rational; float constants print with
//! shortest-roundtrip precision and reparse as the equal-valued decimal
//! rational. Solve nodes have no text form; they only appear in models built
//! programmatically (e.g. from a Lagrangian), which are saved in their
//! Lagrangian form instead.

use super::{DagInner, Expr, Node, NodeId};
use num::traits::Signed;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum PrintError {
    /// Expression contains a solve node, which the text grammar cannot express.
    UnprintableNode,
}

impl fmt::Display for PrintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrintError::UnprintableNode => {
                write!(f, "expression contains a solve node with no text form")
            }
        }
    }
}

impl std::error::Error for PrintError {}

/// Binding strength used to decide parenthesization.
const P_SUM: u8 = 1;
const P_PROD: u8 = 2;
const P_NEG: u8 = 3;
const P_ATOM: u8 = 4;

fn prec(inner: &DagInner, id: NodeId) -> u8 {
    match &inner.nodes[id as usize] {
        Node::Sum(_) => P_SUM,
        Node::Prod(_) | Node::Quot(_, _) => P_PROD,
        Node::Neg(_) => P_NEG,
        Node::Rat(r) => {
            if !r.is_integer() {
                // Prints as `n/d`, so it binds like a quotient.
                P_PROD
            } else if r.is_negative() {
                P_NEG
            } else {
                P_ATOM
            }
        }
        Node::Float(b) => {
            if f64::from_bits(*b) < 0.0 {
                P_NEG
            } else {
                P_ATOM
            }
        }
        Node::Pow(_, _) | Node::Sym(_) | Node::Sin(_) | Node::Cos(_) | Node::Tan(_) => P_ATOM,
        Node::SolveSys { .. } | Node::SolveComp { .. } => P_ATOM,
    }
}

fn write_node(
    inner: &DagInner,
    id: NodeId,
    out: &mut String,
    strict: bool,
) -> Result<(), PrintError> {
    match &inner.nodes[id as usize] {
        Node::Rat(r) => {
            if r.is_integer() {
                out.push_str(&r.numer().to_string());
            } else {
                out.push_str(&format!("{}/{}", r.numer(), r.denom()));
            }
        }
        Node::Float(b) => {
            let v = f64::from_bits(*b);
            let s = format!("{v}");
            out.push_str(&s);
            if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
                out.push_str(".0");
            }
        }
        Node::Sym(s) => out.push_str(&inner.sym_names[s.0 as usize]),
        Node::Sum(ch) => {
            for (i, &c) in ch.iter().enumerate() {
                // Render `+ (-x)` as `- x` for readability; reparses equal.
                let (body, negated) = match &inner.nodes[c as usize] {
                    Node::Neg(x) => (*x, true),
                    _ => (c, false),
                };
                if i == 0 {
                    if negated {
                        out.push('-');
                    }
                } else {
                    out.push_str(if negated { " - " } else { " + " });
                }
                // A leading `-` is unary and binds tighter than `*`, so its
                // body needs parens a binary `a - b*c` does not.
                let need = if i == 0 && negated { P_NEG } else { P_PROD };
                paren(inner, body, out, need, strict)?;
            }
        }
        Node::Prod(ch) => {
            for (i, &c) in ch.iter().enumerate() {
                if i > 0 {
                    out.push('*');
                }
                // `x*a/b` would reparse as `(x*a)/b`; anything that prints
                // with a `/` (quotients, fractional constants) gets parens
                // unless it is the leading factor.
                let need = if i > 0 { P_NEG } else { P_PROD };
                paren(inner, c, out, need, strict)?;
            }
        }
        Node::Quot(a, b) => {
            paren(inner, *a, out, P_PROD, strict)?;
            out.push('/');
            // The right side of `/` binds tighter: a/(b*c) needs parens.
            paren(inner, *b, out, P_NEG, strict)?;
        }
        Node::Pow(a, k) => {
            // Nested powers have no unparenthesized text form.
            if matches!(inner.nodes[*a as usize], Node::Pow(_, _)) {
                out.push('(');
                write_node(inner, *a, out, strict)?;
                out.push(')');
            } else {
                paren(inner, *a, out, P_ATOM, strict)?;
            }
            if *k < 0 {
                out.push_str(&format!("^(-{})", -(*k as i64)));
            } else {
                out.push_str(&format!("^{k}"));
            }
        }
        Node::Neg(a) => {
            out.push('-');
            paren(inner, *a, out, P_NEG, strict)?;
        }
        Node::Sin(a) => {
            out.push_str("sin(");
            write_node(inner, *a, out, strict)?;
            out.push(')');
        }
        Node::Cos(a) => {
            out.push_str("cos(");
            write_node(inner, *a, out, strict)?;
            out.push(')');
        }
        Node::Tan(a) => {
            out.push_str("tan(");
            write_node(inner, *a, out, strict)?;
            out.push(')');
        }
        Node::SolveSys { .. } => {
            if strict {
                return Err(PrintError::UnprintableNode);
            }
            out.push_str("<solve-system>");
        }
        Node::SolveComp { sys, idx } => {
            if strict {
                return Err(PrintError::UnprintableNode);
            }
            out.push_str(&format!("<solve#{sys}[{idx}]>"));
        }
    }
    Ok(())
}

fn paren(
    inner: &DagInner,
    id: NodeId,
    out: &mut String,
    need: u8,
    strict: bool,
) -> Result<(), PrintError> {
    if prec(inner, id) < need {
        out.push('(');
        write_node(inner, id, out, strict)?;
        out.push(')');
    } else {
        write_node(inner, id, out, strict)?;
    }
    Ok(())
}

impl Expr {
    /// Text form that reparses to the same value; errors on solve nodes.
    pub fn to_source(&self) -> Result<String, PrintError> {
        let inner = self.dag.lock();
        let mut out = String::new();
        write_node(&inner, self.id, &mut out, true)?;
        Ok(out)
    }

    /// Best-effort display form; solve nodes render as placeholders.
    pub fn display(&self) -> String {
        let inner = self.dag.lock();
        let mut out = String::new();
        let _ = write_node(&inner, self.id, &mut out, false);
        out
    }
}
