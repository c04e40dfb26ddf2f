//! Equations of motion from a Lagrangian L = T(q, v) − V(q).
//!
//! For configuration coordinates q and velocities v the dynamics are
//!
//! ```text
//!   q̇ = v
//!   M(q, v) v̇ = rhs(q, v) + Σⱼ uⱼ Fⱼ        M = ∂²T/∂v²
//! ```
//!
//! so the drift carries `solve(M, rhs)` and each input field carries
//! `solve(M, Fⱼ)`; the mass matrix is inverted once per evaluation point and
//! shared by all components.

use super::ModelError;
use crate::expr::{Expr, ExprDag};
use crate::geom::VectorField;

/// Name of the velocity coordinate paired with a configuration coordinate:
/// `q3` becomes `v3`, any other name gets a `v` prefix (`theta` → `vtheta`).
pub fn velocity_name(q: &str) -> String {
    if let Some(rest) = q.strip_prefix('q') {
        if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
            return format!("v{rest}");
        }
    }
    format!("v{q}")
}

/// Derive (drift, input fields) from kinetic energy, potential, and one
/// generalized-force vector per input.
///
/// The velocity equation expands as
/// `M v̇ = F − (∂²T/∂v∂q) v + ∂T/∂q − ∂V/∂q`,
/// with `M v̇ = d/dt(∂T/∂v)` split into its v̇ and q̇ contributions.
pub(super) fn euler_lagrange(
    dag: &ExprDag,
    q: &[Expr],
    v: &[Expr],
    kinetic: &Expr,
    potential: &Expr,
    forces: &[Vec<Expr>],
) -> Result<(VectorField, Vec<VectorField>), ModelError> {
    let k = q.len();
    let zero = dag.zero();

    let dt_dv: Vec<Expr> = v.iter().map(|vi| kinetic.diff(vi)).collect();
    let mass: Vec<Vec<Expr>> = dt_dv
        .iter()
        .map(|row| v.iter().map(|vj| row.diff(vj)).collect())
        .collect();
    if mass
        .iter()
        .all(|row| row.iter().all(|e| e.is_zero()))
    {
        return Err(ModelError::SingularMass);
    }

    let rhs0: Vec<Expr> = (0..k)
        .map(|kk| {
            let mut terms = Vec::with_capacity(k + 2);
            for i in 0..k {
                let coupling = dt_dv[kk].diff(&q[i]);
                terms.push(dag.neg(&dag.mul(&[coupling, v[i].clone()])));
            }
            terms.push(kinetic.diff(&q[kk]));
            terms.push(dag.neg(&potential.diff(&q[kk])));
            dag.add(&terms)
        })
        .collect();

    let acc0 = dag.solve(&mass, &rhs0);
    let mut drift = v.to_vec();
    drift.extend(acc0);

    let inputs = forces
        .iter()
        .map(|fj| {
            let acc = dag.solve(&mass, fj);
            let mut comps = vec![zero.clone(); k];
            comps.extend(acc);
            VectorField::new(comps)
        })
        .collect();

    Ok((VectorField::new(drift), inputs))
}
