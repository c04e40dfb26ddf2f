//! Hiding a model behind an invertible state and input transformation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::expr::Expr;
use crate::geom::VectorField;
use crate::model::{CFieldAnsatz, SystemModel};

use super::NormalFormError;

/// A model together with the exact transformation pair that produced it.
pub struct ScrambledModel {
    pub model: SystemModel,
    /// New coordinates as expressions in the original states.
    pub forward: Vec<Expr>,
    /// Original coordinates as expressions in the new states.
    pub inverse: Vec<Expr>,
    /// Feedback offset, in original states: the original input is
    /// `u = beta_inv · (w - alpha)` with `w` the new input.
    pub alpha: Vec<Expr>,
    /// Constant inverse input mixing.
    pub beta_inv: Vec<Vec<Expr>>,
}

struct ShiftTerm {
    num: i64,
    den: i64,
    vars: Vec<usize>,
}

/// Apply a random permuted unit-triangular polynomial diffeomorphism and a
/// random affine input transformation to `model`.  The diffeomorphism is
/// inverted exactly by back-substitution, so the returned pair composes to
/// the identity up to floating-point evaluation error.
///
/// Candidate-field ansatzes of the explicit kind are pushed forward; the
/// model is resampled on the unit box, so this is meant for models (such as
/// generated triangular forms) whose structure is not tied to a particular
/// coordinate region.
pub fn scramble(model: &SystemModel, seed: u64) -> Result<ScrambledModel, NormalFormError> {
    let dag = model.dag.clone();
    let n = model.n();
    let m1 = model.num_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // New state symbols with a prefix that cannot collide.
    let old_names = model.state_names();
    let mut prefix = "y".to_string();
    while old_names.iter().any(|nm| nm.starts_with(&prefix)) {
        prefix.push('y');
    }
    let new_states: Vec<Expr> = (0..n)
        .map(|k| dag.symbol(&format!("{prefix}{}", k + 1)))
        .collect();

    // State change: y_perm(i) = z_i + p_i(z_(i+1..)), with p_i a small random
    // polynomial in strictly later coordinates.  Strict triangularity makes
    // the inverse exact by back-substitution.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut shifts: Vec<Vec<ShiftTerm>> = Vec::with_capacity(n);
    for i in 0..n {
        let avail: Vec<usize> = (i + 1..n).collect();
        let mut terms = Vec::new();
        if !avail.is_empty() {
            for _ in 0..rng.gen_range(1usize..=2) {
                terms.push(ShiftTerm {
                    num: nonzero(&mut rng, 2),
                    den: rng.gen_range(1..=3),
                    vars: (0..rng.gen_range(1usize..=2))
                        .map(|_| avail[rng.gen_range(0..avail.len())])
                        .collect(),
                });
            }
        }
        shifts.push(terms);
    }
    let poly = |terms: &[ShiftTerm], arg: &dyn Fn(usize) -> Expr| -> Expr {
        let sums: Vec<Expr> = terms
            .iter()
            .map(|t| {
                let mut fac = vec![dag.rat(t.num, t.den)];
                fac.extend(t.vars.iter().map(|&v| arg(v)));
                dag.mul(&fac)
            })
            .collect();
        if sums.is_empty() {
            dag.zero()
        } else {
            dag.add(&sums)
        }
    };

    let mut forward = vec![dag.zero(); n];
    for i in 0..n {
        let p = poly(&shifts[i], &|v| model.states[v].clone());
        forward[perm[i]] = dag.add(&[model.states[i].clone(), p]);
    }
    let mut inverse = vec![dag.zero(); n];
    for i in (0..n).rev() {
        let p = poly(&shifts[i], &|v| inverse[v].clone());
        inverse[i] = dag.sub(&new_states[perm[i]], &p);
    }

    // Input change: draw a dense integer inverse mixing until it is
    // invertible (exact determinant test), plus a polynomial offset.
    let mut tries = 0;
    let binv_int: Vec<Vec<i64>> = loop {
        let mat: Vec<Vec<i64>> = (0..m1)
            .map(|_| (0..m1).map(|_| rng.gen_range(-3i64..=3)).collect())
            .collect();
        if det_nonzero(&mat) {
            break mat;
        }
        tries += 1;
        if tries >= 16 {
            return Err(NormalFormError::NonInvertibleScramble);
        }
    };
    let beta_inv: Vec<Vec<Expr>> = binv_int
        .iter()
        .map(|row| row.iter().map(|&e| dag.int(e)).collect())
        .collect();
    let alpha: Vec<Expr> = (0..m1)
        .map(|_| {
            let terms: Vec<ShiftTerm> = (0..rng.gen_range(1usize..=2))
                .map(|_| ShiftTerm {
                    num: nonzero(&mut rng, 2),
                    den: rng.gen_range(1..=3),
                    vars: (0..rng.gen_range(1usize..=2))
                        .map(|_| rng.gen_range(0..n))
                        .collect(),
                })
                .collect();
            poly(&terms, &|v| model.states[v].clone())
        })
        .collect();

    // Feedback first, still in the original coordinates:
    //   f' = f - sum_k g_k (binv alpha)_k,   g'_j = sum_k g_k binv[k][j].
    let balpha: Vec<Expr> = (0..m1)
        .map(|k| {
            let terms: Vec<Expr> = (0..m1)
                .map(|j| dag.mul(&[beta_inv[k][j].clone(), alpha[j].clone()]))
                .collect();
            dag.add(&terms)
        })
        .collect();
    let drift_z: Vec<Expr> = (0..n)
        .map(|c| {
            let mut terms = vec![model.drift.comps[c].clone()];
            for (k, g) in model.inputs.iter().enumerate() {
                terms.push(dag.neg(&dag.mul(&[g.comps[c].clone(), balpha[k].clone()])));
            }
            dag.add(&terms)
        })
        .collect();
    let inputs_z: Vec<Vec<Expr>> = (0..m1)
        .map(|j| {
            (0..n)
                .map(|c| {
                    let terms: Vec<Expr> = (0..m1)
                        .map(|k| dag.mul(&[model.inputs[k].comps[c].clone(), beta_inv[k][j].clone()]))
                        .collect();
                    dag.add(&terms)
                })
                .collect()
        })
        .collect();

    // Push everything forward through the diffeomorphism.
    let map: Vec<(Expr, Expr)> = model
        .states
        .iter()
        .cloned()
        .zip(inverse.iter().cloned())
        .collect();
    let jac: Vec<Vec<Expr>> = forward
        .iter()
        .map(|fk| model.states.iter().map(|z| fk.diff(z)).collect())
        .collect();
    let push = |comps: &[Expr]| -> VectorField {
        let new: Vec<Expr> = (0..n)
            .map(|k| {
                let terms: Vec<Expr> = (0..n)
                    .map(|l| dag.mul(&[jac[k][l].clone(), comps[l].clone()]))
                    .collect();
                dag.add(&terms).subst(&map)
            })
            .collect();
        VectorField::new(new)
    };

    let ansatz = match &model.ansatz {
        Some(CFieldAnsatz::Fields(cs)) => Some(CFieldAnsatz::Fields(
            cs.iter().map(|c| push(&c.comps)).collect(),
        )),
        _ => None,
    };
    let drift = push(&drift_z);
    let inputs = inputs_z.iter().map(|g| push(g)).collect();
    let scrambled = SystemModel {
        name: format!("{}-scrambled-{seed}", model.name),
        dag,
        states: new_states,
        drift,
        inputs,
        domain: vec![(-1.0, 1.0); n],
        ansatz,
        lagrangian: None,
    };
    Ok(ScrambledModel {
        model: scrambled,
        forward,
        inverse,
        alpha,
        beta_inv,
    })
}

fn nonzero(rng: &mut ChaCha8Rng, bound: i64) -> i64 {
    loop {
        let v = rng.gen_range(-bound..=bound);
        if v != 0 {
            return v;
        }
    }
}

/// Exact determinant test via fraction-free elimination.
fn det_nonzero(mat: &[Vec<i64>]) -> bool {
    let n = mat.len();
    let mut a: Vec<Vec<i128>> = mat
        .iter()
        .map(|r| r.iter().map(|&e| e as i128).collect())
        .collect();
    let mut prev: i128 = 1;
    for k in 0..n {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&i| a[i][k] != 0) else {
                return false;
            };
            a.swap(k, swap);
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    a[n - 1][n - 1] != 0
}
