//! Random triangular-form instances in canonical coordinates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::expr::{Expr, ExprDag};
use crate::geom::VectorField;
use crate::model::{CFieldAnsatz, SystemModel};
use crate::sfechk::StructureIndices;

use super::{NormalFormError, TfLayout, TfRow};

/// Build a triangular form with the given structure indices in the canonical
/// layout.  Every free drift entry receives `drift_complexity` random terms
/// of degree at most two in its allowed arguments, with small exact rational
/// coefficients drawn deterministically from `seed`.
///
/// Shift-1 instances carry their candidate fields (the coordinate fields of
/// the top bottom-chain variables) as a built-in ansatz.
pub fn generate_tf(
    indices: &StructureIndices,
    seed: u64,
    drift_complexity: usize,
) -> Result<SystemModel, NormalFormError> {
    let layout = TfLayout::new(indices)?;
    let dag = ExprDag::new();
    let states: Vec<Expr> = layout.names().iter().map(|nm| dag.symbol(nm)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = indices.m;
    let n = layout.n();
    let direct = layout.direct_w0();
    let state_of = |row: TfRow| states[layout.index_of(row)].clone();

    // The top-level input coefficients are shared between the drift (when the
    // distinguished bottom chain is non-empty) and the distinguished input
    // field (when it feeds the middle block directly).
    let b_args: Vec<Expr> = layout
        .chi_top_args()
        .iter()
        .map(|&i| states[i].clone())
        .collect();
    let b: Vec<Expr> = (1..=m)
        .map(|_| rand_poly(&dag, &mut rng, &b_args, drift_complexity))
        .collect();

    let mut drift = Vec::with_capacity(n);
    for row in layout.rows() {
        let e = match *row {
            TfRow::Xi { level, chain } => {
                if level < indices.k_xi[chain] {
                    state_of(TfRow::Xi {
                        level: level + 1,
                        chain,
                    })
                } else if chain == 0 {
                    state_of(TfRow::Chi0)
                } else {
                    state_of(TfRow::Chi { level: 1, chain })
                }
            }
            TfRow::Chi0 => {
                if direct {
                    dag.zero()
                } else {
                    state_of(TfRow::Zeta { level: 1, chain: 0 })
                }
            }
            TfRow::Chi { level, chain } if level < indices.k_chi => {
                let args: Vec<Expr> = layout
                    .chi_drift_args(level)
                    .iter()
                    .map(|&i| states[i].clone())
                    .collect();
                let a = rand_poly(&dag, &mut rng, &args, drift_complexity);
                if direct {
                    a
                } else {
                    let up = state_of(TfRow::Chi {
                        level: level + 1,
                        chain,
                    });
                    let z0 = state_of(TfRow::Zeta { level: 1, chain: 0 });
                    dag.add(&[dag.mul(&[up, z0]), a])
                }
            }
            TfRow::Chi { chain, .. } => {
                let zj = state_of(TfRow::Zeta { level: 1, chain });
                if direct {
                    zj
                } else {
                    let z0 = state_of(TfRow::Zeta { level: 1, chain: 0 });
                    dag.add(&[zj, dag.mul(&[b[chain - 1].clone(), z0])])
                }
            }
            TfRow::Zeta { level, chain } => {
                let len = if chain == 0 {
                    indices.k_zeta - indices.s
                } else {
                    indices.k_zeta
                };
                if level < len {
                    state_of(TfRow::Zeta {
                        level: level + 1,
                        chain,
                    })
                } else {
                    dag.zero()
                }
            }
        };
        drift.push(e);
    }

    let unit = |idx: usize| {
        let mut comps = vec![dag.zero(); n];
        comps[idx] = dag.one();
        VectorField::new(comps)
    };
    let mut inputs = Vec::with_capacity(m + 1);
    if direct {
        // The distinguished input multiplies into the middle block.
        let mut comps = vec![dag.zero(); n];
        comps[layout.index_of(TfRow::Chi0)] = dag.one();
        for chain in 1..=m {
            for level in 1..indices.k_chi {
                comps[layout.index_of(TfRow::Chi { level, chain })] = state_of(TfRow::Chi {
                    level: level + 1,
                    chain,
                });
            }
            comps[layout.index_of(TfRow::Chi {
                level: indices.k_chi,
                chain,
            })] = b[chain - 1].clone();
        }
        inputs.push(VectorField::new(comps));
    } else {
        inputs.push(unit(layout.index_of(TfRow::Zeta {
            level: indices.k_zeta - indices.s,
            chain: 0,
        })));
    }
    for chain in 1..=m {
        inputs.push(unit(layout.index_of(TfRow::Zeta {
            level: indices.k_zeta,
            chain,
        })));
    }

    // Shift-1 forms need candidate fields; in canonical coordinates these
    // are the coordinate fields of the top bottom-chain variables.
    let ansatz = (indices.s == 1).then(|| {
        CFieldAnsatz::Fields(
            (1..=m)
                .map(|chain| unit(layout.index_of(TfRow::Zeta { level: 1, chain })))
                .collect(),
        )
    });

    Ok(SystemModel {
        name: format!("tf{}-{}", indices.s, seed),
        dag,
        states,
        drift: VectorField::new(drift),
        inputs,
        domain: vec![(-1.0, 1.0); n],
        ansatz,
        lagrangian: None,
    })
}

/// Random polynomial of degree at most two over `args` with `terms` terms and
/// small exact rational coefficients.
fn rand_poly(dag: &ExprDag, rng: &mut ChaCha8Rng, args: &[Expr], terms: usize) -> Expr {
    let mut acc = Vec::with_capacity(terms);
    for _ in 0..terms {
        let num = loop {
            let v = rng.gen_range(-4i64..=4);
            if v != 0 {
                break v;
            }
        };
        let den = rng.gen_range(1i64..=4);
        let mut factors = vec![dag.rat(num, den)];
        if !args.is_empty() {
            for _ in 0..rng.gen_range(0usize..=2) {
                factors.push(args[rng.gen_range(0..args.len())].clone());
            }
        }
        acc.push(dag.mul(&factors));
    }
    if acc.is_empty() {
        dag.zero()
    } else {
        dag.add(&acc)
    }
}
