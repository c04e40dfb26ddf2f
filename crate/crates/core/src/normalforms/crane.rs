//! A 3D gantry crane: trolley and bridge positions, rope length actuated by a
//! drum, and two unactuated rope angles.  The load position is a flat output,
//! and the full state/input transformation into the triangular normal form is
//! known in closed form, which makes the model a complete end-to-end fixture:
//! model construction from the Lagrangian, candidate-direction coefficients,
//! flat-output verification, and transformation verification all have known
//! expected outcomes.

use crate::expr::{Expr, ExprDag};
use crate::geom::VectorField;
use crate::model::{CFieldAnsatz, SystemModel};
use crate::sfechk::{StructureIndices, TransformMaps};

/// Lie derivative of a scalar along a vector field: `Σ_i f_i ∂h/∂x_i`.
fn lie(dag: &ExprDag, f: &VectorField, states: &[Expr], h: &Expr) -> Expr {
    let terms: Vec<Expr> = states
        .iter()
        .zip(&f.comps)
        .map(|(x, fi)| dag.mul(&[fi.clone(), h.diff(x)]))
        .collect();
    dag.add(&terms)
}

/// Load position in terms of the configuration coordinates: trolley `q1`,
/// bridge `q2`, unrolled rope length `R_d·q3`, rope angles `q4`, `q5`.
fn load_position(dag: &ExprDag, q: &[Expr]) -> [Expr; 3] {
    let r_d = dag.rat(1, 10);
    let rope = dag.mul(&[r_d, q[2].clone()]);
    let (s4, c4) = (dag.sin(&q[3]), dag.cos(&q[3]));
    let (s5, c5) = (dag.sin(&q[4]), dag.cos(&q[4]));
    let x_l = dag.add(&[q[0].clone(), dag.mul(&[rope.clone(), s5])]);
    let y_l = dag.add(&[q[1].clone(), dag.mul(&[rope.clone(), s4, c5.clone()])]);
    let z_l = dag.mul(&[rope, c4, c5]);
    [x_l, y_l, z_l]
}

/// Build the crane model from its Lagrangian.
///
/// States are `q1..q5, v1..v5`; the three inputs are the trolley force, the
/// bridge force, and the drum torque.  Parameters are fixed: load mass 1,
/// trolley mass 2, bridge mass 3, drum inertia 1/10, drum radius 1/10,
/// gravity 981/100.  The model carries coefficient rows for the two
/// characteristic candidate directions used by the triangular-form test.
pub fn crane_model() -> SystemModel {
    let dag = ExprDag::new();
    let q: Vec<Expr> = (1..=5).map(|i| dag.symbol(&format!("q{i}"))).collect();
    let v: Vec<Expr> = (1..=5).map(|i| dag.symbol(&format!("v{i}"))).collect();

    let m_l = dag.one();
    let m_t = dag.int(2);
    let m_b = dag.int(3);
    let inertia = dag.rat(1, 10);
    let grav = dag.rat(981, 100);
    let half = dag.rat(1, 2);

    // Load velocity components via the chain rule, then the kinetic energy of
    // load, drum, bridge (carrying the trolley), and trolley.
    let pos = load_position(&dag, &q);
    let vel: Vec<Expr> = pos
        .iter()
        .map(|p| {
            let terms: Vec<Expr> = q
                .iter()
                .zip(&v)
                .map(|(qi, vi)| dag.mul(&[p.diff(qi), vi.clone()]))
                .collect();
            dag.add(&terms)
        })
        .collect();
    let load_sq = dag.add(&[
        dag.pow(&vel[0], 2),
        dag.pow(&vel[1], 2),
        dag.pow(&vel[2], 2),
    ]);
    let kinetic = dag.add(&[
        dag.mul(&[half.clone(), m_l.clone(), load_sq]),
        dag.mul(&[half.clone(), inertia.clone(), dag.pow(&v[2], 2)]),
        dag.mul(&[
            half.clone(),
            dag.add(&[m_b.clone(), m_t.clone()]),
            dag.pow(&v[1], 2),
        ]),
        dag.mul(&[half.clone(), m_t.clone(), dag.pow(&v[0], 2)]),
    ]);
    let potential = dag.neg(&dag.mul(&[m_l, grav, pos[2].clone()]));

    // One generalized force per input, acting on q1, q2, q3 respectively.
    let forces: Vec<Vec<Expr>> = (0..3)
        .map(|j| {
            (0..5)
                .map(|i| if i == j { dag.one() } else { dag.zero() })
                .collect()
        })
        .collect();

    let domain = vec![
        (-1.0, 1.0),
        (-1.0, 1.0),
        (0.5, 2.0),
        (-0.4, 0.4),
        (-0.4, 0.4),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
    ];

    let mut model =
        SystemModel::from_lagrangian("gantry-crane", &dag, &q, &kinetic, &potential, &forces, domain)
            .expect("crane model data is well-formed");

    // Closed-form coefficient rows for the two candidate directions over the
    // input fields: c_i = Σ_j alpha[i][j] g_j.
    let (s4, c4) = (dag.sin(&q[3]), dag.cos(&q[3]));
    let (s5, c5) = (dag.sin(&q[4]), dag.cos(&q[4]));
    let two = dag.int(2);
    let sin_2q4 = dag.mul(&[two.clone(), s4, c4.clone()]);
    let sin_2q5 = dag.mul(&[two, s5, c5.clone()]);
    let m_t = dag.int(2);
    let m_bt = dag.int(5);
    let inertia = dag.rat(1, 10);
    let r_d = dag.rat(1, 10);
    let half = dag.rat(1, 2);
    let row1 = vec![
        dag.neg(&dag.mul(&[
            m_t,
            r_d.clone(),
            q[2].clone(),
            c4.clone(),
            c5.clone(),
        ])),
        dag.zero(),
        dag.mul(&[half.clone(), inertia.clone(), q[2].clone(), sin_2q5, c4.clone()]),
    ];
    let row2 = vec![
        dag.zero(),
        dag.neg(&dag.mul(&[m_bt, r_d, q[2].clone(), c4, c5.clone()])),
        dag.mul(&[half, inertia, q[2].clone(), sin_2q4, dag.pow(&c5, 2)]),
    ];
    model.ansatz = Some(CFieldAnsatz::Alpha(vec![row1, row2]));
    model
}

/// The crane's flat output: the Cartesian load position.
pub fn crane_flat_output(model: &SystemModel) -> Vec<Expr> {
    let q = &model.states[..5];
    load_position(&model.dag, q).to_vec()
}

/// The known state and input transformation taking the crane into its
/// triangular normal form, together with the matching structure indices.
///
/// Row order follows the canonical layout for indices `m = 2`, `s = 1`,
/// `k_ζ = 1`, `k_χ = 2`, `k_ξ = (1,1,1)`: the three chain tops carry the load
/// position (vertical component on chain 0), the contact block carries its
/// vertical velocity and the horizontal velocities paired with the rope-angle
/// tangents, and the last level carries the angle-tangent rates.  The new
/// inputs are the total derivatives of the `chi0` and `zeta1_j` rows, which
/// yields the feedback maps `alpha` and `beta` by splitting along drift and
/// input fields.
pub fn crane_transformation(model: &SystemModel) -> (TransformMaps, StructureIndices) {
    let dag = &model.dag;
    let states = &model.states;
    let q = &states[..5];
    let f = &model.drift;

    let [x_l, y_l, z_l] = load_position(dag, q);
    let tan5_sec4 = dag.quot(&dag.tan(&q[4]), &dag.cos(&q[3]));
    let tan4 = dag.tan(&q[3]);

    let phi = vec![
        z_l.clone(),
        x_l.clone(),
        y_l.clone(),
        lie(dag, f, states, &z_l),
        lie(dag, f, states, &x_l),
        lie(dag, f, states, &y_l),
        tan5_sec4.clone(),
        tan4.clone(),
        lie(dag, f, states, &tan5_sec4),
        lie(dag, f, states, &tan4),
    ];

    // w0, w1, w2 are the total time derivatives of rows 3, 8, 9.
    let top_rows = [3usize, 8, 9];
    let alpha: Vec<Expr> = top_rows
        .iter()
        .map(|&r| lie(dag, f, states, &phi[r]))
        .collect();
    let beta: Vec<Vec<Expr>> = top_rows
        .iter()
        .map(|&r| {
            model
                .inputs
                .iter()
                .map(|g| lie(dag, g, states, &phi[r]))
                .collect()
        })
        .collect();

    let indices = StructureIndices {
        m: 2,
        s: 1,
        k_zeta: 1,
        k_chi: 2,
        k_xi: vec![1, 1, 1],
    };
    (TransformMaps { phi, alpha, beta }, indices)
}
