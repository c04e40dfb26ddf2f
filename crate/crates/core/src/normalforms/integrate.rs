//! Fixed-step Runge–Kutta integration of a model under a supplied input
//! signal, used to exercise generated systems and the crane fixture along
//! trajectories rather than only at sampled points.

use crate::expr::{Evaluator, Expr, Point};
use crate::model::SystemModel;

use super::NormalFormError;

/// A simulated trajectory: `states[k]` is the state at `times[k]`, with
/// coordinates ordered as in `names`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl Trajectory {
    /// Render as CSV with a `t` column followed by one column per state.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }

    /// Final state of the trajectory.
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least x0")
    }
}

/// Integrate `ẋ = f(x) + Σ_j u_j(t) g_j(x)` with the classical fourth-order
/// Runge–Kutta scheme at fixed step `dt` from `t = 0` to `t_end`.
///
/// `input` maps time to the input vector (length = number of inputs).  The
/// final step is shortened so the trajectory ends exactly at `t_end`.  Fails
/// with [`NormalFormError::NonFiniteState`] if the state leaves the region
/// where the fields evaluate to finite values.
pub fn integrate_rk4(
    model: &SystemModel,
    x0: &[f64],
    input: &dyn Fn(f64) -> Vec<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, NormalFormError> {
    let n = model.n();
    let m1 = model.num_inputs();
    if x0.len() != n {
        return Err(NormalFormError::BadIndices(format!(
            "initial state has {} entries, model has {} states",
            x0.len(),
            n
        )));
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(NormalFormError::BadIndices(
            "step and horizon must be positive".to_string(),
        ));
    }

    let names = model.state_names();
    let mut ev = Evaluator::new(&model.dag);
    let mut exprs: Vec<Expr> = model.drift.comps.clone();
    for g in &model.inputs {
        exprs.extend(g.comps.iter().cloned());
    }

    let mut rhs = |t: f64, x: &[f64]| -> Result<Vec<f64>, NormalFormError> {
        let mut p = Point::new();
        for (name, xi) in names.iter().zip(x) {
            if !xi.is_finite() {
                return Err(NormalFormError::NonFiniteState { t });
            }
            p.set(name, *xi);
        }
        let vals = ev
            .eval(&exprs, &p)
            .map_err(|_| NormalFormError::NonFiniteState { t })?;
        let u = input(t);
        debug_assert_eq!(u.len(), m1, "input signal arity");
        let mut dx = vals[..n].to_vec();
        for (j, uj) in u.iter().enumerate() {
            for i in 0..n {
                dx[i] += uj * vals[(j + 1) * n + i];
            }
        }
        Ok(dx)
    };

    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut t = 0.0;
    let mut x = x0.to_vec();
    while t < t_end - 1e-12 {
        let h = dt.min(t_end - t);
        let k1 = rhs(t, &x)?;
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k2 = rhs(t + 0.5 * h, &x2)?;
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k3 = rhs(t + 0.5 * h, &x3)?;
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
        let k4 = rhs(t + h, &x4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NormalFormError::NonFiniteState { t });
        }
        times.push(t);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        names,
    })
}
