//! System models: state coordinates, drift and input fields, a sampling
//! domain, and optional candidate data for the equivalence checks.
//!
//! Models are built either directly from drift/input expressions or from a
//! Lagrangian (kinetic energy, potential, generalized forces), in which case
//! the equations of motion are derived symbolically and the mass matrix stays
//! embedded as a linear-solve node. A small text format (see `docs/dsl.md`)
//! covers both styles.

mod lagrange;
mod textfmt;

pub use lagrange::velocity_name;

use crate::expr::{Evaluator, Expr, ExprDag, ParseError, Point};
use crate::geom::VectorField;
use crate::numlin::{self, CheckConfig, ConfigError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::error::Error;
use std::fmt;

#[derive(Debug)]
pub enum ModelError {
    /// Malformed model text (not expression syntax).
    Syntax { line: usize, msg: String },
    /// An embedded expression failed to parse.
    Expr { line: usize, err: ParseError },
    MissingSection(String),
    /// A state has no domain range and no `*` default was given.
    MissingDomain(String),
    DuplicateSection { line: usize, name: String },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// The input fields are linearly dependent at generic points.
    DependentInputs,
    /// The mass matrix of a Lagrangian model is singular everywhere tried.
    SingularMass,
    /// Could not draw enough valid sample points from the domain.
    SamplingFailed { requested: usize, obtained: usize },
    /// The model cannot be rendered back to text.
    NotSerializable(&'static str),
    Config(ConfigError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            ModelError::Expr { line, err } => write!(f, "line {line}: {err}"),
            ModelError::MissingSection(s) => write!(f, "missing section [{s}]"),
            ModelError::MissingDomain(s) => {
                write!(f, "no domain range for state `{s}` (add it or a `*` default)")
            }
            ModelError::DuplicateSection { line, name } => {
                write!(f, "line {line}: duplicate section [{name}]")
            }
            ModelError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected {expected} entries, got {got}"),
            ModelError::DependentInputs => {
                write!(f, "input fields are linearly dependent at generic points")
            }
            ModelError::SingularMass => {
                write!(f, "mass matrix is singular at every sampled point")
            }
            ModelError::SamplingFailed {
                requested,
                obtained,
            } => write!(
                f,
                "could only draw {obtained} of {requested} valid sample points"
            ),
            ModelError::NotSerializable(what) => {
                write!(f, "model cannot be saved: {what}")
            }
            ModelError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl Error for ModelError {}

impl From<ConfigError> for ModelError {
    fn from(e: ConfigError) -> Self {
        ModelError::Config(e)
    }
}

/// Candidate characteristic directions supplied with a model.
#[derive(Clone, Debug)]
pub enum CFieldAnsatz {
    /// Coefficient rows over the canonical bracket base: `alpha[i]` holds the
    /// coefficients of the i-th candidate direction.
    Alpha(Vec<Vec<Expr>>),
    /// Explicit candidate vector fields.
    Fields(Vec<VectorField>),
}

impl CFieldAnsatz {
    pub fn len(&self) -> usize {
        match self {
            CFieldAnsatz::Alpha(rows) => rows.len(),
            CFieldAnsatz::Fields(fs) => fs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The mechanical description a model was generated from, kept so the model
/// can be saved back to text (the derived fields contain solve nodes).
#[derive(Clone, Debug)]
pub struct LagrangianSpec {
    pub q: Vec<Expr>,
    pub v: Vec<Expr>,
    pub kinetic: Expr,
    pub potential: Expr,
    pub forces: Vec<Vec<Expr>>,
}

/// A control-affine system ẋ = f(x) + Σⱼ uⱼ gⱼ(x) with a box domain.
pub struct SystemModel {
    pub name: String,
    pub dag: ExprDag,
    pub states: Vec<Expr>,
    pub drift: VectorField,
    pub inputs: Vec<VectorField>,
    /// Sampling box, aligned with `states`.
    pub domain: Vec<(f64, f64)>,
    pub ansatz: Option<CFieldAnsatz>,
    pub lagrangian: Option<LagrangianSpec>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("states", &self.state_names())
            .field("inputs", &self.num_inputs())
            .field("lagrangian", &self.lagrangian.is_some())
            .finish()
    }
}

impl SystemModel {
    /// State dimension.
    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Number of inputs (m + 1 in the triangular-form indexing).
    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_names(&self) -> Vec<String> {
        let dag = &self.dag;
        self.states
            .iter()
            .map(|s| dag.symbol_name(s.as_symbol().unwrap()))
            .collect()
    }

    /// Build a model from a Lagrangian: states are (q, v) with v named by
    /// [`velocity_name`], the drift and one input field per generalized force
    /// are derived from the equations of motion.
    ///
    /// `domain` is aligned with the combined state (q first, then v).
    pub fn from_lagrangian(
        name: &str,
        dag: &ExprDag,
        q: &[Expr],
        kinetic: &Expr,
        potential: &Expr,
        forces: &[Vec<Expr>],
        domain: Vec<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        let k = q.len();
        for f in forces {
            if f.len() != k {
                return Err(ModelError::DimensionMismatch {
                    what: "generalized force",
                    expected: k,
                    got: f.len(),
                });
            }
        }
        if domain.len() != 2 * k {
            return Err(ModelError::DimensionMismatch {
                what: "domain",
                expected: 2 * k,
                got: domain.len(),
            });
        }
        let v: Vec<Expr> = q
            .iter()
            .map(|qi| {
                let qname = dag.symbol_name(qi.as_symbol().expect("configs must be symbols"));
                dag.symbol(&velocity_name(&qname))
            })
            .collect();
        let (drift, inputs) = lagrange::euler_lagrange(dag, q, &v, kinetic, potential, forces)?;
        let mut states = q.to_vec();
        states.extend(v.iter().cloned());
        Ok(SystemModel {
            name: name.to_string(),
            dag: dag.clone(),
            states,
            drift,
            inputs,
            domain,
            ansatz: None,
            lagrangian: Some(LagrangianSpec {
                q: q.to_vec(),
                v,
                kinetic: kinetic.clone(),
                potential: potential.clone(),
                forces: forces.to_vec(),
            }),
        })
    }

    /// Draw sample points uniformly from the domain box, redrawing points at
    /// which the system fields fail to evaluate (up to the resample budget).
    /// Verifies that the inputs are pointwise independent.
    pub fn draw_samples(&self, cfg: &CheckConfig) -> Result<Vec<Point>, ModelError> {
        cfg.validate()?;
        let names = self.state_names();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ev = Evaluator::new(&self.dag);
        let mut exprs: Vec<Expr> = self.drift.comps.clone();
        for g in &self.inputs {
            exprs.extend(g.comps.iter().cloned());
        }
        let n = self.n();
        let m1 = self.num_inputs();
        let mut points = Vec::with_capacity(cfg.n_points);
        let mut input_mats = Vec::with_capacity(cfg.n_points);
        let budget = cfg.n_points + cfg.max_resample;
        let mut drawn = 0;
        while points.len() < cfg.n_points && drawn < budget {
            drawn += 1;
            let mut p = Point::new();
            for (nm, (lo, hi)) in names.iter().zip(&self.domain) {
                let x = if lo < hi { rng.gen_range(*lo..*hi) } else { *lo };
                p.set(nm, x);
            }
            match ev.eval(&exprs, &p) {
                Ok(vals) => {
                    let g = nalgebra::DMatrix::from_vec(n, m1, vals[n..].to_vec());
                    input_mats.push(g);
                    points.push(p);
                }
                Err(_) => continue,
            }
        }
        if points.len() < cfg.n_points {
            if points.is_empty() && self.lagrangian.is_some() {
                return Err(ModelError::SingularMass);
            }
            return Err(ModelError::SamplingFailed {
                requested: cfg.n_points,
                obtained: points.len(),
            });
        }
        let ranks: Vec<usize> = input_mats
            .iter()
            .filter_map(|g| numlin::rank_at_confident(g, cfg.tol_rel))
            .collect();
        if ranks.is_empty() {
            return Err(ModelError::DependentInputs);
        }
        let vote = numlin::modal_rank(&ranks);
        if vote.modal != m1 || !vote.is_stable() {
            return Err(ModelError::DependentInputs);
        }
        Ok(points)
    }
}
