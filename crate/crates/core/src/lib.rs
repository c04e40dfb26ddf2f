//! Structural flatness analysis for control-affine systems.
//!
//! The crate decides whether a multi-input control-affine system
//! `ẋ = f(x) + Σ_j u_j g_j(x)` is static-feedback equivalent to one of two
//! triangular normal forms built from integrator chains on top of a contact
//! block, and — when it is — recovers the structure indices, a flat output,
//! and a state/input transformation into the normal form.
//!
//! The work happens in layers:
//!
//! * [`expr`] — a hash-consed expression DAG with exact rational folding,
//!   memoised differentiation, batched numeric evaluation, and an embedded
//!   linear-solve node used for Lagrangian mechanics.
//! * [`numlin`] — pointwise numeric linear algebra (rank, span and kernel
//!   tests) evaluated over randomized sample points with a modal-rank vote.
//! * [`geom`] — vector fields, Lie brackets, distributions, derived flags,
//!   Cauchy characteristics, and a sample-verified symbolic kernel.
//! * [`model`] — system models (drift/inputs or Lagrangian), the text model
//!   format, and domain sampling.
//! * [`subdist`] — structured subdistributions: the involutive corank-one
//!   subdistribution when it exists, and candidate-field coefficients under
//!   quadratic bracket conditions (residuals, a pointwise solver, and
//!   field-level verification).
//! * [`sfechk`] — the equivalence decision itself: the condition pipelines
//!   for both normal-form shifts, structure-index recovery, flat-output
//!   verification, and transformation verification.
//! * [`normalforms`] — the canonical layout of the triangular forms, random
//!   instance generation, state/input scrambling, trajectory integration,
//!   and the gantry-crane reference model.

pub mod expr;
pub mod geom;
pub mod model;
pub mod normalforms;
pub mod numlin;
pub mod sfechk;
pub mod subdist;

pub use expr::{EvalError, Evaluator, Expr, ExprDag, ParseError, Point, SymbolId};
pub use geom::{Distribution, GeoCtx, GeomError, OneForm, VectorField};
pub use model::{CFieldAnsatz, LagrangianSpec, ModelError, SystemModel};
pub use normalforms::{
    crane_flat_output, crane_model, crane_transformation, generate_tf, integrate_rk4, scramble,
    NormalFormError, ScrambledModel, TfLayout, TfRow, Trajectory,
};
pub use numlin::CheckConfig;
pub use sfechk::{
    check_affine_reduction, check_auto, check_tf0, check_tf1, verify_flat_output,
    verify_transformation, CheckError, CheckReport, ConditionRecord, FlatOutputStatus, RankTable,
    StructureIndices, TransformMaps, TransformReport, Verdict,
};
pub use subdist::{AlphaAnsatz, AnsatzSolutions, CorankPair, SubdistError};
