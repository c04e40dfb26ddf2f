//! Pointwise numeric linear algebra.
//!
//! Geometric objects in this crate (distributions, annihilators, flags) are
//! evaluated numerically at randomized sample points. This module supplies
//! the shared primitives: SVD-based rank with a relative threshold, span
//! membership with a conditioning guard, kernel bases, and the modal-rank
//! vote that turns per-point ranks into a generic rank for the whole sample
//! set.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::error::Error;
use std::fmt;

/// Absolute floor below which every singular value counts as zero, so that
/// a matrix of numerical noise has rank zero rather than rank one.
pub const RANK_FLOOR: f64 = 1e-12;

/// A column whose norm is below this fraction of the largest column norm is
/// treated as numerically zero.
///
/// Generators that vanish identically in exact arithmetic evaluate to
/// cancellation residue: columns whose every entry is roundoff left over from
/// subtracting large intermediates. That residue scales with the magnitude of
/// what was cancelled — near a zero of an elimination pivot it reaches ~1e-9
/// of the dominant column — so an absolute floor cannot separate it from
/// genuine small generators. Relative to the dominant column the two
/// populations stay apart: residue below ~1e-9, genuine generators above
/// ~1e-4. The floor sits between them with two orders of margin each way.
pub const COL_FLOOR_REL: f64 = 1e-7;

/// Fraction of sample points that must agree on a rank before the vote is
/// accepted as the generic rank.
pub const MODAL_AGREEMENT_MIN: f64 = 0.8;

/// A sample point whose evaluated matrix is this many times larger than the
/// median across the sample set is discarded as numerically unusable.
///
/// The expressions behind a generator matrix are rational: symbolic
/// elimination introduces quotients whose denominators vanish on a
/// measure-zero locus. A draw that lands near that locus produces entries
/// orders of magnitude above every other draw, and the floating-point values
/// there carry amplified cancellation error. Smooth fields over the bounded
/// sample domain vary far less than this factor between draws, so the spread
/// cleanly separates near-pole points from honest ones.
pub const SCALE_SPREAD: f64 = 1e4;

/// Minimum fraction of the drawn sample points that must survive evaluation
/// (finite values, no near-pole blowup) for a vote over the survivors to be
/// meaningful.
pub const MIN_VALID_FRACTION: f64 = 0.5;

/// Sampling and tolerance parameters shared by every numeric check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckConfig {
    /// Number of sample points drawn from the model domain.
    pub n_points: usize,
    /// Relative tolerance for rank decisions and residual tests.
    pub tol_rel: f64,
    /// Seed for the deterministic sample-point generator.
    pub seed: u64,
    /// How many replacement points may be drawn when a point turns out to
    /// be degenerate (singular mass matrix, vanishing pivot, ...).
    pub max_resample: usize,
}

impl CheckConfig {
    pub fn with_seed(seed: u64) -> Self {
        CheckConfig {
            n_points: 25,
            tol_rel: 1e-9,
            seed,
            max_resample: 50,
        }
    }

    /// Reject configurations under which the sampling protocol is meaningless.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_points < 5 {
            return Err(ConfigError::TooFewPoints {
                n_points: self.n_points,
            });
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 1e-3) {
            return Err(ConfigError::BadTolerance {
                tol_rel: self.tol_rel,
            });
        }
        Ok(())
    }
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig::with_seed(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    TooFewPoints { n_points: usize },
    BadTolerance { tol_rel: f64 },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::TooFewPoints { n_points } => {
                write!(f, "need at least 5 sample points, got {n_points}")
            }
            ConfigError::BadTolerance { tol_rel } => {
                write!(f, "relative tolerance must lie in (0, 1e-3), got {tol_rel}")
            }
        }
    }
}

impl Error for ConfigError {}

/// Copy of `m` with each column scaled to unit Euclidean norm; columns that
/// are numerically zero — norm below [`RANK_FLOOR`], or below
/// [`COL_FLOOR_REL`] times the largest column norm — are dropped. Returns
/// `None` when no column survives.
///
/// The rank and span of a set of generators do not depend on how the
/// individual generators are scaled, but a singular-value threshold relative
/// to the largest singular value does: one generator whose entries are many
/// orders of magnitude larger than the rest (chained quotients produce such
/// spreads routinely) inflates the reference scale until genuine small
/// directions fall below the cutoff. Normalizing first removes that
/// coupling; the relative column floor keeps the normalization from blowing
/// cancellation residue up into spurious directions.
fn unit_columns(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let max_norm = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = RANK_FLOOR.max(COL_FLOOR_REL * max_norm);
    let cols: Vec<_> = m
        .column_iter()
        .filter_map(|c| {
            let norm = c.norm();
            (norm > floor).then(|| c.into_owned() / norm)
        })
        .collect();
    if cols.is_empty() {
        None
    } else {
        Some(DMatrix::from_columns(&cols))
    }
}

/// Numerical rank: singular values above `tol_rel` times the largest one,
/// computed after scaling each column to unit length so the result does not
/// depend on how the generators are scaled. A matrix with no column above
/// [`RANK_FLOOR`] has rank 0.
pub fn rank_at(m: &DMatrix<f64>, tol_rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let Some(scaled) = unit_columns(m) else {
        return 0;
    };
    let sv = scaled.svd(false, false).singular_values;
    let smax = sv.max();
    sv.iter().filter(|&&s| s > tol_rel * smax).count()
}

/// How far a singular value must sit from the rank threshold before a point
/// is allowed to vote on the rank.
///
/// At a generic sample point the spectrum splits cleanly: genuine directions
/// stay orders of magnitude above `tol_rel * sigma_max` and noise directions
/// orders of magnitude below. A draw near a degeneracy squeezes the whole
/// spectrum and leaves some singular value hovering around the threshold; its
/// rank decision is then a coin flip, so the point abstains instead.
pub const RANK_BAND: f64 = 100.0;

/// Rank as in [`rank_at`], or `None` when some singular value falls within
/// [`RANK_BAND`] of the decision threshold, making the count unreliable.
pub fn rank_at_confident(m: &DMatrix<f64>, tol_rel: f64) -> Option<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Some(0);
    }
    let Some(scaled) = unit_columns(m) else {
        return Some(0);
    };
    let sv = scaled.svd(false, false).singular_values;
    let cut = tol_rel * sv.max();
    if sv.iter().any(|&s| s > cut / RANK_BAND && s <= cut * RANK_BAND) {
        return None;
    }
    Some(sv.iter().filter(|&&s| s > cut).count())
}

/// Orthonormal basis of the right kernel, returned as columns.
pub fn nullspace_at(m: &DMatrix<f64>, tol_rel: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // The thin SVD only produces min(rows, cols) right singular vectors;
    // padding with zero rows (which changes neither row space nor kernel)
    // makes the factor square so every kernel direction appears.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = if smax < RANK_FLOOR {
        0
    } else {
        sv.iter().filter(|&&s| s > tol_rel * smax).count()
    };
    let v_t = svd.v_t.expect("kernel basis requested");
    v_t.rows(rank, v_t.nrows() - rank).transpose()
}

/// Outcome of a span-membership test.
#[derive(Clone, Debug)]
pub struct SpanCheck {
    pub inside: bool,
    /// Raw least-squares residual norm.
    pub residual: f64,
    /// Threshold the residual was compared against.
    pub threshold: f64,
}

/// Is `v` in the column span of `basis`?
///
/// The basis columns are scaled to unit length first (the span is unchanged,
/// the conditioning of the least-squares problem improves). The residual is
/// compared to `tol_rel * (1 + |v|) * guard` where the guard grows with the
/// conditioning of the scaled basis (capped at 1e3) so that legitimately
/// ill-conditioned bases do not produce spurious rejections.
pub fn in_span_at(basis: &DMatrix<f64>, v: &DVector<f64>, tol_rel: f64) -> SpanCheck {
    let vnorm = v.norm();
    let scaled = if basis.ncols() == 0 {
        None
    } else {
        unit_columns(basis)
    };
    let Some(scaled) = scaled else {
        // Empty (or numerically zero) basis spans only the origin.
        let threshold = tol_rel * (1.0 + vnorm);
        return SpanCheck {
            inside: vnorm <= threshold,
            residual: vnorm,
            threshold,
        };
    };
    let svd = scaled.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cutoff = tol_rel * smax;
    let smin = sv.iter().copied().filter(|&s| s > cutoff).fold(smax, f64::min);
    let c = svd.solve(v, cutoff).expect("SVD solve with factors computed");
    let residual = (scaled * c - v).norm();
    let kappa = smax / smin;
    let threshold = tol_rel * (1.0 + vnorm) * kappa.min(1e3);
    SpanCheck {
        inside: residual <= threshold,
        residual,
        threshold,
    }
}

/// Result of the modal-rank vote across sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct RankVote {
    /// The most frequent rank.
    pub modal: usize,
    /// How many points voted for it.
    pub votes: usize,
    /// Total number of points.
    pub total: usize,
}

impl RankVote {
    pub fn agreement(&self) -> f64 {
        self.votes as f64 / self.total as f64
    }

    /// The vote counts as a generic rank when at least
    /// [`MODAL_AGREEMENT_MIN`] of the points agree.
    pub fn is_stable(&self) -> bool {
        self.agreement() >= MODAL_AGREEMENT_MIN
    }
}

/// Tally per-point ranks. Ties resolve to the larger rank, as degenerate
/// points can only lower the rank.
pub fn modal_rank(ranks: &[usize]) -> RankVote {
    assert!(!ranks.is_empty(), "modal rank of an empty sample");
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &r in ranks {
        *hist.entry(r).or_insert(0) += 1;
    }
    let (&modal, &votes) = hist
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .unwrap();
    RankVote {
        modal,
        votes,
        total: ranks.len(),
    }
}
