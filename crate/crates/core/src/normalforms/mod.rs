//! Construction and manipulation of flat triangular normal forms.
//!
//! [`TfLayout`] fixes the canonical state ordering used everywhere a
//! triangular form is written down explicitly: integrator chains first
//! (level-major), then the distinguished middle variable, the middle block
//! (level-major), and the bottom chains (level-major, distinguished chain
//! first).  [`generate_tf`] builds random instances in exactly this layout,
//! [`scramble`] hides them behind invertible state and input
//! transformations, and [`crane_model`] constructs the reference mechanical
//! example.

mod crane;
mod generate;
mod integrate;
mod scramble;


use std::error::Error;
use std::fmt;

use crate::sfechk::StructureIndices;

pub use crane::{crane_flat_output, crane_model, crane_transformation};
pub use generate::generate_tf;
pub use integrate::{integrate_rk4, Trajectory};
pub use scramble::{scramble, ScrambledModel};

/// Errors raised while building or transforming normal forms.
#[derive(Debug)]
pub enum NormalFormError {
    /// Structure indices that no triangular form can have.
    BadIndices(String),
    /// The requested input mixing is not invertible.
    NonInvertibleScramble,
    /// A state left the finite range during numerical integration.
    NonFiniteState { t: f64 },
}

impl fmt::Display for NormalFormError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalFormError::BadIndices(msg) => write!(f, "bad structure indices: {msg}"),
            NormalFormError::NonInvertibleScramble => {
                write!(f, "scramble input mixing is not invertible")
            }
            NormalFormError::NonFiniteState { t } => {
                write!(f, "state became non-finite at t = {t}")
            }
        }
    }
}

impl Error for NormalFormError {}

/// One state variable of a triangular form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfRow {
    /// Top integrator chain variable, level `1..=k_xi[chain]`, chain `0..=m`.
    Xi { level: usize, chain: usize },
    /// The distinguished middle-block variable.
    Chi0,
    /// Middle-block variable, level `1..=k_chi`, chain `1..=m`.
    Chi { level: usize, chain: usize },
    /// Bottom chain variable, level `1..=k_zeta - s` for chain 0 and
    /// `1..=k_zeta` for chains `1..=m`.
    Zeta { level: usize, chain: usize },
}

/// Canonical state layout of a triangular form with given structure indices.
#[derive(Debug, Clone)]
pub struct TfLayout {
    indices: StructureIndices,
    rows: Vec<TfRow>,
    names: Vec<String>,
}

impl TfLayout {
    /// Validate the indices and lay out the state variables.
    pub fn new(indices: &StructureIndices) -> Result<TfLayout, NormalFormError> {
        let m = indices.m;
        let bad = |msg: &str| Err(NormalFormError::BadIndices(msg.to_string()));
        if m < 2 {
            return bad("need at least three inputs (m >= 2)");
        }
        if indices.s > 1 {
            return bad("chain shift must be 0 or 1");
        }
        if indices.k_zeta < 1 {
            return bad("k_zeta must be at least 1");
        }
        if indices.k_chi < 2 {
            return bad("k_chi must be at least 2");
        }
        if indices.k_xi.len() != m + 1 {
            return bad("k_xi needs exactly one entry per input");
        }
        if indices.k_xi.windows(2).any(|w| w[1] > w[0]) {
            return bad("k_xi must be non-increasing");
        }

        let mut rows = Vec::new();
        let max_xi = indices.k_xi.iter().copied().max().unwrap_or(0);
        for level in 1..=max_xi {
            for (chain, &len) in indices.k_xi.iter().enumerate() {
                if level <= len {
                    rows.push(TfRow::Xi { level, chain });
                }
            }
        }
        rows.push(TfRow::Chi0);
        for level in 1..=indices.k_chi {
            for chain in 1..=m {
                rows.push(TfRow::Chi { level, chain });
            }
        }
        for level in 1..=indices.k_zeta {
            if level <= indices.k_zeta - indices.s {
                rows.push(TfRow::Zeta { level, chain: 0 });
            }
            for chain in 1..=m {
                rows.push(TfRow::Zeta { level, chain });
            }
        }
        debug_assert_eq!(rows.len(), indices.state_count());

        let names = rows
            .iter()
            .map(|r| match *r {
                TfRow::Xi { level, chain } => format!("xi{level}_{chain}"),
                TfRow::Chi0 => "chi0".to_string(),
                TfRow::Chi { level, chain } => format!("chi{level}_{chain}"),
                TfRow::Zeta { level, chain } => format!("zeta{level}_{chain}"),
            })
            .collect();
        Ok(TfLayout {
            indices: indices.clone(),
            rows,
            names,
        })
    }

    pub fn indices(&self) -> &StructureIndices {
        &self.indices
    }

    pub fn rows(&self) -> &[TfRow] {
        &self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of state variables.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Position of a variable in the canonical ordering.
    pub fn index_of(&self, row: TfRow) -> usize {
        self.rows
            .iter()
            .position(|r| *r == row)
            .expect("variable not present in this layout")
    }

    /// True when the distinguished input feeds the middle block directly
    /// (its bottom chain is empty).
    pub fn direct_w0(&self) -> bool {
        self.indices.s == self.indices.k_zeta
    }

    /// State indices that may appear in the lower-triangular drift entry of
    /// a middle-block variable at `level` (below the top level): all top
    /// chain variables, the distinguished variable, and middle variables up
    /// to one level above.
    pub fn chi_drift_args(&self, level: usize) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| match **r {
                TfRow::Xi { .. } | TfRow::Chi0 => true,
                TfRow::Chi { level: l, .. } => l <= level + 1,
                TfRow::Zeta { .. } => false,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// State indices that may appear in the input coefficient of a top-level
    /// middle-block variable: all top chain variables, the distinguished
    /// variable, and the whole middle block.
    pub fn chi_top_args(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !matches!(**r, TfRow::Zeta { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}
