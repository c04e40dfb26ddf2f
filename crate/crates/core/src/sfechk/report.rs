//! Report types produced by the triangular-form checks.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::Serializer;
use serde::Serialize;

/// Structure indices of a flat triangular form: the number of secondary
/// inputs `m`, the chain shift `s`, the depths `k_zeta` and `k_chi` of the
/// two lower blocks, and the per-input lengths `k_xi` of the top integrator
/// chains (descending).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureIndices {
    pub m: usize,
    pub s: usize,
    pub k_zeta: usize,
    pub k_chi: usize,
    pub k_xi: Vec<usize>,
}

impl StructureIndices {
    /// Number of states a triangular form with these indices has.
    pub fn state_count(&self) -> usize {
        let xi: usize = self.k_xi.iter().sum();
        (self.m + 1) * self.k_zeta - self.s + self.m * self.k_chi + 1 + xi
    }
}

/// Outcome of a check run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Equivalent to the triangular form with chain shift 0.
    Tf0,
    /// Equivalent to the triangular form with chain shift 1.
    Tf1,
    /// A necessary condition failed; carries the first failing condition id.
    Fail(String),
    /// The check could neither confirm nor refute; carries the reason.
    Inconclusive(String),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Tf0 => write!(f, "TF0"),
            Verdict::Tf1 => write!(f, "TF1"),
            Verdict::Fail(id) => write!(f, "Fail({id})"),
            Verdict::Inconclusive(reason) => write!(f, "Inconclusive({reason})"),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Ranks of the distribution sequences computed during a check, in order of
/// appearance: the input flag `D`, the derived flag `E_flag` of the obstruction
/// block, the involutive corank-one subdistribution `L`, and the closing
/// sequence `F`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RankTable {
    #[serde(rename = "D")]
    pub d: Vec<usize>,
    #[serde(rename = "E_flag")]
    pub e_flag: Vec<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "F")]
    pub f: Vec<usize>,
}

/// One verified condition: its id in theorem order, the outcome, the worst
/// residual behind the decision (when a numeric test was involved), and the
/// sample point that produced it (for failures).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionRecord {
    pub id: String,
    pub status: String,
    pub residual: Option<f64>,
    pub witness_point: Option<BTreeMap<String, f64>>,
}

/// Outcome of a flat-output verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatOutputStatus {
    pub status: String,
    pub basis_residual: f64,
}

impl FlatOutputStatus {
    pub fn verified(&self) -> bool {
        self.status == "verified"
    }
}

/// Full result of a check run: the verdict, the recovered structure indices,
/// the rank table, and one record per evaluated condition.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub indices: StructureIndices,
    pub ranks: RankTable,
    pub conditions: Vec<ConditionRecord>,
    pub flat_output: Option<FlatOutputStatus>,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict)?;
        writeln!(
            f,
            "indices: m={} s={} k_zeta={} k_chi={} k_xi={:?}",
            self.indices.m, self.indices.s, self.indices.k_zeta, self.indices.k_chi, self.indices.k_xi
        )?;
        writeln!(
            f,
            "ranks:   D={:?}  E_flag={:?}  L={}  F={:?}",
            self.ranks.d, self.ranks.e_flag, self.ranks.l, self.ranks.f
        )?;
        writeln!(f, "conditions:")?;
        for c in &self.conditions {
            write!(f, "  {:<4} {}", c.id, c.status)?;
            if let Some(r) = c.residual {
                write!(f, "  (residual {r:.3e})")?;
            }
            writeln!(f)?;
        }
        if let Some(fo) = &self.flat_output {
            writeln!(f, "flat output: {} (basis residual {:.3e})", fo.status, fo.basis_residual)?;
        }
        Ok(())
    }
}
