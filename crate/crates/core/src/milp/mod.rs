//! Mixed-integer program data model.
//!
//! A [`MilpInstance`] stores `min cᵀx s.t. Ax ≤ b, l ≤ x ≤ u, x_j ∈ ℤ for j ∈ I`
//! once it has been passed through [`normalize`]. Before normalization rows may
//! carry `≥` or `=` senses and the objective may be a maximization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod json;
pub mod mps;

pub use json::{read_json, write_json};
pub use mps::read_mps;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("duplicate coefficient for variable {var}")]
    DuplicateCoefficient { var: usize },
    #[error("variable index {index} out of range (n_vars = {n_vars})")]
    IndexOutOfRange { index: usize, n_vars: usize },
    #[error("objective vector is empty")]
    EmptyObjective,
    #[error("row has no nonzero coefficients")]
    EmptyRow,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("variable {var}: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("instance is not normalized (minimize, all rows <=)")]
    NotNormalized,
    #[error("invalid cut: {0}")]
    InvalidCutIndices(String),
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("unsupported MPS feature: {0}")]
    UnsupportedMpsFeature(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    #[default]
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeparatorKind {
    GomoryFractional,
    GomoryMixedInteger,
}

/// Where a row came from. Cuts remember the separator, the selection round
/// that appended them and their (approximate) Chvátal rank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum RowOrigin {
    #[default]
    Original,
    Cut {
        separator: SeparatorKind,
        round: u32,
        rank: u32,
    },
}

impl RowOrigin {
    pub fn is_cut(&self) -> bool {
        matches!(self, RowOrigin::Cut { .. })
    }

    pub fn rank(&self) -> u32 {
        match self {
            RowOrigin::Original => 0,
            RowOrigin::Cut { rank, .. } => *rank,
        }
    }
}

/// A sparse linear row `Σ coeffs · x (sense) rhs`.
///
/// Coefficients are sorted by variable index, without duplicates or stored
/// zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    #[serde(default, skip_serializing_if = "is_le")]
    pub sense: RowSense,
    #[serde(default)]
    pub origin: RowOrigin,
}

fn is_le(s: &RowSense) -> bool {
    *s == RowSense::Le
}

impl Row {
    pub fn new(
        mut coeffs: Vec<(usize, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> Result<Self, MilpError> {
        if !rhs.is_finite() {
            return Err(MilpError::NonFinite("row rhs"));
        }
        if coeffs.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(MilpError::NonFinite("row coefficient"));
        }
        coeffs.retain(|&(_, v)| v != 0.0);
        coeffs.sort_by_key(|&(j, _)| j);
        if let Some(w) = coeffs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MilpError::DuplicateCoefficient { var: w[0].0 });
        }
        if coeffs.is_empty() {
            return Err(MilpError::EmptyRow);
        }
        Ok(Row {
            coeffs,
            rhs,
            sense,
            origin: RowOrigin::Original,
        })
    }

    /// `Σ coeffs · x ≤ rhs`.
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Result<Self, MilpError> {
        Row::new(coeffs, RowSense::Le, rhs)
    }

    pub fn with_origin(mut self, origin: RowOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn min_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .fold(f64::INFINITY, |m, &(_, v)| m.min(v.abs()))
    }

    /// Sparse dot product with another row.
    pub fn dot(&self, other: &Row) -> f64 {
        let (mut i, mut k, mut acc) = (0, 0, 0.0);
        while i < self.coeffs.len() && k < other.coeffs.len() {
            let (a, b) = (self.coeffs[i], other.coeffs[k]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    k += 1;
                }
            }
        }
        acc
    }

    pub fn scaled(&self, factor: f64) -> Row {
        Row {
            coeffs: self.coeffs.iter().map(|&(j, v)| (j, v * factor)).collect(),
            rhs: self.rhs * factor,
            sense: self.sense,
            origin: self.origin,
        }
    }

    fn negated(&self) -> Row {
        let mut r = self.scaled(-1.0);
        r.sense = match self.sense {
            RowSense::Le => RowSense::Ge,
            RowSense::Ge => RowSense::Le,
            RowSense::Eq => RowSense::Eq,
        };
        r
    }
}

/// A mixed-integer linear program.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub objective: Vec<f64>,
    pub sense: ObjSense,
    /// Set when a maximization objective was negated into a minimization.
    pub negated: bool,
    pub rows: Vec<Row>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    /// Sorted, duplicate-free indices of integer variables.
    pub integrality: Vec<usize>,
    pub family: Option<String>,
    pub generator_version: Option<u32>,
}

impl MilpInstance {
    /// A minimization instance with default bounds `[0, +∞)` and no rows.
    pub fn new(name: impl Into<String>, objective: Vec<f64>) -> Self {
        let n = objective.len();
        MilpInstance {
            name: name.into(),
            objective,
            sense: ObjSense::Minimize,
            negated: false,
            rows: Vec::new(),
            var_lower: vec![0.0; n],
            var_upper: vec![f64::INFINITY; n],
            integrality: Vec::new(),
            family: None,
            generator_version: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn integer_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vars()];
        for &j in &self.integrality {
            mask[j] = true;
        }
        mask
    }

    pub fn is_normalized(&self) -> bool {
        self.sense == ObjSense::Minimize && self.rows.iter().all(|r| r.sense == RowSense::Le)
    }

    /// Converts an objective value of the normalized problem back to the
    /// sense the instance was written in.
    pub fn report_objective(&self, z: f64) -> f64 {
        if self.negated {
            -z
        } else {
            z
        }
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.n_vars();
        if n == 0 {
            return Err(MilpError::EmptyObjective);
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(MilpError::NonFinite("objective"));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(MilpError::LengthMismatch(format!(
                "{} objective entries but {} lower / {} upper bounds",
                n,
                self.var_lower.len(),
                self.var_upper.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (self.var_lower[j], self.var_upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(MilpError::InvalidBounds {
                    var: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        for w in self.integrality.windows(2) {
            if w[0] >= w[1] {
                return Err(MilpError::DuplicateCoefficient { var: w[1] });
            }
        }
        if let Some(&j) = self.integrality.iter().find(|&&j| j >= n) {
            return Err(MilpError::IndexOutOfRange {
                index: j,
                n_vars: n,
            });
        }
        for row in &self.rows {
            check_row(row, n)?;
        }
        Ok(())
    }
}

pub(crate) fn check_row(row: &Row, n: usize) -> Result<(), MilpError> {
    if row.coeffs.is_empty() {
        return Err(MilpError::EmptyRow);
    }
    for w in row.coeffs.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(MilpError::DuplicateCoefficient { var: w[0].0 });
        }
        if w[0].0 > w[1].0 {
            return Err(MilpError::InvalidCutIndices(
                "coefficients not sorted".into(),
            ));
        }
    }
    if let Some(&(j, _)) = row.coeffs.iter().find(|&&(j, _)| j >= n) {
        return Err(MilpError::IndexOutOfRange {
            index: j,
            n_vars: n,
        });
    }
    if row.coeffs.iter().any(|&(_, v)| v == 0.0 || !v.is_finite()) || !row.rhs.is_finite() {
        return Err(MilpError::NonFinite("row"));
    }
    Ok(())
}

/// Brings an instance into `min cᵀx, Ax ≤ b` form.
///
/// Maximization objectives are negated (the `negated` flag records it), `≥`
/// rows are negated and equalities are split into two `≤` rows. Bounds are
/// left untouched. Normalizing twice is a no-op.
pub fn normalize(instance: &MilpInstance) -> Result<MilpInstance, MilpError> {
    instance.validate()?;
    let mut out = instance.clone();
    if out.sense == ObjSense::Maximize {
        for c in &mut out.objective {
            *c = -*c;
        }
        out.sense = ObjSense::Minimize;
        out.negated = !out.negated;
    }
    let mut rows = Vec::with_capacity(instance.rows.len());
    for row in &instance.rows {
        match row.sense {
            RowSense::Le => rows.push(row.clone()),
            RowSense::Ge => rows.push(row.negated()),
            RowSense::Eq => {
                let mut le = row.clone();
                le.sense = RowSense::Le;
                let mut ge = row.scaled(-1.0);
                ge.sense = RowSense::Le;
                rows.push(le);
                rows.push(ge);
            }
        }
    }
    out.rows = rows;
    Ok(out)
}

/// The continuous relaxation of a normalized instance with the cuts appended
/// so far, plus bookkeeping used by age features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpRelaxation {
    pub base: Arc<MilpInstance>,
    pub cuts: Vec<Row>,
    pub lp_solve_count: u32,
    /// Consecutive solves in which each row (base rows then cuts) was slack.
    pub row_age: Vec<u32>,
    /// Consecutive solves in which each variable sat at zero.
    pub col_age: Vec<u32>,
    /// Value of `lp_solve_count` when each row entered the relaxation.
    pub row_created: Vec<u32>,
}

impl LpRelaxation {
    pub fn new(base: Arc<MilpInstance>) -> Result<Self, MilpError> {
        if !base.is_normalized() {
            return Err(MilpError::NotNormalized);
        }
        base.validate()?;
        let m = base.n_rows();
        let n = base.n_vars();
        Ok(LpRelaxation {
            base,
            cuts: Vec::new(),
            lp_solve_count: 0,
            row_age: vec![0; m],
            col_age: vec![0; n],
            row_created: vec![0; m],
        })
    }

    pub fn n_vars(&self) -> usize {
        self.base.n_vars()
    }

    pub fn n_rows(&self) -> usize {
        self.base.n_rows() + self.cuts.len()
    }

    pub fn row(&self, i: usize) -> &Row {
        let m0 = self.base.n_rows();
        if i < m0 {
            &self.base.rows[i]
        } else {
            &self.cuts[i - m0]
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> + '_ {
        self.base.rows.iter().chain(self.cuts.iter())
    }

    /// Returns `P ∩ {πᵀx ≤ π₀}`; `self` is left unchanged.
    pub fn append_cut(&self, cut: Row) -> Result<LpRelaxation, MilpError> {
        let mut next = self.clone();
        next.push_cut(cut)?;
        Ok(next)
    }

    /// In-place variant of [`LpRelaxation::append_cut`].
    pub fn push_cut(&mut self, mut cut: Row) -> Result<(), MilpError> {
        if cut.sense != RowSense::Le {
            return Err(MilpError::InvalidCutIndices(
                "cut must be in <= form".into(),
            ));
        }
        check_row(&cut, self.n_vars()).map_err(|e| MilpError::InvalidCutIndices(e.to_string()))?;
        let round = self.cuts.len() as u32 + 1;
        cut.origin = match cut.origin {
            RowOrigin::Cut {
                separator, rank, ..
            } => RowOrigin::Cut {
                separator,
                round,
                rank,
            },
            RowOrigin::Original => {
                return Err(MilpError::InvalidCutIndices(
                    "appended row must carry a cut origin".into(),
                ))
            }
        };
        self.cuts.push(cut);
        self.row_age.push(0);
        self.row_created.push(self.lp_solve_count);
        Ok(())
    }
}
