//! Gomory fractional and Gomory mixed-integer cuts read off the optimal
//! simplex tableau.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{BasisStatus, LpError, LpSolution, Tableau, TableauRow, INF_BOUND, INT_TOL};
use crate::milp::{LpRelaxation, Row, RowOrigin, SeparatorKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparatorError {
    #[error("row has no nonzero coefficient")]
    ZeroRow,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A candidate cut `πᵀx ≤ π₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub row: Row,
    pub separator: SeparatorKind,
    /// Fractional basic variable whose tableau row produced the cut.
    pub source_var: usize,
    pub rank: u32,
}

impl Cut {
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.row.activity(x) - self.row.rhs
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutPool {
    pub cuts: Vec<Cut>,
    pub generated_at_round: u32,
}

impl CutPool {
    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparatorConfig {
    pub viol_tol: f64,
    pub max_coef: f64,
    pub max_dynamism: f64,
    pub gomory_fractional: bool,
    pub gomory_mixed_integer: bool,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        SeparatorConfig {
            viol_tol: 1e-6,
            max_coef: 1e6,
            max_dynamism: 1e8,
            gomory_fractional: true,
            gomory_mixed_integer: true,
        }
    }
}

const ZERO_TOL: f64 = 1e-11;
const FRAC_EPS: f64 = 1e-9;

fn frac(v: f64) -> f64 {
    let f = v - v.floor();
    if !(FRAC_EPS..=1.0 - FRAC_EPS).contains(&f) {
        0.0
    } else {
        f
    }
}

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() <= FRAC_EPS
}

/// Per-column data of the nonbasic space `x' ≥ 0`.
struct Shift {
    /// +1 when `x = l + x'`, −1 when `x = u − x'`, 0 when the column is
    /// fixed or basic, `None` for a free nonbasic column.
    sign: Vec<Option<f64>>,
    integer: Vec<bool>,
}

fn shift_space(solution: &LpSolution, relaxation: &LpRelaxation) -> Shift {
    let base = &relaxation.base;
    let n = relaxation.n_vars();
    let mask = base.integer_mask();
    let mut sign = Vec::with_capacity(n + relaxation.n_rows());
    let mut integer = Vec::with_capacity(n + relaxation.n_rows());
    for j in 0..n {
        let (l, u) = (base.var_lower[j], base.var_upper[j]);
        let (s, bound) = match solution.var_status[j] {
            BasisStatus::Basic => (Some(0.0), 0.0),
            _ if l == u => (Some(0.0), l),
            BasisStatus::AtLower => (Some(1.0), l),
            BasisStatus::AtUpper => (Some(-1.0), u),
            BasisStatus::NonbasicFree => (None, 0.0),
        };
        sign.push(s);
        integer.push(mask[j] && is_integral(bound));
    }
    for (i, row) in relaxation.rows().enumerate() {
        sign.push(Some(if solution.row_status[i] == BasisStatus::Basic {
            0.0
        } else {
            1.0
        }));
        let int_row =
            is_integral(row.rhs) && row.coeffs.iter().all(|&(j, a)| mask[j] && is_integral(a));
        integer.push(int_row);
    }
    Shift { sign, integer }
}

/// Maps `Σ γ_j x'_j ≥ γ₀` back to structural space as a `≤` row.
fn to_structural(
    gamma: &[f64],
    gamma0: f64,
    shift: &Shift,
    relaxation: &LpRelaxation,
) -> (Vec<f64>, f64) {
    let base = &relaxation.base;
    let n = relaxation.n_vars();
    let mut pi = vec![0.0; n];
    let mut rhs = gamma0;
    for (j, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let s = shift.sign[j].unwrap_or(0.0);
        if j < n {
            if s > 0.0 {
                pi[j] += g;
                rhs += g * base.var_lower[j];
            } else {
                pi[j] -= g;
                rhs -= g * base.var_upper[j];
            }
        } else {
            let row = relaxation.row(j - n);
            for &(k, a) in &row.coeffs {
                pi[k] -= g * a;
            }
            rhs -= g * row.rhs;
        }
    }
    // Σ π x ≥ rhs  ⇔  Σ (−π) x ≤ −rhs
    (pi.into_iter().map(|v| -v).collect(), -rhs)
}

/// Drops negligible coefficients, relaxing the rhs with the variable bounds
/// so the row stays valid. Returns `None` if a coefficient cannot be dropped
/// safely or nothing is left.
fn clean(pi: Vec<f64>, mut rhs: f64, relaxation: &LpRelaxation) -> Option<Row> {
    let base = &relaxation.base;
    let scale = pi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut coeffs = Vec::new();
    for (j, v) in pi.into_iter().enumerate() {
        if v.abs() > 1e-9 * scale {
            coeffs.push((j, v));
            continue;
        }
        if v == 0.0 {
            continue;
        }
        let bound = if v > 0.0 {
            base.var_lower[j]
        } else {
            base.var_upper[j]
        };
        if bound.abs() >= INF_BOUND {
            coeffs.push((j, v));
        } else {
            rhs -= v * bound;
        }
    }
    Row::le(coeffs, rhs).ok()
}

fn gomory_fractional(row: &TableauRow, shift: &Shift, f0: f64) -> Option<(Vec<f64>, f64)> {
    let mut gamma = vec![0.0; row.coeffs.len()];
    for (j, &a) in row.coeffs.iter().enumerate() {
        let s = shift.sign[j]?;
        let abar = a * s;
        if abar.abs() <= ZERO_TOL {
            continue;
        }
        if !shift.integer[j] {
            return None;
        }
        gamma[j] = frac(abar);
    }
    Some((gamma, f0))
}

fn gomory_mixed_integer(row: &TableauRow, shift: &Shift, f0: f64) -> Option<(Vec<f64>, f64)> {
    let mut gamma = vec![0.0; row.coeffs.len()];
    for (j, &a) in row.coeffs.iter().enumerate() {
        let s = shift.sign[j]?;
        let abar = a * s;
        if abar.abs() <= ZERO_TOL {
            continue;
        }
        gamma[j] = if shift.integer[j] {
            let fj = frac(abar);
            if fj <= f0 {
                fj / f0
            } else {
                (1.0 - fj) / (1.0 - f0)
            }
        } else if abar > 0.0 {
            abar / f0
        } else {
            -abar / (1.0 - f0)
        };
    }
    Some((gamma, 1.0))
}

fn dedup_key(row: &Row) -> Vec<i64> {
    let scale = row.max_abs();
    let q = |v: f64| (v / scale / 1e-9).round() as i64;
    let mut key: Vec<i64> = row
        .coeffs
        .iter()
        .flat_map(|&(j, v)| [j as i64, q(v)])
        .collect();
    key.push(q(row.rhs));
    key
}

/// Separates Gomory cuts with the default configuration.
pub fn separate(solution: &LpSolution, relaxation: &LpRelaxation) -> Result<CutPool, LpError> {
    separate_with(solution, relaxation, &SeparatorConfig::default())
}

/// Emits, for every fractional basic integer variable, a Gomory fractional
/// cut (when the row is pure integer) and a Gomory mixed-integer cut, both in
/// structural `≤` form. Cuts are filtered for violation and numerics, then
/// deduplicated and ordered by source variable and separator kind.
pub fn separate_with(
    solution: &LpSolution,
    relaxation: &LpRelaxation,
    config: &SeparatorConfig,
) -> Result<CutPool, LpError> {
    let base = &relaxation.base;
    let fractional: Vec<usize> = base
        .integrality
        .iter()
        .copied()
        .filter(|&j| {
            let v = solution.primal[j];
            (v - v.round()).abs() > INT_TOL
        })
        .collect();
    let mut pool = CutPool {
        cuts: Vec::new(),
        generated_at_round: relaxation.cuts.len() as u32,
    };
    if fractional.is_empty() {
        return Ok(pool);
    }
    let tableau = Tableau::new(solution, relaxation)?;
    let shift = shift_space(solution, relaxation);
    let ranks: Vec<u32> = relaxation.rows().map(|r| r.origin.rank()).collect();
    let mut seen = HashSet::new();

    for j in fractional {
        if !tableau.is_basic(j) {
            continue;
        }
        let trow = tableau.row(j)?;
        let f0 = frac(trow.value);
        if f0 <= INT_TOL || f0 >= 1.0 - INT_TOL {
            continue;
        }
        let rank = 1 + trow
            .multipliers
            .iter()
            .zip(&ranks)
            .filter(|(r, _)| r.abs() > 1e-12)
            .map(|(_, &k)| k)
            .max()
            .unwrap_or(0);
        let mut emitted = Vec::new();
        if config.gomory_fractional {
            if let Some(g) = gomory_fractional(&trow, &shift, f0) {
                emitted.push((SeparatorKind::GomoryFractional, g));
            }
        }
        if config.gomory_mixed_integer {
            if let Some(g) = gomory_mixed_integer(&trow, &shift, f0) {
                emitted.push((SeparatorKind::GomoryMixedInteger, g));
            }
        }
        for (kind, (gamma, gamma0)) in emitted {
            let (pi, rhs) = to_structural(&gamma, gamma0, &shift, relaxation);
            let Some(row) = clean(pi, rhs, relaxation) else {
                continue;
            };
            let max = row.max_abs();
            if max > config.max_coef || max / row.min_abs() > config.max_dynamism {
                continue;
            }
            if row.activity(&solution.primal) - row.rhs <= config.viol_tol {
                continue;
            }
            if !seen.insert(dedup_key(&row)) {
                continue;
            }
            let row = row.with_origin(RowOrigin::Cut {
                separator: kind,
                round: 0,
                rank,
            });
            pool.cuts.push(Cut {
                row,
                separator: kind,
                source_var: j,
                rank,
            });
        }
    }
    pool.cuts
        .sort_by_key(|a| (a.source_var, a.separator));
    Ok(pool)
}

/// `|aᵀb| / (‖a‖‖b‖)`, clamped to `[0, 1]`.
pub fn parallelism(a: &Row, b: &Row) -> Result<f64, SeparatorError> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(SeparatorError::ZeroRow);
    }
    Ok((a.dot(b).abs() / (na * nb)).clamp(0.0, 1.0))
}
