//! Linear programming: a bounded revised simplex with warm starts, tableau
//! extraction for separation, and a depth-first branch-and-bound oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::LpRelaxation;

mod bnb;
mod lu;
mod simplex;
mod tableau;

pub use bnb::{solve_milp_bnb, BnbError, MilpBound};
pub use lu::LuFactors;
pub use simplex::{Simplex, WarmBasis};
pub use tableau::{tableau_row, Tableau, TableauRow};

pub const FEAS_TOL: f64 = 1e-7;
pub const DUAL_TOL: f64 = 1e-7;
pub const PIVOT_TOL: f64 = 1e-9;
pub const INT_TOL: f64 = 1e-6;
/// Bounds at or beyond this magnitude are treated as infinite by the solver.
pub const INF_BOUND: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("numerical breakdown: no pivot above {pivot_tol}")]
    NumericalBreakdown { pivot_tol: f64 },
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("variable {0} is not basic")]
    NotBasic(usize),
    #[error("solution does not belong to this relaxation: {0}")]
    StaleSolution(String),
    #[error("solution status is {0:?}, expected Optimal")]
    NotOptimal(LpStatus),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
    NonbasicFree,
}

/// Result of an LP solve over `P = {x : Ax ≤ b, l ≤ x ≤ u}`.
///
/// Rows are written `Ax + s = b` with slacks `s ≥ 0`; `row_status` refers to
/// those slacks. Duals follow `y = c_Bᵀ B⁻¹`, so for a minimization they are
/// non-positive on binding `≤` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub slacks: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub var_status: Vec<BasisStatus>,
    pub row_status: Vec<BasisStatus>,
    pub iterations: usize,
    /// Farkas multipliers (infeasible) or a primal ray (unbounded).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn n_rows(&self) -> usize {
        self.slacks.len()
    }

    /// Dual objective `bᵀy + Σ d_j x_j` over nonbasic structural columns.
    pub fn dual_objective(&self, relaxation: &LpRelaxation) -> f64 {
        let rows: f64 = relaxation
            .rows()
            .zip(&self.duals)
            .map(|(r, y)| r.rhs * y)
            .sum();
        let bounds: f64 = self
            .var_status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != BasisStatus::Basic)
            .map(|(j, _)| self.reduced_costs[j] * self.primal[j])
            .sum();
        rows + bounds
    }

    /// Largest violation of a row or bound by the primal point.
    pub fn max_primal_violation(&self, relaxation: &LpRelaxation) -> f64 {
        let base = &relaxation.base;
        let mut worst: f64 = 0.0;
        for (row, _) in relaxation.rows().zip(&self.slacks) {
            worst = worst.max(row.activity(&self.primal) - row.rhs);
        }
        for (j, &x) in self.primal.iter().enumerate() {
            worst = worst.max(base.var_lower[j] - x).max(x - base.var_upper[j]);
        }
        worst
    }

    pub fn is_integral(&self, integer: &[usize]) -> bool {
        integer.iter().all(|&j| {
            let v = self.primal[j];
            (v - v.round()).abs() <= INT_TOL
        })
    }
}

/// Solves the relaxation from a cold slack basis.
pub fn solve_lp(relaxation: &LpRelaxation) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(relaxation);
    s.solve()?;
    Ok(s.solution())
}

impl LpRelaxation {
    /// Updates solve counters and row/column ages after an LP solve.
    pub fn record_solve(&mut self, solution: &LpSolution) {
        self.lp_solve_count += 1;
        if !solution.is_optimal() {
            return;
        }
        for (i, age) in self.row_age.iter_mut().enumerate() {
            if solution.slacks[i] > FEAS_TOL {
                *age += 1;
            } else {
                *age = 0;
            }
        }
        for (j, age) in self.col_age.iter_mut().enumerate() {
            if solution.primal[j].abs() <= FEAS_TOL {
                *age += 1;
            } else {
                *age = 0;
            }
        }
    }
}
