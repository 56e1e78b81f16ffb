//! Simplex tableau rows recovered from an optimal basis via LU factors.

use super::{BasisStatus, LpError, LpSolution, LuFactors};
use crate::milp::LpRelaxation;

/// One row of `B⁻¹[A | I]` for a basic variable.
///
/// Columns `0..n` are structural, `n..n+m` slacks; basic columns hold zero.
/// The identity
/// `x_B + Σ_{j nonbasic} coeffs[j]·x_j = rhs` holds at every point of the
/// row system, in particular at the solution with `x_B = value`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableauRow {
    pub basic_var: usize,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub value: f64,
    /// Row multipliers `ρ = B⁻ᵀ e_k`; the row is `ρᵀ[A | I]`.
    pub multipliers: Vec<f64>,
}

/// Factorized optimal basis, reused for many tableau rows.
#[derive(Debug)]
pub struct Tableau<'a> {
    relaxation: &'a LpRelaxation,
    solution: &'a LpSolution,
    lu: LuFactors,
    /// Basis position of each variable, `None` when nonbasic.
    position: Vec<Option<usize>>,
}

impl<'a> Tableau<'a> {
    pub fn new(solution: &'a LpSolution, relaxation: &'a LpRelaxation) -> Result<Self, LpError> {
        let n = relaxation.n_vars();
        let m = relaxation.n_rows();
        if !solution.is_optimal() {
            return Err(LpError::NotOptimal(solution.status));
        }
        if solution.primal.len() != n
            || solution.slacks.len() != m
            || solution.var_status.len() != n
            || solution.row_status.len() != m
        {
            return Err(LpError::StaleSolution(format!(
                "solution has {} vars and {} rows, relaxation has {n} and {m}",
                solution.primal.len(),
                solution.slacks.len()
            )));
        }
        let statuses = solution.var_status.iter().chain(&solution.row_status);
        let basic: Vec<usize> = statuses
            .enumerate()
            .filter(|(_, s)| **s == BasisStatus::Basic)
            .map(|(j, _)| j)
            .collect();
        if basic.len() != m {
            return Err(LpError::StaleSolution(format!(
                "{} basic variables for {m} rows",
                basic.len()
            )));
        }
        let mut dense = vec![0.0; m * m];
        let mut position = vec![None; n + m];
        for (k, &v) in basic.iter().enumerate() {
            position[v] = Some(k);
            if v >= n {
                dense[(v - n) * m + k] = 1.0;
            }
        }
        for (i, row) in relaxation.rows().enumerate() {
            for &(j, a) in &row.coeffs {
                if let Some(k) = position[j] {
                    dense[i * m + k] = a;
                }
            }
        }
        let lu = LuFactors::factorize(m, dense)?;
        Ok(Tableau {
            relaxation,
            solution,
            lu,
            position,
        })
    }

    pub fn is_basic(&self, var: usize) -> bool {
        self.position.get(var).is_some_and(|p| p.is_some())
    }

    /// Structural variables that are basic, in index order.
    pub fn basic_structurals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.relaxation.n_vars()).filter(|&j| self.position[j].is_some())
    }

    pub fn row(&self, var: usize) -> Result<TableauRow, LpError> {
        let n = self.relaxation.n_vars();
        let m = self.relaxation.n_rows();
        let k = self
            .position
            .get(var)
            .copied()
            .flatten()
            .ok_or(LpError::NotBasic(var))?;
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        let rho = self.lu.solve_transpose(&e);
        let mut coeffs = vec![0.0; n + m];
        let mut rhs = 0.0;
        for (i, row) in self.relaxation.rows().enumerate() {
            let r = rho[i];
            if r == 0.0 {
                continue;
            }
            for &(j, a) in &row.coeffs {
                coeffs[j] += r * a;
            }
            coeffs[n + i] = r;
            rhs += r * row.rhs;
        }
        for (j, c) in coeffs.iter_mut().enumerate() {
            if self.position[j].is_some() {
                *c = 0.0;
            }
        }
        let value = if var < n {
            self.solution.primal[var]
        } else {
            self.solution.slacks[var - n]
        };
        Ok(TableauRow {
            basic_var: var,
            coeffs,
            rhs,
            value,
            multipliers: rho,
        })
    }
}

/// Tableau row of `basic_var` (structural index, or `n + i` for the slack of row `i`).
pub fn tableau_row(
    solution: &LpSolution,
    relaxation: &LpRelaxation,
    basic_var: usize,
) -> Result<TableauRow, LpError> {
    Tableau::new(solution, relaxation)?.row(basic_var)
}

impl TableauRow {
    /// `value + Σ coeffs[j]·x_j − rhs` over the given full point (structurals then slacks).
    pub fn residual(&self, point: &[f64]) -> f64 {
        let s: f64 = self.coeffs.iter().zip(point).map(|(a, x)| a * x).sum();
        self.value + s - self.rhs
    }
}
