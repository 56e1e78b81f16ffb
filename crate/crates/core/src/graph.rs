//! Tripartite state encoding: variables, constraints (rows of the current
//! relaxation) and pool cuts, with coefficient edges and parallelism weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{BasisStatus, LpSolution, FEAS_TOL, INF_BOUND, INT_TOL};
use crate::milp::{LpRelaxation, Row, RowOrigin, SeparatorKind};
use crate::scorers::{self, DefaultWeights};
use crate::separators::{parallelism, CutPool};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const VAR_FEATURES: usize = 17;
pub const ROW_FEATURES: usize = 27;
pub const FEATURE_CLIP: f64 = 10.0;

pub const VAR_FEATURE_NAMES: [&str; VAR_FEATURES] = [
    "norm_coef",
    "type_binary",
    "type_integer",
    "type_impl_integer",
    "type_continuous",
    "has_lb",
    "has_ub",
    "norm_redcost",
    "solval",
    "solfrac",
    "sol_is_at_lb",
    "sol_is_at_ub",
    "norm_age",
    "basestat_lower",
    "basestat_basic",
    "basestat_upper",
    "basestat_zero",
];

pub const ROW_FEATURE_NAMES: [&str; ROW_FEATURES] = [
    "is_cut",
    "type_original",
    "type_gomory_fractional",
    "type_gomory_mixed_integer",
    "rank",
    "norm_nnzrs",
    "bias",
    "row_is_at_lhs",
    "row_is_at_rhs",
    "dualsol",
    "basestat_lower",
    "basestat_basic",
    "basestat_upper",
    "basestat_zero",
    "norm_age",
    "norm_nlp_creation",
    "norm_intcols",
    "is_integral",
    "is_removable",
    "is_in_lp",
    "violation",
    "rel_violation",
    "obj_par",
    "exp_improv",
    "supp_score",
    "int_support",
    "default_score",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("solution does not match the relaxation ({0})")]
    StaleSolution(String),
    #[error("relaxation is not solved to optimality")]
    NotOptimal,
    #[error("cut pool is empty")]
    EmptyPool,
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn push_row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.cols);
        self.data.extend_from_slice(values);
        self.rows += 1;
    }
}

/// Variable–row edge carrying the row coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefEdge {
    pub var: usize,
    pub row: usize,
    pub coef: f64,
}

/// Constraint–cut edge weighted by the parallelism of the two rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParEdge {
    pub cons: usize,
    pub cut: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripartiteGraph {
    pub feature_schema_version: u32,
    /// Constraints folded out (cuts only).
    pub bipartite: bool,
    pub var_feats: FeatureMatrix,
    pub cons_feats: FeatureMatrix,
    pub cut_feats: FeatureMatrix,
    pub var_cons_edges: Vec<CoefEdge>,
    pub var_cut_edges: Vec<CoefEdge>,
    pub cons_cut_edges: Vec<ParEdge>,
    /// `|C| × |C|` pairwise parallelism of the pool cuts (unit diagonal).
    pub cut_cut_weights: FeatureMatrix,
    /// Number of feature values clipped to `±FEATURE_CLIP`.
    pub clipped: usize,
}

impl TripartiteGraph {
    pub fn n_vars(&self) -> usize {
        self.var_feats.rows
    }

    pub fn n_cons(&self) -> usize {
        self.cons_feats.rows
    }

    pub fn n_cuts(&self) -> usize {
        self.cut_feats.rows
    }
}

fn one_hot<const N: usize>(k: usize) -> [f64; N] {
    let mut v = [0.0; N];
    v[k] = 1.0;
    v
}

fn basestat(s: BasisStatus) -> [f64; 4] {
    match s {
        BasisStatus::AtLower => one_hot(0),
        BasisStatus::Basic => one_hot(1),
        BasisStatus::AtUpper => one_hot(2),
        BasisStatus::NonbasicFree => one_hot(3),
    }
}

/// Basis status of a `≤` row read off its slack: a slack at its lower bound
/// (zero) means the row sits at its right-hand side.
fn row_basestat(slack: BasisStatus) -> [f64; 4] {
    match slack {
        BasisStatus::AtLower => one_hot(2),
        BasisStatus::Basic => one_hot(1),
        BasisStatus::AtUpper => one_hot(0),
        BasisStatus::NonbasicFree => one_hot(3),
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= FEAS_TOL * (1.0 + b.abs())
}

fn finite(v: f64) -> bool {
    v.is_finite() && v.abs() < INF_BOUND
}

struct Context<'a> {
    relax: &'a LpRelaxation,
    sol: &'a LpSolution,
    mask: Vec<bool>,
    c_norm: f64,
    n_lp: f64,
    weights: DefaultWeights,
}

/// Row state that only constraints of the current LP have.
struct InLp {
    dual: f64,
    slack_status: BasisStatus,
    age: u32,
    created: u32,
}

impl Context<'_> {
    fn var_features(&self, j: usize) -> [f64; VAR_FEATURES] {
        let base = &self.relax.base;
        let (l, u) = (base.var_lower[j], base.var_upper[j]);
        let x = self.sol.primal[j];
        let ty = if !self.mask[j] {
            3
        } else if l >= 0.0 && u <= 1.0 {
            0
        } else {
            1
        };
        let frac = if self.mask[j] {
            let f = x - x.floor();
            if f <= INT_TOL || f >= 1.0 - INT_TOL {
                0.0
            } else {
                f
            }
        } else {
            0.0
        };
        let mut out = [0.0; VAR_FEATURES];
        out[0] = base.objective[j] / self.c_norm;
        out[1..5].copy_from_slice(&one_hot::<4>(ty));
        out[5] = finite(l) as u8 as f64;
        out[6] = finite(u) as u8 as f64;
        out[7] = self.sol.reduced_costs[j] / self.c_norm;
        out[8] = x;
        out[9] = frac;
        out[10] = (finite(l) && near(x, l)) as u8 as f64;
        out[11] = (finite(u) && near(x, u)) as u8 as f64;
        out[12] = self.relax.col_age[j] as f64 / self.n_lp;
        out[13..17].copy_from_slice(&basestat(self.sol.var_status[j]));
        out
    }

    fn row_features(&self, row: &Row, lp: Option<InLp>) -> [f64; ROW_FEATURES] {
        let base = &self.relax.base;
        let x = &self.sol.primal;
        let c = &base.objective;
        let norm = row.norm();
        let mut out = [0.0; ROW_FEATURES];
        let (is_cut, ty) = match row.origin {
            RowOrigin::Original => (false, 0),
            RowOrigin::Cut {
                separator: SeparatorKind::GomoryFractional,
                ..
            } => (true, 1),
            RowOrigin::Cut {
                separator: SeparatorKind::GomoryMixedInteger,
                ..
            } => (true, 2),
        };
        let act = row.activity(x);
        let ints = row.coeffs.iter().filter(|&&(j, _)| self.mask[j]).count();
        out[0] = is_cut as u8 as f64;
        out[1..4].copy_from_slice(&one_hot::<3>(ty));
        out[4] = row.origin.rank() as f64;
        out[5] = row.nnz() as f64 / base.n_vars() as f64;
        out[6] = if norm > 0.0 { row.rhs / norm } else { 0.0 };
        out[7] = 0.0;
        out[8] = near(act, row.rhs) as u8 as f64;
        match &lp {
            Some(s) => {
                out[9] = if norm > 0.0 {
                    s.dual / (norm * self.c_norm)
                } else {
                    0.0
                };
                out[10..14].copy_from_slice(&row_basestat(s.slack_status));
                out[14] = s.age as f64 / self.n_lp;
                out[15] = (self.relax.lp_solve_count.saturating_sub(s.created)) as f64 / self.n_lp;
            }
            None => {
                out[10..14].copy_from_slice(&one_hot::<4>(1));
            }
        }
        out[16] = if row.nnz() > 0 {
            ints as f64 / row.nnz() as f64
        } else {
            0.0
        };
        out[17] =
            (ints == row.nnz() && row.coeffs.iter().all(|&(_, v)| v == v.round())) as u8 as f64;
        out[18] = is_cut as u8 as f64;
        out[19] = lp.is_some() as u8 as f64;
        out[20] = scorers::violation(row, x);
        out[21] = scorers::rel_violation(row, x);
        if norm > 0.0 {
            let c2 = self.c_norm * self.c_norm;
            out[22] = scorers::obj_parallelism(row, c).unwrap_or(0.0);
            out[23] = scorers::exp_improvement(row, x, c).unwrap_or(0.0) / c2;
            out[26] = scorers::default_score(row, x, c, &self.mask, &self.weights).unwrap_or(0.0);
        }
        out[24] = scorers::support(row, base.n_vars());
        out[25] = scorers::int_support(row, &self.mask);
        out
    }
}

fn clip(m: &mut FeatureMatrix) -> usize {
    let mut count = 0;
    for v in &mut m.data {
        if !v.is_finite() {
            *v = 0.0;
            count += 1;
        } else if v.abs() > FEATURE_CLIP {
            *v = v.clamp(-FEATURE_CLIP, FEATURE_CLIP);
            count += 1;
        }
    }
    count
}

fn coef_edges<'a>(rows: impl Iterator<Item = &'a Row>) -> Vec<CoefEdge> {
    rows.enumerate()
        .flat_map(|(i, r)| {
            r.coeffs.iter().map(move |&(j, v)| CoefEdge {
                var: j,
                row: i,
                coef: v,
            })
        })
        .collect()
}

fn check(pool: &CutPool, relax: &LpRelaxation, sol: &LpSolution) -> Result<(), GraphError> {
    if !sol.is_optimal() {
        return Err(GraphError::NotOptimal);
    }
    if pool.is_empty() {
        return Err(GraphError::EmptyPool);
    }
    let (n, m) = (relax.n_vars(), relax.n_rows());
    if sol.primal.len() != n || sol.reduced_costs.len() != n || sol.var_status.len() != n {
        return Err(GraphError::StaleSolution(format!(
            "{} columns in the solution, {n} in the relaxation",
            sol.primal.len()
        )));
    }
    if sol.slacks.len() != m || sol.duals.len() != m || sol.row_status.len() != m {
        return Err(GraphError::StaleSolution(format!(
            "{} rows in the solution, {m} in the relaxation",
            sol.slacks.len()
        )));
    }
    Ok(())
}

fn build(
    pool: &CutPool,
    relax: &LpRelaxation,
    sol: &LpSolution,
    bipartite: bool,
) -> Result<TripartiteGraph, GraphError> {
    check(pool, relax, sol)?;
    let base = &relax.base;
    let c_norm = base.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ctx = Context {
        relax,
        sol,
        mask: base.integer_mask(),
        c_norm: if c_norm > 0.0 { c_norm } else { 1.0 },
        n_lp: relax.lp_solve_count.max(1) as f64,
        weights: DefaultWeights::default(),
    };

    let mut var_feats = FeatureMatrix::zeros(0, VAR_FEATURES);
    for j in 0..base.n_vars() {
        var_feats.push_row(&ctx.var_features(j));
    }
    let mut cons_feats = FeatureMatrix::zeros(0, ROW_FEATURES);
    let mut var_cons_edges = Vec::new();
    let mut cons_cut_edges = Vec::new();
    if !bipartite {
        for (i, row) in relax.rows().enumerate() {
            let lp = InLp {
                dual: sol.duals[i],
                slack_status: sol.row_status[i],
                age: relax.row_age[i],
                created: relax.row_created[i],
            };
            cons_feats.push_row(&ctx.row_features(row, Some(lp)));
        }
        var_cons_edges = coef_edges(relax.rows());
        for (i, row) in relax.rows().enumerate() {
            for (k, cut) in pool.cuts.iter().enumerate() {
                cons_cut_edges.push(ParEdge {
                    cons: i,
                    cut: k,
                    weight: parallelism(row, &cut.row).unwrap_or(0.0),
                });
            }
        }
    }
    let mut cut_feats = FeatureMatrix::zeros(0, ROW_FEATURES);
    for cut in &pool.cuts {
        cut_feats.push_row(&ctx.row_features(&cut.row, None));
    }
    let var_cut_edges = coef_edges(pool.cuts.iter().map(|c| &c.row));
    let k = pool.len();
    let mut cut_cut_weights = FeatureMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let w = if a == b {
                1.0
            } else {
                parallelism(&pool.cuts[a].row, &pool.cuts[b].row).unwrap_or(0.0)
            };
            cut_cut_weights.data[a * k + b] = w;
            cut_cut_weights.data[b * k + a] = w;
        }
    }

    let clipped = clip(&mut var_feats) + clip(&mut cons_feats) + clip(&mut cut_feats);
    if clipped > 0 {
        log::debug!("graph encoding clipped {clipped} feature values");
    }
    Ok(TripartiteGraph {
        feature_schema_version: FEATURE_SCHEMA_VERSION,
        bipartite,
        var_feats,
        cons_feats,
        cut_feats,
        var_cons_edges,
        var_cut_edges,
        cons_cut_edges,
        cut_cut_weights,
        clipped,
    })
}

/// Encodes the selection state `(pool, relaxation, solution)`.
pub fn encode(
    pool: &CutPool,
    relaxation: &LpRelaxation,
    solution: &LpSolution,
) -> Result<TripartiteGraph, GraphError> {
    build(pool, relaxation, solution, false)
}

/// Variables and cuts only; used by the bipartite ablation.
pub fn encode_bipartite(
    pool: &CutPool,
    relaxation: &LpRelaxation,
    solution: &LpSolution,
) -> Result<TripartiteGraph, GraphError> {
    build(pool, relaxation, solution, true)
}
