//! Cut scoring: heuristic baselines, the weighted default score, the
//! one-step lookahead expert and learned policies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LpError, LpSolution, LpStatus, Simplex};
use crate::milp::{LpRelaxation, Row};
use crate::seed::rng_from;
use crate::separators::{Cut, CutPool};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("cut has zero norm")]
    ZeroNormCut,
    #[error("cut pool is empty")]
    EmptyPool,
    #[error("{0} scores for {1} cuts")]
    LengthMismatch(usize, usize),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("unknown scorer `{0}`")]
    UnknownScorer(String),
    #[error("relaxation is not solved to optimality")]
    NotOptimal,
    #[error("policy failed: {0}")]
    Policy(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A learned scorer plugged in from outside the core crate.
pub trait CutPolicy: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn score(
        &self,
        pool: &CutPool,
        relaxation: &LpRelaxation,
        lp: &LpSolution,
    ) -> Result<Vec<f64>, ScoreError>;
}

/// Weights of the default score over efficacy, objective parallelism and
/// integer support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefaultWeights {
    pub efficacy: f64,
    pub obj_parallelism: f64,
    pub int_support: f64,
}

impl Default for DefaultWeights {
    fn default() -> Self {
        DefaultWeights {
            efficacy: 1.0,
            obj_parallelism: 0.1,
            int_support: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScorerKind {
    Random,
    Violation,
    RelViolation,
    Efficacy,
    ObjParallelism,
    ExpImprovement,
    Support,
    IntSupport,
    DefaultScore(DefaultWeights),
    Lookahead,
    Policy(Arc<dyn CutPolicy>),
}

impl ScorerKind {
    /// Every built-in scorer, in report order.
    pub fn builtins() -> Vec<ScorerKind> {
        vec![
            ScorerKind::Random,
            ScorerKind::Violation,
            ScorerKind::RelViolation,
            ScorerKind::Efficacy,
            ScorerKind::ObjParallelism,
            ScorerKind::ExpImprovement,
            ScorerKind::Support,
            ScorerKind::IntSupport,
            ScorerKind::DefaultScore(DefaultWeights::default()),
            ScorerKind::Lookahead,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            ScorerKind::Random => "random".into(),
            ScorerKind::Violation => "violation".into(),
            ScorerKind::RelViolation => "relviolation".into(),
            ScorerKind::Efficacy => "efficacy".into(),
            ScorerKind::ObjParallelism => "objparallelism".into(),
            ScorerKind::ExpImprovement => "expimprovement".into(),
            ScorerKind::Support => "support".into(),
            ScorerKind::IntSupport => "intsupport".into(),
            ScorerKind::DefaultScore(_) => "default".into(),
            ScorerKind::Lookahead => "lookahead".into(),
            ScorerKind::Policy(p) => p.name(),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A parsed scorer name; `policy:<path>` is resolved by the caller.
#[derive(Clone, Debug)]
pub enum ScorerName {
    Builtin(ScorerKind),
    Policy(String),
}

impl FromStr for ScorerName {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        let kind = match s.trim().to_ascii_lowercase().as_str() {
            "random" => ScorerKind::Random,
            "violation" => ScorerKind::Violation,
            "relviolation" => ScorerKind::RelViolation,
            "efficacy" => ScorerKind::Efficacy,
            "objparallelism" => ScorerKind::ObjParallelism,
            "expimprovement" => ScorerKind::ExpImprovement,
            "support" => ScorerKind::Support,
            "intsupport" => ScorerKind::IntSupport,
            "default" => ScorerKind::DefaultScore(DefaultWeights::default()),
            "lookahead" => ScorerKind::Lookahead,
            _ => {
                return match s.trim().strip_prefix("policy:") {
                    Some(path) if !path.is_empty() => Ok(ScorerName::Policy(path.to_string())),
                    _ => Err(ScoreError::UnknownScorer(s.to_string())),
                }
            }
        };
        Ok(ScorerName::Builtin(kind))
    }
}

/// Score returned for a cut whose addition makes the relaxation infeasible.
pub const INFEASIBLE_SENTINEL: f64 = 1e12;

pub struct ScoreContext<'a> {
    pub lp: &'a LpSolution,
    pub relaxation: &'a LpRelaxation,
    /// Simplex workspace holding the optimal basis of `relaxation`; lookahead
    /// scoring solves cold once when absent.
    pub warm: Option<&'a Simplex>,
    pub rng_seed: u64,
    pub infeasible_sentinel: f64,
}

impl<'a> ScoreContext<'a> {
    pub fn new(lp: &'a LpSolution, relaxation: &'a LpRelaxation, rng_seed: u64) -> Self {
        ScoreContext {
            lp,
            relaxation,
            warm: None,
            rng_seed,
            infeasible_sentinel: INFEASIBLE_SENTINEL,
        }
    }

    pub fn with_warm(mut self, warm: &'a Simplex) -> Self {
        self.warm = Some(warm);
        self
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn violation(row: &Row, x: &[f64]) -> f64 {
    row.activity(x) - row.rhs
}

pub fn rel_violation(row: &Row, x: &[f64]) -> f64 {
    let lhs = row.activity(x);
    let denom = row.rhs.abs().min(lhs.abs()).max(1e-9);
    (lhs - row.rhs) / denom
}

pub fn efficacy(row: &Row, x: &[f64]) -> Result<f64, ScoreError> {
    let n = row.norm();
    if n == 0.0 {
        return Err(ScoreError::ZeroNormCut);
    }
    Ok(violation(row, x) / n)
}

/// `|πᵀc| / (‖π‖‖c‖)`, zero for a zero objective.
pub fn obj_parallelism(row: &Row, c: &[f64]) -> Result<f64, ScoreError> {
    let n = row.norm();
    if n == 0.0 {
        return Err(ScoreError::ZeroNormCut);
    }
    let nc = norm(c);
    if nc == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = row.coeffs.iter().map(|&(j, v)| v * c[j]).sum();
    Ok(dot.abs() / (n * nc))
}

pub fn exp_improvement(row: &Row, x: &[f64], c: &[f64]) -> Result<f64, ScoreError> {
    let nc2: f64 = c.iter().map(|v| v * v).sum();
    Ok(nc2 * obj_parallelism(row, c)? * efficacy(row, x)?)
}

pub fn support(row: &Row, n_vars: usize) -> f64 {
    -(row.nnz() as f64) / n_vars as f64
}

pub fn int_support(row: &Row, integer_mask: &[bool]) -> f64 {
    if row.nnz() == 0 {
        return 0.0;
    }
    let ints = row.coeffs.iter().filter(|&&(j, _)| integer_mask[j]).count();
    ints as f64 / row.nnz() as f64
}

pub fn default_score(
    row: &Row,
    x: &[f64],
    c: &[f64],
    integer_mask: &[bool],
    w: &DefaultWeights,
) -> Result<f64, ScoreError> {
    Ok(w.efficacy * efficacy(row, x)?
        + w.obj_parallelism * obj_parallelism(row, c)?
        + w.int_support * int_support(row, integer_mask))
}

/// `max(z^j − z, 0)` where `z^j` is the bound after adding `cut` to the
/// relaxation whose optimal basis `warm` holds.
pub fn lookahead_score(cut: &Cut, warm: &Simplex, sentinel: f64) -> Result<f64, LpError> {
    let z = warm.objective();
    let mut lp = warm.clone();
    lp.add_row(&cut.row);
    match lp.resolve()? {
        LpStatus::Optimal => Ok((lp.objective() - z).max(0.0)),
        LpStatus::Infeasible => Ok(sentinel),
        LpStatus::Unbounded => Ok(0.0),
    }
}

fn lookahead_pool(pool: &CutPool, ctx: &ScoreContext) -> Result<Vec<f64>, ScoreError> {
    let owned;
    let warm = match ctx.warm {
        Some(w) => w,
        None => {
            let mut s = Simplex::new(ctx.relaxation);
            if s.solve()? != LpStatus::Optimal {
                return Err(ScoreError::NotOptimal);
            }
            owned = s;
            &owned
        }
    };
    pool.cuts
        .iter()
        .map(|c| Ok(lookahead_score(c, warm, ctx.infeasible_sentinel)?))
        .collect()
}

/// One finite score per cut of the pool.
pub fn score_pool(
    kind: &ScorerKind,
    pool: &CutPool,
    ctx: &ScoreContext,
) -> Result<Vec<f64>, ScoreError> {
    if !ctx.lp.is_optimal() {
        return Err(ScoreError::NotOptimal);
    }
    let x = &ctx.lp.primal;
    let base = &ctx.relaxation.base;
    let c = &base.objective;
    let mask = base.integer_mask();
    let per_cut = |f: &dyn Fn(&Row) -> Result<f64, ScoreError>| -> Result<Vec<f64>, ScoreError> {
        pool.cuts.iter().map(|cut| f(&cut.row)).collect()
    };
    let scores = match kind {
        ScorerKind::Random => {
            let mut rng = rng_from(ctx.rng_seed);
            pool.cuts.iter().map(|_| rng.gen::<f64>()).collect()
        }
        ScorerKind::Violation => per_cut(&|r| Ok(violation(r, x)))?,
        ScorerKind::RelViolation => per_cut(&|r| Ok(rel_violation(r, x)))?,
        ScorerKind::Efficacy => per_cut(&|r| efficacy(r, x))?,
        ScorerKind::ObjParallelism => per_cut(&|r| obj_parallelism(r, c))?,
        ScorerKind::ExpImprovement => per_cut(&|r| exp_improvement(r, x, c))?,
        ScorerKind::Support => per_cut(&|r| Ok(support(r, base.n_vars())))?,
        ScorerKind::IntSupport => per_cut(&|r| Ok(int_support(r, &mask)))?,
        ScorerKind::DefaultScore(w) => per_cut(&|r| default_score(r, x, c, &mask, w))?,
        ScorerKind::Lookahead => lookahead_pool(pool, ctx)?,
        ScorerKind::Policy(p) => p.score(pool, ctx.relaxation, ctx.lp)?,
    };
    if scores.len() != pool.len() {
        return Err(ScoreError::LengthMismatch(scores.len(), pool.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoreError::NonFinite(i));
    }
    Ok(scores)
}

pub const TIE_TOL: f64 = 1e-9;

/// Index of the best score; ties within `TIE_TOL` of the maximum are broken
/// uniformly with `rng`, which is only consumed when there is a tie.
pub fn select<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Result<usize, ScoreError> {
    if scores.is_empty() {
        return Err(ScoreError::EmptyPool);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoreError::NonFinite(i));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= max - TIE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    })
}
