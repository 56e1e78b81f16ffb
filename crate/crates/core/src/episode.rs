//! The single-cut separation loop: rollouts, the stalling rule and expert
//! data collection.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LpError, LpSolution, LpStatus, Simplex};
use crate::milp::{normalize, LpRelaxation, MilpError, MilpInstance, Row};
use crate::scorers::{
    score_pool, select, DefaultWeights, ScoreContext, ScoreError, ScorerKind, INFEASIBLE_SENTINEL,
};
use crate::seed::{derive_seed, derive_seed_path, rng_from};
use crate::separators::{separate_with, CutPool, SeparatorConfig};

pub const SAMPLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("LP relaxation is unbounded")]
    UnboundedRelaxation,
    #[error("LP relaxation is infeasible")]
    InfeasibleRelaxation,
    #[error("no optimal value available for instance `{0}`")]
    OracleUnavailable(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    RoundLimit,
    EmptyPool,
    Stalled,
    IntegralLp,
}

/// Stop once the bound improved by less than `eps` in `k_rounds`
/// consecutive rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StallRule {
    pub eps: f64,
    pub k_rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub rounds: usize,
    pub seed: u64,
    pub stall: Option<StallRule>,
    pub separator: SeparatorConfig,
    pub infeasible_sentinel: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            rounds: 30,
            seed: 0,
            stall: None,
            separator: SeparatorConfig::default(),
            infeasible_sentinel: INFEASIBLE_SENTINEL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub chosen_index: usize,
    pub cut: Row,
    pub z: f64,
    pub igc: f64,
    pub pool_size: usize,
    pub scorer: String,
}

/// Bounds are in the normalized (minimization) sense.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance: String,
    pub scorer: String,
    pub z0: f64,
    pub z_opt: f64,
    pub records: Vec<RoundRecord>,
    pub terminal: Terminal,
}

impl Trajectory {
    pub fn n_cuts(&self) -> usize {
        self.records.len()
    }

    /// True when the initial gap is zero, so IGC is 1 by convention.
    pub fn trivial_gap(&self) -> bool {
        gap_is_zero(self.z0, self.z_opt)
    }

    pub fn final_igc(&self) -> f64 {
        match self.records.last() {
            Some(r) => r.igc,
            None => igc(self.z0, self.z0, self.z_opt),
        }
    }
}

fn gap_is_zero(z0: f64, z_opt: f64) -> bool {
    (z_opt - z0).abs() <= 1e-9 * z_opt.abs().max(1.0)
}

/// Fraction of the initial integrality gap closed, clamped to `[0, 1]`;
/// a zero initial gap counts as fully closed.
pub fn igc(z0: f64, zk: f64, z_opt: f64) -> f64 {
    if gap_is_zero(z0, z_opt) {
        return 1.0;
    }
    let raw = (zk - z0) / (z_opt - z0);
    if !(0.0..=1.0).contains(&raw) {
        log::debug!("IGC {raw:.3e} outside [0, 1], clamped");
    }
    raw.clamp(0.0, 1.0)
}

/// A solved relaxation plus its warm simplex workspace.
struct LpState {
    relax: LpRelaxation,
    simplex: Simplex,
    solution: LpSolution,
}

impl LpState {
    fn new(instance: &MilpInstance) -> Result<Self, EpisodeError> {
        let norm = if instance.is_normalized() {
            instance.clone()
        } else {
            normalize(instance)?
        };
        let relax = LpRelaxation::new(Arc::new(norm))?;
        let mut simplex = Simplex::new(&relax);
        let status = simplex.solve()?;
        Self::check(status)?;
        let solution = simplex.solution();
        let mut state = LpState {
            relax,
            simplex,
            solution,
        };
        state.relax.record_solve(&state.solution);
        Ok(state)
    }

    fn check(status: LpStatus) -> Result<(), EpisodeError> {
        match status {
            LpStatus::Optimal => Ok(()),
            LpStatus::Unbounded => Err(EpisodeError::UnboundedRelaxation),
            LpStatus::Infeasible => Err(EpisodeError::InfeasibleRelaxation),
        }
    }

    fn integral(&self) -> bool {
        self.solution.is_integral(&self.relax.base.integrality)
    }

    fn append(&mut self, cut: Row) -> Result<(), EpisodeError> {
        self.simplex.add_row(&cut);
        self.relax.push_cut(cut)?;
        let status = self.simplex.resolve()?;
        Self::check(status)?;
        self.simplex.refresh()?;
        self.solution = self.simplex.solution();
        self.relax.record_solve(&self.solution);
        Ok(())
    }

    fn z(&self) -> f64 {
        self.solution.objective
    }

    fn context(&self, rng_seed: u64, sentinel: f64) -> ScoreContext<'_> {
        let mut ctx =
            ScoreContext::new(&self.solution, &self.relax, rng_seed).with_warm(&self.simplex);
        ctx.infeasible_sentinel = sentinel;
        ctx
    }
}

fn round_seed(seed: u64, round: usize) -> u64 {
    derive_seed(seed, round as u64)
}

/// Runs the selection loop with one cut per round: solve, separate a fresh
/// pool, score, select, append. `z_opt` is the optimal value of the
/// normalized instance.
pub fn rollout(
    instance: &MilpInstance,
    z_opt: f64,
    kind: &ScorerKind,
    config: &RolloutConfig,
) -> Result<Trajectory, EpisodeError> {
    let mut state = LpState::new(instance)?;
    let z0 = state.z();
    let mut records = Vec::new();
    let mut stalled = 0usize;
    let mut terminal = Terminal::RoundLimit;
    for round in 1..=config.rounds {
        if state.integral() {
            terminal = Terminal::IntegralLp;
            break;
        }
        let pool = separate_with(&state.solution, &state.relax, &config.separator)?;
        if pool.is_empty() {
            terminal = Terminal::EmptyPool;
            break;
        }
        let seed = round_seed(config.seed, round);
        let ctx = state.context(derive_seed(seed, 0), config.infeasible_sentinel);
        let scores = score_pool(kind, &pool, &ctx)?;
        let chosen = select(&scores, &mut rng_from(derive_seed(seed, 1)))?;
        let cut = pool.cuts[chosen].row.clone();
        let before = state.z();
        state.append(cut.clone())?;
        let z = state.z();
        records.push(RoundRecord {
            round,
            chosen_index: chosen,
            cut,
            z,
            igc: igc(z0, z, z_opt),
            pool_size: pool.len(),
            scorer: kind.name(),
        });
        if let Some(rule) = config.stall {
            if (z - before).max(0.0) < rule.eps {
                stalled += 1;
            } else {
                stalled = 0;
            }
            if stalled >= rule.k_rounds {
                terminal = Terminal::Stalled;
                break;
            }
        }
    }
    if terminal == Terminal::RoundLimit && config.rounds > 0 && state.integral() {
        terminal = Terminal::IntegralLp;
    }
    Ok(Trajectory {
        instance: instance.name.clone(),
        scorer: kind.name(),
        z0,
        z_opt,
        records,
        terminal,
    })
}

/// Rollout with the stalling rule, capped at `round_cap` rounds.
pub fn rollout_stalling(
    instance: &MilpInstance,
    z_opt: f64,
    kind: &ScorerKind,
    eps: f64,
    k_rounds: usize,
    round_cap: usize,
    config: &RolloutConfig,
) -> Result<Trajectory, EpisodeError> {
    let mut cfg = config.clone();
    cfg.rounds = round_cap;
    cfg.stall = Some(StallRule { eps, k_rounds });
    rollout(instance, z_opt, kind, &cfg)
}

/// One imitation datum: a relaxation state, its fresh pool and the lookahead
/// score of every cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub schema_version: u32,
    pub instance_id: String,
    pub iteration: usize,
    pub collector: String,
    pub relaxation: LpRelaxation,
    pub solution: LpSolution,
    pub pool: CutPool,
    pub la_scores: Vec<f64>,
}

impl Sample {
    pub fn best_la(&self) -> f64 {
        self.la_scores.iter().copied().fold(0.0, f64::max)
    }

    /// All-zero lookahead scores make the imitation target undefined.
    pub fn is_degenerate(&self) -> bool {
        self.best_la() <= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub iters: usize,
    pub seed: u64,
    pub separator: SeparatorConfig,
    pub infeasible_sentinel: f64,
    pub default_weights: DefaultWeights,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            iters: 10,
            seed: 0,
            separator: SeparatorConfig::default(),
            infeasible_sentinel: INFEASIBLE_SENTINEL,
            default_weights: DefaultWeights::default(),
        }
    }
}

/// Collects up to `iters` samples from one instance; the scorer that
/// advances the state is drawn uniformly from {random, default, lookahead}
/// while lookahead scores are always recorded. `seed` should already be
/// specific to the instance.
pub fn collect_instance(
    instance: &MilpInstance,
    config: &CollectConfig,
    seed: u64,
) -> Result<Vec<Sample>, EpisodeError> {
    let mixture = [
        ScorerKind::Random,
        ScorerKind::DefaultScore(config.default_weights),
        ScorerKind::Lookahead,
    ];
    let mut state = LpState::new(instance)?;
    let mut samples = Vec::new();
    for iteration in 0..config.iters {
        if state.integral() {
            break;
        }
        let pool = separate_with(&state.solution, &state.relax, &config.separator)?;
        if pool.is_empty() {
            break;
        }
        let it_seed = derive_seed(seed, iteration as u64);
        let mut rng = rng_from(derive_seed(it_seed, 0));
        let kind = &mixture[rng.gen_range(0..mixture.len())];
        let ctx = state.context(derive_seed(it_seed, 1), config.infeasible_sentinel);
        let la = score_pool(&ScorerKind::Lookahead, &pool, &ctx)?;
        let scores = match kind {
            ScorerKind::Lookahead => la.clone(),
            k => score_pool(k, &pool, &ctx)?,
        };
        let chosen = select(&scores, &mut rng_from(derive_seed(it_seed, 2)))?;
        let cut = pool.cuts[chosen].row.clone();
        samples.push(Sample {
            schema_version: SAMPLE_SCHEMA_VERSION,
            instance_id: instance.name.clone(),
            iteration,
            collector: kind.name(),
            relaxation: state.relax.clone(),
            solution: state.solution.clone(),
            pool,
            la_scores: la,
        });
        state.append(cut)?;
    }
    Ok(samples)
}

/// Collects over many instances; failures are logged and skipped.
pub fn collect(instances: &[MilpInstance], config: &CollectConfig) -> Vec<Sample> {
    instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| {
            let seed = derive_seed_path(config.seed, &[crate::seed::stream::COLLECT, i as u64]);
            match collect_instance(inst, config, seed) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("collect: skipping {}: {e}", inst.name);
                    Vec::new()
                }
            }
        })
        .collect()
}

pub fn write_samples_jsonl<W: Write>(mut w: W, samples: &[Sample]) -> Result<(), EpisodeError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(r: R) -> Result<Vec<Sample>, EpisodeError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| EpisodeError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if s.schema_version != SAMPLE_SCHEMA_VERSION {
            return Err(EpisodeError::Parse {
                line: i + 1,
                reason: format!("sample schema version {}", s.schema_version),
            });
        }
        if s.la_scores.len() != s.pool.len() {
            return Err(EpisodeError::Parse {
                line: i + 1,
                reason: "la_scores length differs from pool size".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}

pub const TRAJECTORY_CSV_HEADER: &str = "instance,round,z,igc,pool_size,chosen_index,scorer";

pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    trajectories: &[Trajectory],
) -> Result<(), std::io::Error> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for t in trajectories {
        for r in &t.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                t.instance, r.round, r.z, r.igc, r.pool_size, r.chosen_index, r.scorer
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, Family, GenSpec};
    use crate::lp::{solve_lp, solve_milp_bnb};
    use crate::milp::Row;

    #[test]
    fn igc_examples() {
        assert_eq!(igc(0.0, 5.0, 10.0), 0.5);
        assert_eq!(igc(3.0, 3.0, 3.0), 1.0);
        assert_eq!(igc(0.0, 11.0, 10.0), 1.0);
        assert_eq!(igc(0.0, -1.0, 10.0), 0.0);
    }

    #[test]
    fn integral_lp_gives_empty_trajectory() {
        let mut inst = MilpInstance::new("tu", vec![-1.0, -1.0]);
        inst.rows
            .push(Row::le(vec![(0, 1.0), (1, 1.0)], 3.0).unwrap());
        inst.integrality = vec![0, 1];
        let t = rollout(
            &inst,
            -3.0,
            &ScorerKind::Efficacy,
            &RolloutConfig::default(),
        )
        .unwrap();
        assert_eq!(t.n_cuts(), 0);
        assert_eq!(t.terminal, Terminal::IntegralLp);
        assert_eq!(t.final_igc(), 1.0);
        assert!(t.trivial_gap());
    }

    /// First small binpacking instance with a nonzero integrality gap.
    fn small_instance() -> (MilpInstance, f64) {
        let mut spec = GenSpec::new(Family::BinPacking, 2, 64);
        spec.sizes.n = Some(12);
        spec.sizes.m = Some(8);
        generate(&spec)
            .into_iter()
            .map(|i| normalize(&i).unwrap())
            .find_map(|inst| {
                let z = solve_milp_bnb(&inst, 100_000).unwrap().z_opt;
                let relax = LpRelaxation::new(Arc::new(inst.clone())).unwrap();
                let z0 = solve_lp(&relax).unwrap().objective;
                (z - z0 > 0.5).then_some((inst, z))
            })
            .unwrap()
    }

    #[test]
    fn bounds_and_igc_are_monotone() {
        let (inst, z) = small_instance();
        for kind in [
            ScorerKind::Random,
            ScorerKind::Lookahead,
            ScorerKind::Efficacy,
        ] {
            let t = rollout(&inst, z, &kind, &RolloutConfig::default()).unwrap();
            let mut prev = (t.z0, 0.0);
            for r in &t.records {
                assert!(r.z >= prev.0 - 1e-9);
                assert!(r.igc >= prev.1 - 1e-9);
                assert!((0.0..=1.0).contains(&r.igc));
                prev = (r.z, r.igc);
            }
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let (inst, z) = small_instance();
        let cfg = RolloutConfig {
            seed: 4,
            ..RolloutConfig::default()
        };
        let a = rollout(&inst, z, &ScorerKind::Random, &cfg).unwrap();
        let b = rollout(&inst, z, &ScorerKind::Random, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stalling_limits() {
        let (inst, z) = small_instance();
        let cfg = RolloutConfig::default();
        let t =
            rollout_stalling(&inst, z, &ScorerKind::Efficacy, f64::INFINITY, 3, 30, &cfg).unwrap();
        if t.terminal == Terminal::Stalled {
            assert_eq!(t.n_cuts(), 3);
        }
        let full = rollout(&inst, z, &ScorerKind::Efficacy, &cfg).unwrap();
        let zero = rollout_stalling(&inst, z, &ScorerKind::Efficacy, 0.0, 3, 30, &cfg).unwrap();
        assert_eq!(full.records, zero.records);
    }

    #[test]
    fn collect_counts_and_round_trip() {
        let (inst, _) = small_instance();
        let cfg = CollectConfig {
            iters: 4,
            ..CollectConfig::default()
        };
        let samples = collect(std::slice::from_ref(&inst), &cfg);
        assert!(!samples.is_empty() && samples.len() <= 4);
        for s in &samples {
            assert_eq!(s.la_scores.len(), s.pool.len());
            assert!(s.la_scores.iter().all(|&v| v >= 0.0));
        }
        let mut buf = Vec::new();
        write_samples_jsonl(&mut buf, &samples).unwrap();
        let back = read_samples_jsonl(&buf[..]).unwrap();
        assert_eq!(back, samples);
    }
}
