//! Offline bound fulfillment, online reversed IGC integral and the
//! per-scorer comparison report.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{rollout, RolloutConfig, Sample, Trajectory};
use crate::milp::MilpInstance;
use crate::scorers::{score_pool, select, ScoreContext, ScorerKind, TIE_TOL};
use crate::seed::{derive_seed_path, rng_from, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("all lookahead scores are zero")]
    DegenerateSample,
    #[error("chosen index {0} outside a pool of {1}")]
    BadIndex(usize, usize),
    #[error("trajectory of `{0}` has no finite optimal value")]
    MissingOptimum(String),
}

/// `la[chosen] / max(la)`. A choice within the selection tie tolerance of
/// the best score counts as the best.
pub fn bound_fulfillment(sample: &Sample, chosen: usize) -> Result<f64, MetricError> {
    let la = &sample.la_scores;
    if chosen >= la.len() {
        return Err(MetricError::BadIndex(chosen, la.len()));
    }
    let best = sample.best_la();
    if best <= 0.0 {
        return Err(MetricError::DegenerateSample);
    }
    if la[chosen] >= best - TIE_TOL {
        return Ok(1.0);
    }
    Ok((la[chosen] / best).clamp(0.0, 1.0))
}

/// IGC after each of rounds `1..=rounds`, holding the last value once the
/// trajectory stops.
pub fn igc_curve(traj: &Trajectory, rounds: usize) -> Result<Vec<f64>, MetricError> {
    if !traj.z_opt.is_finite() {
        return Err(MetricError::MissingOptimum(traj.instance.clone()));
    }
    let mut last = traj.final_igc();
    Ok((1..=rounds)
        .map(|k| {
            if let Some(r) = traj.records.get(k - 1) {
                last = r.igc;
            }
            last
        })
        .collect())
}

/// `Σ_{k=1..rounds} (1 − IGC^k)`.
pub fn reversed_igc_integral(traj: &Trajectory, rounds: usize) -> Result<f64, MetricError> {
    Ok(igc_curve(traj, rounds)?.iter().map(|g| 1.0 - g).sum())
}

/// Mean and standard error of the mean (zero for fewer than two values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ste: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ste = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, ste, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub rounds: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    #[serde(default)]
    pub rollout: Option<RolloutConfig>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            rounds: 30,
            seed: 0,
            jobs: 1,
            rollout: None,
        }
    }
}

/// An instance together with its normalized optimal value.
#[derive(Clone, Debug)]
pub struct EvalInstance {
    pub instance: MilpInstance,
    pub z_opt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerReport {
    pub scorer: String,
    pub bound_fulfillment: Option<Stat>,
    /// Samples skipped because every lookahead score is zero.
    pub degenerate_excluded: usize,
    pub reversed_igc: Option<Stat>,
    /// Per-instance integrals, in instance order (NaN where the rollout failed).
    pub per_instance: Vec<f64>,
    /// Mean IGC after rounds `1..=rounds`.
    pub igc_curve: Vec<f64>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rounds: usize,
    pub seed: u64,
    pub n_instances: usize,
    pub n_samples: usize,
    pub scorers: Vec<ScorerReport>,
}

impl EvalReport {
    pub fn get(&self, scorer: &str) -> Option<&ScorerReport> {
        self.scorers.iter().find(|s| s.scorer == scorer)
    }
}

/// Chosen index of `kind` on a recorded sample. Lookahead reuses the
/// recorded scores, which are its scores on that state.
pub fn choose_on_sample(kind: &ScorerKind, sample: &Sample, seed: u64) -> Result<usize, String> {
    let scores = match kind {
        ScorerKind::Lookahead => sample.la_scores.clone(),
        k => {
            let ctx = ScoreContext::new(
                &sample.solution,
                &sample.relaxation,
                derive_seed_path(seed, &[0]),
            );
            score_pool(k, &sample.pool, &ctx).map_err(|e| e.to_string())?
        }
    };
    select(&scores, &mut rng_from(derive_seed_path(seed, &[1]))).map_err(|e| e.to_string())
}

enum Job {
    Offline(usize, usize),
    Online(usize, usize),
}

enum Outcome {
    Bf(Result<f64, String>),
    Traj(Result<Trajectory, String>),
}

fn run_job(
    job: &Job,
    scorers: &[ScorerKind],
    instances: &[EvalInstance],
    samples: &[Sample],
    config: &CompareConfig,
) -> Outcome {
    match *job {
        Job::Offline(k, i) => {
            let s = &samples[i];
            let seed = derive_seed_path(config.seed, &[stream::EVAL, 0, i as u64]);
            Outcome::Bf(
                choose_on_sample(&scorers[k], s, seed)
                    .and_then(|c| bound_fulfillment(s, c).map_err(|e| e.to_string())),
            )
        }
        Job::Online(k, i) => {
            let inst = &instances[i];
            let mut rc = config.rollout.clone().unwrap_or_default();
            rc.rounds = config.rounds;
            rc.seed = derive_seed_path(config.seed, &[stream::EVAL, 1, i as u64]);
            Outcome::Traj(
                rollout(&inst.instance, inst.z_opt, &scorers[k], &rc).map_err(|e| e.to_string()),
            )
        }
    }
}

/// Offline bound fulfillment over `samples` and online reversed IGC
/// integral over rollouts on `instances`, for every scorer. Each instance
/// uses the same rollout seed for every scorer, so results pair by instance.
pub fn compare(
    scorers: &[ScorerKind],
    instances: &[EvalInstance],
    samples: &[Sample],
    config: &CompareConfig,
) -> EvalReport {
    let mut jobs = Vec::new();
    for k in 0..scorers.len() {
        jobs.extend((0..samples.len()).map(|i| Job::Offline(k, i)));
        jobs.extend((0..instances.len()).map(|i| Job::Online(k, i)));
    }
    let run = |j: &Job| run_job(j, scorers, instances, samples, config);
    let outcomes: Vec<Outcome> = if config.jobs > 1 {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
        {
            Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}), running sequentially");
                jobs.iter().map(run).collect()
            }
        }
    } else {
        jobs.iter().map(run).collect()
    };

    let mut reports: Vec<ScorerReport> = scorers
        .iter()
        .map(|s| ScorerReport {
            scorer: s.name(),
            bound_fulfillment: None,
            degenerate_excluded: 0,
            reversed_igc: None,
            per_instance: Vec::new(),
            igc_curve: vec![0.0; config.rounds],
            failures: Vec::new(),
        })
        .collect();
    let mut bf: Vec<Vec<f64>> = vec![Vec::new(); scorers.len()];
    let mut curves: Vec<Vec<Vec<f64>>> = vec![Vec::new(); scorers.len()];
    for (job, out) in jobs.iter().zip(outcomes) {
        match (job, out) {
            (Job::Offline(k, i), Outcome::Bf(r)) => match r {
                Ok(v) => bf[*k].push(v),
                Err(e) if e == MetricError::DegenerateSample.to_string() => {
                    reports[*k].degenerate_excluded += 1
                }
                Err(e) => reports[*k].failures.push(format!("sample {i}: {e}")),
            },
            (Job::Online(k, i), Outcome::Traj(r)) => {
                let curve = r.and_then(|t| igc_curve(&t, config.rounds).map_err(|e| e.to_string()));
                match curve {
                    Ok(c) => {
                        reports[*k]
                            .per_instance
                            .push(c.iter().map(|g| 1.0 - g).sum());
                        curves[*k].push(c);
                    }
                    Err(e) => {
                        reports[*k].per_instance.push(f64::NAN);
                        reports[*k]
                            .failures
                            .push(format!("{}: {e}", instances[*i].instance.name));
                    }
                }
            }
            _ => unreachable!("job and outcome kinds match"),
        }
    }
    for (k, rep) in reports.iter_mut().enumerate() {
        rep.bound_fulfillment = Stat::of(&bf[k]);
        let ok: Vec<f64> = rep
            .per_instance
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        rep.reversed_igc = Stat::of(&ok);
        if !curves[k].is_empty() {
            for (r, slot) in rep.igc_curve.iter_mut().enumerate() {
                *slot = curves[k].iter().map(|c| c[r]).sum::<f64>() / curves[k].len() as f64;
            }
        }
        for f in &rep.failures {
            log::warn!("{}: {f}", rep.scorer);
        }
    }
    EvalReport {
        rounds: config.rounds,
        seed: config.seed,
        n_instances: instances.len(),
        n_samples: samples.len(),
        scorers: reports,
    }
}

pub const RESULTS_CSV_HEADER: &str = "scorer,metric,mean,ste,n";
pub const METRIC_BOUND_FULFILLMENT: &str = "bound_fulfillment";
pub const METRIC_REVERSED_IGC: &str = "reversed_igc_integral";

/// One row per scorer and metric that has data, bound fulfillment first.
pub fn write_results_csv<W: Write>(mut w: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(w, "{RESULTS_CSV_HEADER}")?;
    for (metric, get) in [
        (
            METRIC_BOUND_FULFILLMENT,
            (|r: &ScorerReport| r.bound_fulfillment) as fn(&ScorerReport) -> Option<Stat>,
        ),
        (METRIC_REVERSED_IGC, |r: &ScorerReport| r.reversed_igc),
    ] {
        for rep in &report.scorers {
            if let Some(s) = get(rep) {
                writeln!(w, "{},{metric},{},{},{}", rep.scorer, s.mean, s.ste, s.n)?;
            }
        }
    }
    Ok(())
}

/// `round,<scorer>...` with the mean IGC after each round.
pub fn write_igc_curves_csv<W: Write>(mut w: W, report: &EvalReport) -> std::io::Result<()> {
    let names: Vec<&str> = report.scorers.iter().map(|s| s.scorer.as_str()).collect();
    writeln!(w, "round,{}", names.join(","))?;
    for r in 0..report.rounds {
        let vals: Vec<String> = report
            .scorers
            .iter()
            .map(|s| s.igc_curve[r].to_string())
            .collect();
        writeln!(w, "{},{}", r + 1, vals.join(","))?;
    }
    Ok(())
}

/// Plain-text table: scorer, bound fulfillment mean, integral mean (ste).
pub fn format_table(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<16} {:>10} {:>20}\n",
        "scorer", "bff", "rev. IGC integral"
    );
    for s in &report.scorers {
        let bf = s
            .bound_fulfillment
            .map_or("-".to_string(), |b| format!("{:.3}", b.mean));
        let ig = s
            .reversed_igc
            .map_or("-".to_string(), |b| format!("{:.2} ({:.2})", b.mean, b.ste));
        out += &format!("{:<16} {:>10} {:>20}\n", s.scorer, bf, ig);
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::episode::{collect, CollectConfig, RoundRecord, Terminal};
    use crate::generators::{generate, Family, GenSpec};
    use crate::lp::{solve_lp, solve_milp_bnb};
    use crate::milp::{normalize, LpRelaxation, Row};
    use crate::separators::CutPool;

    fn sample_with(la: Vec<f64>) -> Sample {
        let inst = MilpInstance::new("s", vec![1.0]);
        let relax = LpRelaxation::new(Arc::new(inst)).unwrap();
        let solution = solve_lp(&relax).unwrap();
        Sample {
            schema_version: crate::episode::SAMPLE_SCHEMA_VERSION,
            instance_id: "s".into(),
            iteration: 0,
            collector: "random".into(),
            relaxation: relax,
            solution,
            pool: CutPool::default(),
            la_scores: la,
        }
    }

    fn traj(igcs: &[f64], z_opt: f64) -> Trajectory {
        Trajectory {
            instance: "t".into(),
            scorer: "x".into(),
            z0: 0.0,
            z_opt,
            records: igcs
                .iter()
                .enumerate()
                .map(|(k, &g)| RoundRecord {
                    round: k + 1,
                    chosen_index: 0,
                    cut: Row::le(vec![(0, 1.0)], 0.0).unwrap(),
                    z: g * z_opt,
                    igc: g,
                    pool_size: 1,
                    scorer: "x".into(),
                })
                .collect(),
            terminal: Terminal::RoundLimit,
        }
    }

    #[test]
    fn bound_fulfillment_examples() {
        let s = sample_with(vec![0.0, 2.0, 4.0]);
        assert_eq!(bound_fulfillment(&s, 2).unwrap(), 1.0);
        assert_eq!(bound_fulfillment(&s, 1).unwrap(), 0.5);
        assert_eq!(bound_fulfillment(&s, 0).unwrap(), 0.0);
        assert_eq!(
            bound_fulfillment(&sample_with(vec![0.0, 0.0]), 0),
            Err(MetricError::DegenerateSample)
        );
    }

    #[test]
    fn integral_examples() {
        assert_eq!(
            reversed_igc_integral(&traj(&[0.0; 30], 1.0), 30).unwrap(),
            30.0
        );
        assert_eq!(reversed_igc_integral(&traj(&[1.0], 1.0), 30).unwrap(), 0.0);
        assert_eq!(
            reversed_igc_integral(&traj(&[0.5, 1.0], 1.0), 30).unwrap(),
            0.5
        );
        // Early stop holds the last value.
        assert_eq!(reversed_igc_integral(&traj(&[0.5], 1.0), 30).unwrap(), 15.0);
        // Zero initial gap with no rounds: IGC 1 throughout.
        assert_eq!(reversed_igc_integral(&traj(&[], 0.0), 30).unwrap(), 0.0);
        assert_eq!(reversed_igc_integral(&traj(&[], 1.0), 30).unwrap(), 30.0);
        assert!(matches!(
            reversed_igc_integral(&traj(&[0.5], f64::NAN), 30),
            Err(MetricError::MissingOptimum(_))
        ));
    }

    #[test]
    fn stat_of_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.ste - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(Stat::of(&[4.0]).unwrap().ste, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn integral_is_antitone(igcs in proptest::collection::vec(0.0f64..1.0, 1..30), k in 0usize..30, bump in 0.0f64..1.0) {
            let k = k % igcs.len();
            let t = traj(&igcs, 1.0);
            let mut raised = igcs.clone();
            raised[k] = (raised[k] + bump).min(1.0);
            let u = traj(&raised, 1.0);
            let a = reversed_igc_integral(&t, 30).unwrap();
            let b = reversed_igc_integral(&u, 30).unwrap();
            prop_assert!(b <= a + 1e-12);
            prop_assert!((0.0..=30.0).contains(&a));
        }
    }

    fn small_set() -> (Vec<EvalInstance>, Vec<Sample>) {
        let mut spec = GenSpec::new(Family::BinPacking, 21, 6);
        spec.sizes.n = Some(14);
        spec.sizes.m = Some(8);
        let insts: Vec<MilpInstance> = generate(&spec)
            .iter()
            .map(|i| normalize(i).unwrap())
            .collect();
        let samples = collect(
            &insts,
            &CollectConfig {
                iters: 3,
                ..Default::default()
            },
        );
        let evals = insts
            .into_iter()
            .map(|instance| {
                let z_opt = solve_milp_bnb(&instance, 100_000).unwrap().z_opt;
                EvalInstance { instance, z_opt }
            })
            .collect();
        (evals, samples)
    }

    #[test]
    fn compare_report_shape_and_lookahead_fulfillment() {
        let (insts, samples) = small_set();
        assert!(samples.iter().any(|s| !s.is_degenerate()));
        let scorers = vec![
            ScorerKind::Lookahead,
            ScorerKind::Random,
            ScorerKind::Efficacy,
        ];
        let cfg = CompareConfig {
            rounds: 10,
            seed: 3,
            ..Default::default()
        };
        let rep = compare(&scorers, &insts, &samples, &cfg);
        let la = rep.get("lookahead").unwrap();
        assert_eq!(la.bound_fulfillment.unwrap().mean, 1.0);
        for s in &rep.scorers {
            assert!(s.failures.is_empty(), "{:?}", s.failures);
            let r = s.reversed_igc.unwrap();
            assert_eq!(r.n, insts.len());
            assert!((0.0..=10.0).contains(&r.mean) && r.ste >= 0.0);
            let b = s.bound_fulfillment.unwrap();
            assert!((0.0..=1.0).contains(&b.mean));
        }
        let mut csv = Vec::new();
        write_results_csv(&mut csv, &rep).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * scorers.len());
        let mut curves = Vec::new();
        write_igc_curves_csv(&mut curves, &rep).unwrap();
        assert_eq!(String::from_utf8(curves).unwrap().lines().count(), 11);

        let parallel = compare(
            &scorers,
            &insts,
            &samples,
            &CompareConfig { jobs: 2, ..cfg },
        );
        assert_eq!(rep, parallel);
    }

    #[test]
    fn random_with_two_seeds_agrees_within_noise() {
        let (insts, samples) = small_set();
        let run = |seed| {
            compare(
                &[ScorerKind::Random],
                &insts,
                &samples,
                &CompareConfig {
                    rounds: 10,
                    seed,
                    ..Default::default()
                },
            )
            .scorers[0]
                .bound_fulfillment
                .unwrap()
        };
        let (a, b) = (run(1), run(2));
        assert!((a.mean - b.mean).abs() <= 2.0 * (a.ste.powi(2) + b.ste.powi(2)).sqrt() + 1e-12);
    }
}
