//! Command implementations. Each writes only under the run's output
//! directory and reports a short summary on stdout.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use cutlab_core::episode::{
    collect_instance, read_samples_jsonl, rollout, write_samples_jsonl, write_trajectory_csv,
    CollectConfig as CoreCollect, RolloutConfig as CoreRollout, Sample, StallRule, Trajectory,
};
use cutlab_core::generators::{generate, GenSpec, SizeOverrides};
use cutlab_core::lp::{solve_lp, solve_milp_bnb, LpStatus};
use cutlab_core::metrics::{
    compare, format_table, igc_curve, reversed_igc_integral, write_igc_curves_csv,
    write_results_csv, CompareConfig, EvalInstance,
};
use cutlab_core::milp::{normalize, read_json, read_mps, write_json, LpRelaxation, MilpInstance};
use cutlab_core::scorers::{ScorerKind, ScorerName};
use cutlab_core::seed::{derive_seed_path, stream};
use neuralcut::NeuralCutPolicy;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    manifest_text, CollectConfig, Command, EvalConfig, GenerateConfig, PlotDataConfig,
    RolloutConfig, Run, SolveConfig, TrainConfig, MANIFEST_FILE,
};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

pub fn execute(run: &Run, format: Format) -> Result<(), CliError> {
    fs::create_dir_all(&run.out).with_context(|| format!("cannot create {}", run.out.display()))?;
    fs::write(run.out.join(MANIFEST_FILE), manifest_text(run)?)
        .with_context(|| format!("cannot write manifest under {}", run.out.display()))?;
    match &run.command {
        Command::Generate(c) => cmd_generate(run, c),
        Command::Collect(c) => cmd_collect(run, c),
        Command::Train(c) => cmd_train(run, c, format),
        Command::Eval(c) => cmd_eval(run, c, format),
        Command::Rollout(c) => cmd_rollout(run, c, format),
        Command::Solve(c) => cmd_solve(run, c, format),
        Command::PlotData(c) => cmd_plot_data(run, c),
    }
}

/// Runs `f` on `jobs` worker threads (the calling thread when `jobs <= 1`).
fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}), running sequentially");
            f()
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

/// Files of a directory with one of `exts`, sorted; plain files as given.
fn expand(paths: &[PathBuf], exts: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| exts.contains(&x))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_instance(path: &Path) -> anyhow::Result<MilpInstance> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let parsed = match path.extension().and_then(|x| x.to_str()) {
        Some("mps") => read_mps(&text),
        _ => read_json(&text),
    };
    parsed.with_context(|| path.display().to_string())
}

fn load_instances(paths: &[PathBuf]) -> Result<Vec<MilpInstance>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("no instances given (--instances)".into()));
    }
    let files = expand(paths, &["json", "mps"])?;
    if files.is_empty() {
        return Err(anyhow!("no instance files under {:?}", paths).into());
    }
    Ok(files
        .iter()
        .map(|f| load_instance(f))
        .collect::<anyhow::Result<_>>()?)
}

pub fn load_samples(paths: &[PathBuf]) -> anyhow::Result<Vec<Sample>> {
    let mut out = Vec::new();
    for f in expand(paths, &["jsonl"])? {
        let file = File::open(&f).with_context(|| format!("cannot read {}", f.display()))?;
        out.extend(
            read_samples_jsonl(BufReader::new(file)).with_context(|| f.display().to_string())?,
        );
    }
    Ok(out)
}

fn resolve_scorers(names: &[String]) -> Result<Vec<ScorerKind>, CliError> {
    if names.is_empty() {
        return Err(CliError::Usage("no scorers given (--scorers)".into()));
    }
    names
        .iter()
        .map(|n| match n.parse::<ScorerName>() {
            Err(e) => Err(CliError::Usage(e.to_string())),
            Ok(ScorerName::Builtin(k)) => Ok(k),
            Ok(ScorerName::Policy(path)) => {
                let params =
                    neuralcut::io::load_file(Path::new(&path)).with_context(|| path.clone())?;
                let stem = Path::new(&path)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("model");
                Ok(NeuralCutPolicy::new(params)
                    .with_label(format!("neuralcut:{stem}"))
                    .into_scorer())
            }
        })
        .collect()
}

/// Instances paired with their optimal values; instances whose optimum
/// cannot be found are skipped with a warning.
fn with_optima(instances: Vec<MilpInstance>, node_limit: usize, jobs: usize) -> Vec<EvalInstance> {
    let solved: Vec<Option<EvalInstance>> = with_jobs(jobs, || {
        instances
            .into_par_iter()
            .map(|instance| match solve_milp_bnb(&instance, node_limit) {
                Ok(b) => {
                    if !b.proved_optimal {
                        log::warn!(
                            "{}: node limit reached, using the incumbent as the optimum",
                            instance.name
                        );
                    }
                    Some(EvalInstance {
                        instance,
                        z_opt: b.z_opt,
                    })
                }
                Err(e) => {
                    log::warn!("{}: skipped, no optimum ({e})", instance.name);
                    None
                }
            })
            .collect()
    });
    solved.into_iter().flatten().collect()
}

fn cmd_generate(run: &Run, c: &GenerateConfig) -> Result<(), CliError> {
    let spec = GenSpec {
        family: c.family,
        seed: run.seed,
        count: c.count,
        sizes: SizeOverrides {
            vertices: c.vertices,
            edges: c.edges,
            n: c.n,
            m: c.m,
            horizon: c.horizon,
        },
    };
    let dir = run.out.join("instances");
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let instances = generate(&spec);
    for inst in &instances {
        let path = dir.join(format!("{}.json", inst.name));
        fs::write(&path, write_json(inst))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!(
        "wrote {} {} instances to {}",
        instances.len(),
        c.family,
        dir.display()
    );
    Ok(())
}

fn cmd_collect(run: &Run, c: &CollectConfig) -> Result<(), CliError> {
    let instances = load_instances(&c.instances)?;
    let cfg = CoreCollect {
        iters: c.iters,
        seed: run.seed,
        ..Default::default()
    };
    let per_instance: Vec<Vec<Sample>> = with_jobs(run.jobs, || {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let seed = derive_seed_path(run.seed, &[stream::COLLECT, i as u64]);
                collect_instance(inst, &cfg, seed).unwrap_or_else(|e| {
                    log::warn!("collect: skipping {}: {e}", inst.name);
                    Vec::new()
                })
            })
            .collect()
    });
    let samples: Vec<Sample> = per_instance.into_iter().flatten().collect();
    let path = run.out.join("samples.jsonl");
    let mut w = create(&path)?;
    write_samples_jsonl(&mut w, &samples).context("cannot write samples")?;
    w.flush().context("cannot write samples")?;
    let degenerate = samples.iter().filter(|s| s.is_degenerate()).count();
    println!(
        "collected {} samples ({degenerate} degenerate) from {} instances into {}",
        samples.len(),
        instances.len(),
        path.display()
    );
    Ok(())
}

fn cmd_train(run: &Run, c: &TrainConfig, format: Format) -> Result<(), CliError> {
    if c.samples.is_empty() {
        return Err(CliError::Usage(
            "no training samples given (--samples)".into(),
        ));
    }
    let cfg = c.to_train(run.seed);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let train = load_samples(&c.samples)?;
    let val = load_samples(&c.validation)?;
    let out = neuralcut::train::train(&train, &cfg, &val).context("training failed")?;
    let model = run.out.join("model.ncut");
    let best = run.out.join("model-best.ncut");
    neuralcut::io::save_file(&out.params, &model).context("cannot write model")?;
    neuralcut::io::save_file(&out.best, &best).context("cannot write model")?;
    let curve_path = run.out.join("learning_curve.csv");
    let mut w = create(&curve_path)?;
    neuralcut::train::write_learning_curve_csv(&mut w, &out.curve)
        .context("cannot write learning curve")?;
    w.flush().context("cannot write learning curve")?;
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&out.curve).expect("curve serializes")
        ),
        Format::Text => {
            for r in &out.curve {
                match r.val_bound_fulfillment {
                    Some(v) => println!(
                        "epoch {:>3}  loss {:.6}  val bff {v:.4}",
                        r.epoch, r.train_loss
                    ),
                    None => println!("epoch {:>3}  loss {:.6}", r.epoch, r.train_loss),
                }
            }
            println!(
                "trained on {} samples ({} validation); best epoch {}; model {}",
                out.n_train,
                out.n_val,
                out.best_epoch,
                model.display()
            );
        }
    }
    Ok(())
}

fn cmd_eval(run: &Run, c: &EvalConfig, format: Format) -> Result<(), CliError> {
    let scorers = resolve_scorers(&c.scorers)?;
    let instances = if c.instances.is_empty() {
        Vec::new()
    } else {
        with_optima(load_instances(&c.instances)?, c.node_limit, run.jobs)
    };
    let samples = load_samples(&c.samples)?;
    if instances.is_empty() && samples.is_empty() {
        return Err(CliError::Usage(
            "nothing to evaluate (--instances, --samples)".into(),
        ));
    }
    let cfg = CompareConfig {
        rounds: c.rounds,
        seed: run.seed,
        jobs: run.jobs,
        rollout: None,
    };
    let report = compare(&scorers, &instances, &samples, &cfg);
    let mut w = create(&run.out.join("results.csv"))?;
    write_results_csv(&mut w, &report).context("cannot write results")?;
    w.flush().context("cannot write results")?;
    let mut w = create(&run.out.join("igc_curves.csv"))?;
    write_igc_curves_csv(&mut w, &report).context("cannot write curves")?;
    w.flush().context("cannot write curves")?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(run.out.join("report.json"), &json).context("cannot write report")?;
    match format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{}", format_table(&report)),
    }
    Ok(())
}

#[derive(Serialize)]
struct RolloutSummary {
    scorer: String,
    instances: usize,
    mean_cuts: f64,
    mean_final_igc: f64,
    mean_reversed_igc: f64,
}

fn cmd_rollout(run: &Run, c: &RolloutConfig, format: Format) -> Result<(), CliError> {
    let scorers = resolve_scorers(&c.scorers)?;
    if let Some(eps) = c.stall_eps {
        if !(eps >= 0.0) || c.stall_k == 0 {
            return Err(CliError::Usage(
                "--stall-eps must be ≥ 0 and --stall-k ≥ 1".into(),
            ));
        }
    }
    let instances = with_optima(load_instances(&c.instances)?, c.node_limit, run.jobs);
    let pairs: Vec<(usize, usize)> = (0..scorers.len())
        .flat_map(|k| (0..instances.len()).map(move |i| (k, i)))
        .collect();
    let results: Vec<anyhow::Result<Trajectory>> = with_jobs(run.jobs, || {
        pairs
            .par_iter()
            .map(|&(k, i)| {
                let cfg = CoreRollout {
                    rounds: c.rounds,
                    seed: derive_seed_path(run.seed, &[stream::ROLLOUT, i as u64]),
                    stall: c.stall_eps.map(|eps| StallRule {
                        eps,
                        k_rounds: c.stall_k,
                    }),
                    ..Default::default()
                };
                let inst = &instances[i];
                rollout(&inst.instance, inst.z_opt, &scorers[k], &cfg)
                    .with_context(|| format!("{} with {}", inst.instance.name, scorers[k]))
            })
            .collect()
    });
    let trajectories: Vec<Trajectory> = results.into_iter().collect::<anyhow::Result<_>>()?;
    let mut w = create(&run.out.join("trajectories.jsonl"))?;
    for t in &trajectories {
        writeln!(
            w,
            "{}",
            serde_json::to_string(t).expect("trajectory serializes")
        )
        .context("cannot write trajectories")?;
    }
    w.flush().context("cannot write trajectories")?;
    let mut w = create(&run.out.join("trajectories.csv"))?;
    write_trajectory_csv(&mut w, &trajectories).context("cannot write trajectories")?;
    w.flush().context("cannot write trajectories")?;

    let mut summaries = Vec::new();
    for s in &scorers {
        let mine: Vec<&Trajectory> = trajectories
            .iter()
            .filter(|t| t.scorer == s.name())
            .collect();
        let n = mine.len().max(1) as f64;
        let rev: f64 = mine
            .iter()
            .map(|t| reversed_igc_integral(t, c.rounds).unwrap_or(f64::NAN))
            .sum();
        summaries.push(RolloutSummary {
            scorer: s.name(),
            instances: mine.len(),
            mean_cuts: mine.iter().map(|t| t.n_cuts() as f64).sum::<f64>() / n,
            mean_final_igc: mine.iter().map(|t| t.final_igc()).sum::<f64>() / n,
            mean_reversed_igc: rev / n,
        });
    }
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&summaries).expect("summary serializes")
        ),
        Format::Text => {
            println!(
                "{:<20} {:>9} {:>9} {:>10} {:>12}",
                "scorer", "instances", "cuts", "final IGC", "rev. IGC"
            );
            for s in &summaries {
                println!(
                    "{:<20} {:>9} {:>9.2} {:>10.4} {:>12.4}",
                    s.scorer, s.instances, s.mean_cuts, s.mean_final_igc, s.mean_reversed_igc
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    instance: String,
    z_lp: f64,
    z_opt: f64,
    gap: f64,
    relative_gap: f64,
    proved_optimal: bool,
    nodes: usize,
}

fn cmd_solve(run: &Run, c: &SolveConfig, format: Format) -> Result<(), CliError> {
    if c.instance.as_os_str().is_empty() {
        return Err(CliError::Usage("no instance given".into()));
    }
    let inst = load_instance(&c.instance)?;
    let norm = normalize(&inst).with_context(|| c.instance.display().to_string())?;
    let relax = LpRelaxation::new(Arc::new(norm.clone())).context("invalid instance")?;
    let lp = solve_lp(&relax).context("LP solve failed")?;
    if lp.status != LpStatus::Optimal {
        return Err(anyhow!("LP relaxation is {:?}", lp.status).into());
    }
    let bound = solve_milp_bnb(&norm, c.node_limit).context("branch and bound failed")?;
    let z_lp = norm.report_objective(lp.objective);
    let z_opt = norm.report_objective(bound.z_opt);
    let gap = (z_opt - z_lp).abs();
    let report = SolveReport {
        instance: inst.name.clone(),
        z_lp,
        z_opt,
        gap,
        relative_gap: gap / z_opt.abs().max(1e-9),
        proved_optimal: bound.proved_optimal,
        nodes: bound.nodes_explored,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(run.out.join("solve.json"), &json).context("cannot write solve report")?;
    match format {
        Format::Json => println!("{json}"),
        Format::Text => {
            println!("instance {}", report.instance);
            println!("z*      {}", report.z_lp);
            println!(
                "z^OPT   {}{}",
                report.z_opt,
                if report.proved_optimal {
                    ""
                } else {
                    " (node limit)"
                }
            );
            println!(
                "gap     {} ({:.4}%)",
                report.gap,
                100.0 * report.relative_gap
            );
        }
    }
    Ok(())
}

fn cmd_plot_data(run: &Run, c: &PlotDataConfig) -> Result<(), CliError> {
    if c.trajectories.is_empty() {
        return Err(CliError::Usage("no trajectory files given".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut curves: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for f in expand(&c.trajectories, &["jsonl"])? {
        let text =
            fs::read_to_string(&f).with_context(|| format!("cannot read {}", f.display()))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Trajectory = serde_json::from_str(line)
                .with_context(|| format!("{}: line {}", f.display(), i + 1))?;
            let curve = igc_curve(&t, c.rounds)
                .with_context(|| format!("{}: line {}", f.display(), i + 1))?;
            if !curves.contains_key(&t.scorer) {
                order.push(t.scorer.clone());
            }
            curves.entry(t.scorer).or_default().push(curve);
        }
    }
    let path = run.out.join("igc_curves.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "round,{}", order.join(","))?;
        for r in 0..c.rounds {
            let row: Vec<String> = order
                .iter()
                .map(|s| {
                    let cs = &curves[s];
                    (cs.iter().map(|cv| cv[r]).sum::<f64>() / cs.len() as f64).to_string()
                })
                .collect();
            writeln!(w, "{},{}", r + 1, row.join(","))?;
        }
        w.flush()
    };
    write(&mut w).context("cannot write curves")?;
    println!(
        "wrote mean IGC curves of {} scorers to {}",
        order.len(),
        path.display()
    );
    Ok(())
}
