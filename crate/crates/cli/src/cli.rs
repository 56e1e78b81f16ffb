//! Flag parsing and config resolution.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cutlab_core::generators::Family;
use neuralcut::loss::LossKind;

use crate::commands::{execute, Format};
use crate::config::{
    check_seed, command_from_manifest, CollectConfig, Command, ConfigFile, EvalConfig,
    GenerateConfig, PlotDataConfig, RolloutConfig, Run, SolveConfig, TrainConfig,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cutlab", version, about = "Cutting-plane selection lab")]
pub struct Cli {
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for instance-level work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write generated instances as JSON.
    Generate(GenerateArgs),
    /// Record imitation samples with lookahead labels.
    Collect(CollectArgs),
    /// Train a NeuralCut policy on collected samples.
    Train(TrainArgs),
    /// Bound fulfillment and reversed IGC integral per scorer.
    Eval(EvalArgs),
    /// Single-cut rollouts, optionally with the stalling rule.
    Rollout(RolloutArgs),
    /// LP bound, optimum and gap of one instance.
    Solve(SolveArgs),
    /// Mean IGC curves per scorer from stored trajectories.
    PlotData(PlotDataArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub vertices: Option<usize>,
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Instance files or directories.
    #[arg(long, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    /// Samples per instance.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 1..)]
    pub samples: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub validation: Vec<PathBuf>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Train the variables-and-cuts ablation.
    #[arg(long)]
    pub bipartite: bool,
    #[arg(long)]
    pub bn_momentum: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub samples: Vec<PathBuf>,
    /// Comma-separated; `policy:<model file>` loads a trained policy.
    #[arg(long, value_delimiter = ',')]
    pub scorers: Vec<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub node_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub scorers: Vec<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Stop after `--stall-k` rounds improving the bound by less than this.
    #[arg(long)]
    pub stall_eps: Option<f64>,
    #[arg(long)]
    pub stall_k: Option<usize>,
    #[arg(long)]
    pub node_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub node_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// `trajectories.jsonl` files or directories.
    #[arg(long, num_args = 1..)]
    pub trajectories: Vec<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_list<T>(slot: &mut Vec<T>, v: Vec<T>) {
    if !v.is_empty() {
        *slot = v;
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(self) -> Result<Run, CliError> {
        let file = match &self.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        let mut command = match self.command {
            Cmd::Generate(a) => {
                let mut c: GenerateConfig = file.section("generate")?;
                set(&mut c.family, a.family);
                set(&mut c.count, a.count);
                for (slot, v) in [
                    (&mut c.n, a.n),
                    (&mut c.m, a.m),
                    (&mut c.vertices, a.vertices),
                    (&mut c.edges, a.edges),
                    (&mut c.horizon, a.horizon),
                ] {
                    if v.is_some() {
                        *slot = v;
                    }
                }
                Command::Generate(c)
            }
            Cmd::Collect(a) => {
                let mut c: CollectConfig = file.section("collect")?;
                set_list(&mut c.instances, a.instances);
                set(&mut c.iters, a.iters);
                Command::Collect(c)
            }
            Cmd::Train(a) => {
                let mut c: TrainConfig = file.section("train")?;
                set_list(&mut c.samples, a.samples);
                set_list(&mut c.validation, a.validation);
                set(&mut c.loss, a.loss);
                set(&mut c.epochs, a.epochs);
                set(&mut c.batch_size, a.batch_size);
                set(&mut c.lr, a.lr);
                set(&mut c.hidden, a.hidden);
                c.bipartite |= a.bipartite;
                set(&mut c.bn_momentum, a.bn_momentum);
                Command::Train(c)
            }
            Cmd::Eval(a) => {
                let mut c: EvalConfig = file.section("eval")?;
                set_list(&mut c.instances, a.instances);
                set_list(&mut c.samples, a.samples);
                set_list(&mut c.scorers, a.scorers);
                set(&mut c.rounds, a.rounds);
                set(&mut c.node_limit, a.node_limit);
                Command::Eval(c)
            }
            Cmd::Rollout(a) => {
                let mut c: RolloutConfig = file.section("rollout")?;
                set_list(&mut c.instances, a.instances);
                set_list(&mut c.scorers, a.scorers);
                set(&mut c.rounds, a.rounds);
                if a.stall_eps.is_some() {
                    c.stall_eps = a.stall_eps;
                }
                set(&mut c.stall_k, a.stall_k);
                set(&mut c.node_limit, a.node_limit);
                Command::Rollout(c)
            }
            Cmd::Solve(a) => {
                let mut c: SolveConfig = file.section("solve")?;
                set(&mut c.instance, a.instance);
                set(&mut c.node_limit, a.node_limit);
                Command::Solve(c)
            }
            Cmd::PlotData(a) => {
                let mut c: PlotDataConfig = file.section("plot-data")?;
                set_list(&mut c.trajectories, a.trajectories);
                set(&mut c.rounds, a.rounds);
                Command::PlotData(c)
            }
            Cmd::Replay(a) => {
                let manifest = ConfigFile::read(&a.manifest)?;
                let command = command_from_manifest(&manifest)?;
                let out = self.out.ok_or_else(|| {
                    CliError::Usage("replay needs --out for the reproduced outputs".into())
                })?;
                return Ok(Run {
                    seed: self.seed.or(manifest.seed).unwrap_or(0),
                    jobs: self.jobs.or(manifest.jobs).unwrap_or(1).max(1),
                    out,
                    command,
                });
            }
        };
        command.absolutize()?;
        let seed = self.seed.or(file.seed).unwrap_or(0);
        check_seed(seed)?;
        Ok(Run {
            seed,
            jobs: self.jobs.or(file.jobs).unwrap_or(1).max(1),
            out: self.out.unwrap_or_else(|| PathBuf::from("cutlab-out")),
            command,
        })
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 on a usage error, 2 on a data error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let format = cli.format;
    let result = cli.resolve().and_then(|run| execute(&run, format));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("usage: cutlab [--seed N] [--out DIR] [--jobs N] [--config FILE] <generate|collect|train|eval|rollout|solve|plot-data|replay> ...");
            }
            e.exit_code()
        }
    }
}
