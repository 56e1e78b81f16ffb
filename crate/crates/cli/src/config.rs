//! Resolved run configurations and manifests.
//!
//! A config file is TOML with optional top-level `seed` and `jobs` and one
//! table per command (`[generate]`, `[train]`, ...). Values resolve as
//! defaults, then the file, then flags. Every run writes the resolved values
//! to `<out>/manifest.toml` in the same layout plus `tool`, `version` and
//! `command`, so a manifest is itself a config file and can be replayed.

use std::path::{Path, PathBuf};

use cutlab_core::generators::Family;
use neuralcut::loss::LossKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TOOL: &str = "cutlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub family: Family,
    pub count: usize,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub vertices: Option<usize>,
    pub edges: Option<usize>,
    pub horizon: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            family: Family::BinPacking,
            count: 10,
            n: None,
            m: None,
            vertices: None,
            edges: None,
            horizon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub instances: Vec<PathBuf>,
    pub iters: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            instances: Vec::new(),
            iters: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub samples: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub bipartite: bool,
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = neuralcut::train::TrainConfig::default();
        TrainConfig {
            samples: Vec::new(),
            validation: Vec::new(),
            loss: t.loss_kind,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            hidden: t.hidden,
            bipartite: t.bipartite,
            bn_momentum: t.bn_momentum,
        }
    }
}

impl TrainConfig {
    pub fn to_train(&self, seed: u64) -> neuralcut::train::TrainConfig {
        neuralcut::train::TrainConfig {
            loss_kind: self.loss,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            bipartite: self.bipartite,
            bn_momentum: self.bn_momentum,
            hidden: self.hidden,
            ..Default::default()
        }
    }
}

pub const DEFAULT_NODE_LIMIT: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub instances: Vec<PathBuf>,
    pub samples: Vec<PathBuf>,
    pub scorers: Vec<String>,
    pub rounds: usize,
    pub node_limit: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            instances: Vec::new(),
            samples: Vec::new(),
            scorers: ["lookahead", "random", "default", "efficacy"]
                .map(String::from)
                .to_vec(),
            rounds: 30,
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub instances: Vec<PathBuf>,
    pub scorers: Vec<String>,
    pub rounds: usize,
    pub stall_eps: Option<f64>,
    pub stall_k: usize,
    pub node_limit: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            instances: Vec::new(),
            scorers: vec!["default".into()],
            rounds: 30,
            stall_eps: None,
            stall_k: 10,
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub instance: PathBuf,
    pub node_limit: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            instance: PathBuf::new(),
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotDataConfig {
    pub trajectories: Vec<PathBuf>,
    pub rounds: usize,
}

impl Default for PlotDataConfig {
    fn default() -> Self {
        PlotDataConfig {
            trajectories: Vec::new(),
            rounds: 30,
        }
    }
}

/// A fully resolved command.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Generate(GenerateConfig),
    Collect(CollectConfig),
    Train(TrainConfig),
    Eval(EvalConfig),
    Rollout(RolloutConfig),
    Solve(SolveConfig),
    PlotData(PlotDataConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Collect(_) => "collect",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Rollout(_) => "rollout",
            Command::Solve(_) => "solve",
            Command::PlotData(_) => "plot-data",
        }
    }

    fn table(&self) -> Result<toml::Value, toml::ser::Error> {
        match self {
            Command::Generate(c) => toml::Value::try_from(c),
            Command::Collect(c) => toml::Value::try_from(c),
            Command::Train(c) => toml::Value::try_from(c),
            Command::Eval(c) => toml::Value::try_from(c),
            Command::Rollout(c) => toml::Value::try_from(c),
            Command::Solve(c) => toml::Value::try_from(c),
            Command::PlotData(c) => toml::Value::try_from(c),
        }
    }

    /// Input paths made absolute so a manifest replays from any directory.
    pub fn absolutize(&mut self) -> Result<(), CliError> {
        let abs = |paths: &mut Vec<PathBuf>| -> Result<(), CliError> {
            for p in paths.iter_mut() {
                *p = absolute(p)?;
            }
            Ok(())
        };
        match self {
            Command::Generate(_) => Ok(()),
            Command::Collect(c) => abs(&mut c.instances),
            Command::Train(c) => {
                abs(&mut c.samples)?;
                abs(&mut c.validation)
            }
            Command::Eval(c) => {
                abs(&mut c.instances)?;
                abs(&mut c.samples)
            }
            Command::Rollout(c) => abs(&mut c.instances),
            Command::Solve(c) => {
                c.instance = absolute(&c.instance)?;
                Ok(())
            }
            Command::PlotData(c) => abs(&mut c.trajectories),
        }
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

/// Global settings shared by every command.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub command: Command,
}

/// Parsed config file.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Command recorded in a manifest.
    pub command: Option<String>,
    table: toml::Table,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<ConfigFile, String> {
        let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let seed = match table.get("seed") {
            None => None,
            Some(v) => Some(
                v.as_integer()
                    .and_then(|s| u64::try_from(s).ok())
                    .ok_or("`seed` must be a non-negative integer")?,
            ),
        };
        let jobs = match table.get("jobs") {
            None => None,
            Some(v) => Some(
                v.as_integer()
                    .and_then(|s| usize::try_from(s).ok())
                    .ok_or("`jobs` must be a non-negative integer")?,
            ),
        };
        let command = table
            .get("command")
            .and_then(|v| v.as_str())
            .map(String::from);
        Ok(ConfigFile {
            seed,
            jobs,
            command,
            table,
        })
    }

    /// The `[name]` table over the command's defaults.
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, CliError> {
        match self.table.get(name) {
            None => Ok(T::default()),
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| CliError::Usage(format!("[{name}]: {e}"))),
        }
    }
}

/// Seeds are stored as TOML integers, which are signed 64-bit.
pub fn check_seed(seed: u64) -> Result<(), CliError> {
    if i64::try_from(seed).is_err() {
        return Err(CliError::Usage(format!("seed {seed} exceeds {}", i64::MAX)));
    }
    Ok(())
}

pub fn manifest_text(run: &Run) -> Result<String, CliError> {
    let mut t = toml::Table::new();
    t.insert("tool".into(), TOOL.into());
    t.insert("version".into(), VERSION.into());
    t.insert("command".into(), run.command.name().into());
    t.insert("seed".into(), toml::Value::Integer(run.seed as i64));
    t.insert("jobs".into(), toml::Value::Integer(run.jobs as i64));
    let section = run
        .command
        .table()
        .map_err(|e| CliError::Usage(format!("cannot record config: {e}")))?;
    t.insert(run.command.name().into(), section);
    toml::to_string(&t).map_err(|e| CliError::Usage(format!("cannot record config: {e}")))
}

/// The command recorded in a manifest, resolved from its own section.
pub fn command_from_manifest(file: &ConfigFile) -> Result<Command, CliError> {
    let name = file
        .command
        .as_deref()
        .ok_or_else(|| CliError::Usage("manifest has no `command`".into()))?;
    Ok(match name {
        "generate" => Command::Generate(file.section(name)?),
        "collect" => Command::Collect(file.section(name)?),
        "train" => Command::Train(file.section(name)?),
        "eval" => Command::Eval(file.section(name)?),
        "rollout" => Command::Rollout(file.section(name)?),
        "solve" => Command::Solve(file.section(name)?),
        "plot-data" => Command::PlotData(file.section(name)?),
        other => {
            return Err(CliError::Usage(format!(
                "unknown command `{other}` in manifest"
            )))
        }
    })
}
