//! Named parameter tensors of the policy network.

use cutlab_core::graph::{FEATURE_SCHEMA_VERSION, ROW_FEATURES, VAR_FEATURES};
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tape::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub var_dim: usize,
    pub row_dim: usize,
    pub bipartite: bool,
    pub feature_schema_version: u32,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            var_dim: VAR_FEATURES,
            row_dim: ROW_FEATURES,
            bipartite: false,
            feature_schema_version: FEATURE_SCHEMA_VERSION,
            bn_eps: 1e-5,
        }
    }
}

/// Half-convolutions in execution order.
pub const CONVS: [&str; 6] = ["v2c", "c2v", "k2v", "v2k", "k2c", "c2k"];
/// The subset run by the bipartite ablation.
pub const BIPARTITE_CONVS: [&str; 2] = ["k2v", "v2k"];

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Mat,
}

/// Running statistics of one batch-normalized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
    pub running: Vec<RunningStats>,
}

/// Names and shapes of every trainable tensor.
pub fn layout(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let h = config.hidden;
    let mut out = Vec::new();
    let mut push = |name: String, shape| out.push((name, shape));
    for (node, dim) in [
        ("var", config.var_dim),
        ("cons", config.row_dim),
        ("cut", config.row_dim),
    ] {
        push(format!("emb.{node}.l1.w"), (dim, h));
        push(format!("emb.{node}.l1.b"), (1, h));
        push(format!("emb.{node}.l2.w"), (h, h));
        push(format!("emb.{node}.l2.b"), (1, h));
    }
    for conv in CONVS {
        for (t, shape) in [
            ("msg.ws", (h, h)),
            ("msg.wd", (h, h)),
            ("msg.we", (1, h)),
            ("msg.b1", (1, h)),
            ("msg.w2", (h, h)),
            ("msg.b2", (1, h)),
            ("upd.wh", (h, h)),
            ("upd.wa", (h, h)),
            ("upd.b1", (1, h)),
            ("upd.w2", (h, h)),
            ("upd.b2", (1, h)),
            ("bn.gamma", (1, h)),
            ("bn.beta", (1, h)),
        ] {
            push(format!("conv.{conv}.{t}"), shape);
        }
    }
    for t in ["wq", "wk", "wv", "wo"] {
        push(format!("att.{t}"), (h, h));
    }
    push("att.we".into(), (1, h));
    push("head.w1".into(), (h, h));
    push("head.b1".into(), (1, h));
    push("head.w2".into(), (h, 1));
    push("head.b2".into(), (1, 1));
    out
}

impl PolicyParams {
    /// Xavier-uniform weights, zero biases, unit scales.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let tensors = layout(&config)
            .into_iter()
            .map(|(name, (r, c))| {
                let value = if name.ends_with("gamma") {
                    Mat::ones((r, c))
                } else if name.ends_with("beta") || is_bias(&name) {
                    Mat::zeros((r, c))
                } else {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    Mat::from_shape_simple_fn((r, c), || rng.gen_range(-a..a))
                };
                Tensor { name, value }
            })
            .collect();
        let h = config.hidden;
        let running = CONVS
            .iter()
            .map(|conv| RunningStats {
                name: format!("conv.{conv}.bn"),
                mean: Array1::zeros(h),
                var: Array1::ones(h),
            })
            .collect();
        PolicyParams {
            config,
            tensors,
            running,
        }
    }

    pub fn index(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("no tensor `{name}`"))
    }

    pub fn get(&self, name: &str) -> &Mat {
        &self.tensors[self.index(name)].value
    }

    pub fn running(&self, layer: &str) -> &RunningStats {
        self.running
            .iter()
            .find(|r| r.name == layer)
            .unwrap_or_else(|| panic!("no running stats `{layer}`"))
    }

    pub fn running_mut(&mut self, layer: &str) -> &mut RunningStats {
        self.running
            .iter_mut()
            .find(|r| r.name == layer)
            .unwrap_or_else(|| panic!("no running stats `{layer}`"))
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// Finite weights, positive running variances and shapes that match
    /// the config.
    pub fn check(&self) -> Result<(), String> {
        let expected = layout(&self.config);
        if expected.len() != self.tensors.len() {
            return Err(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                expected.len()
            ));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.value.dim() {
                return Err(format!(
                    "tensor `{}` {:?}, expected `{name}` {shape:?}",
                    t.name,
                    t.value.dim()
                ));
            }
            if t.value.iter().any(|v| !v.is_finite()) {
                return Err(format!("tensor `{name}` is not finite"));
            }
        }
        for r in &self.running {
            if r.var.iter().any(|&v| !(v > 0.0 && v.is_finite()))
                || r.mean.iter().any(|v| !v.is_finite())
            {
                return Err(format!("running stats `{}` are invalid", r.name));
            }
        }
        Ok(())
    }
}

fn is_bias(name: &str) -> bool {
    let last = name.rsplit('.').next().unwrap_or("");
    last.starts_with('b') && last != "beta"
}
