//! Imitation training with Adam over shuffled mini-batches of graphs.

use std::io::Write;

use cutlab_core::episode::Sample;
use cutlab_core::graph::{encode, encode_bipartite, TripartiteGraph};
use cutlab_core::metrics::bound_fulfillment;
use cutlab_core::scorers::select;
use cutlab_core::seed::{derive_seed_path, rng_from, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{targets, LossKind};
use crate::model::{forward, loss_and_grad, Batch, Mode, ModelError};
use crate::params::{ModelConfig, PolicyParams};
use crate::tape::Mat;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no usable training samples")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bipartite: bool,
    pub bn_momentum: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::SoftBinaryEntropy,
            lr: 1e-3,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            batch_size: 16,
            epochs: 32,
            seed: 0,
            bipartite: false,
            bn_momentum: 0.1,
            hidden: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.lr > 0.0) {
            return bad("step size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch size and hidden width must be positive");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("batch-norm momentum must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            bipartite: self.bipartite,
            ..ModelConfig::default()
        }
    }
}

/// A sample encoded for the network, with its normalized targets.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub index: usize,
    pub graph: TripartiteGraph,
    pub q: Vec<f64>,
}

/// Encodes every non-degenerate sample; the rest are skipped with a log
/// line.
pub fn encode_samples(samples: &[Sample], bipartite: bool) -> Vec<Encoded> {
    samples
        .iter()
        .enumerate()
        .filter_map(|(index, s)| {
            let q = targets(&s.la_scores).ok()?;
            let graph = if bipartite {
                encode_bipartite(&s.pool, &s.relaxation, &s.solution)
            } else {
                encode(&s.pool, &s.relaxation, &s.solution)
            };
            match graph {
                Ok(graph) => Some(Encoded { index, graph, q }),
                Err(e) => {
                    log::warn!("train: skipping sample {index} ({}): {e}", s.instance_id);
                    None
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_bound_fulfillment: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    /// Parameters of the epoch with the best validation bound fulfillment
    /// (lowest train loss without validation data).
    pub best: PolicyParams,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    fn new(params: &PolicyParams) -> Self {
        let zeros: Vec<Mat> = params
            .tensors
            .iter()
            .map(|t| Mat::zeros(t.value.raw_dim()))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut PolicyParams, grads: &[Mat], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = cfg.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, t) in params.tensors.iter_mut().enumerate() {
            let g = &grads[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(&mut t.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
                });
        }
    }
}

/// Mean bound fulfillment of the argmax of the inference scores, or `None`
/// when there is nothing to evaluate. Ties are broken with a per-sample
/// stream of `seed`.
pub fn evaluate_bound_fulfillment(
    params: &PolicyParams,
    samples: &[Sample],
    encoded: &[Encoded],
    seed: u64,
) -> Result<Option<f64>, TrainError> {
    if encoded.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for e in encoded {
        let batch = Batch::new(&[&e.graph])?;
        let scores = forward(params, &batch, Mode::Infer)?.scores();
        let mut rng = rng_from(derive_seed_path(seed, &[stream::EVAL, e.index as u64]));
        let chosen = select(&scores, &mut rng).expect("pool is non-empty and finite");
        total += bound_fulfillment(&samples[e.index], chosen).expect("sample is not degenerate");
    }
    Ok(Some(total / encoded.len() as f64))
}

pub fn init_params(config: &TrainConfig) -> PolicyParams {
    PolicyParams::init(
        config.model_config(),
        &mut rng_from(derive_seed_path(config.seed, &[stream::TRAIN])),
    )
}

pub fn train(
    dataset: &[Sample],
    config: &TrainConfig,
    validation: &[Sample],
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let train_set = encode_samples(dataset, config.bipartite);
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let val_set = encode_samples(validation, config.bipartite);
    log::info!(
        "train: {} of {} samples usable, {} validation",
        train_set.len(),
        dataset.len(),
        val_set.len()
    );
    let mut params = init_params(config);
    let mut adam = Adam::new(&params);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng_from(derive_seed_path(
            config.seed,
            &[stream::TRAIN, epoch as u64],
        )));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&TripartiteGraph> =
                chunk.iter().map(|&i| &train_set[i].graph).collect();
            let q: Vec<Vec<f64>> = chunk.iter().map(|&i| train_set[i].q.clone()).collect();
            let batch = Batch::new(&graphs)?;
            let weight = 1.0 / chunk.len() as f64;
            let step = loss_and_grad(&params, &batch, &q, weight, config.loss_kind)?;
            loss_sum += step.loss * chunk.len() as f64;
            adam.step(&mut params, &step.grads, config);
            let mom = config.bn_momentum;
            for (layer, stats) in &step.stats {
                let run = params.running_mut(layer);
                run.mean = &run.mean * (1.0 - mom) + &stats.mean * mom;
                run.var = &run.var * (1.0 - mom) + &stats.var * mom;
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val = evaluate_bound_fulfillment(&params, validation, &val_set, config.seed)?;
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, validation bound fulfillment {val:?}"
        );
        let key = val.unwrap_or(-train_loss);
        if key > best.2 {
            best = (params.clone(), epoch, key);
        }
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_bound_fulfillment: val,
        });
    }
    Ok(TrainOutcome {
        params,
        best: best.0,
        best_epoch: best.1,
        curve,
        n_train: train_set.len(),
        n_val: val_set.len(),
    })
}

pub const LEARNING_CURVE_HEADER: &str = "epoch,train_loss,val_bound_fulfillment";

pub fn write_learning_curve_csv<W: Write>(mut w: W, curve: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "{LEARNING_CURVE_HEADER}")?;
    for r in curve {
        let val = r
            .val_bound_fulfillment
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, val)?;
    }
    Ok(())
}

/// Centered moving average with window `2k + 1`, truncated at the ends.
pub fn smoothed(values: &[f64], k: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(k);
            let hi = (i + k + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
