//! Forward pass: embeddings, half-convolutions with batch normalization,
//! parallelism-weighted attention over cuts and the sigmoid head.

use std::rc::Rc;

use cutlab_core::graph::TripartiteGraph;
use ndarray::Axis;
use thiserror::Error;

use crate::loss::LossKind;
use crate::params::{PolicyParams, BIPARTITE_CONVS, CONVS};
use crate::tape::{BatchStats, EdgeSet, LossSegment, Mat, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("non-finite activation in layer `{0}`")]
    NonFiniteActivation(String),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in every normalized layer.
    Train,
    /// Running statistics.
    Infer,
}

const MASKED: f64 = -1e30;

/// Disjoint union of graphs, ready for one forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    pub bipartite: bool,
    pub feature_schema_version: u32,
    var_x: Mat,
    cons_x: Mat,
    cut_x: Mat,
    var_cons: Rc<EdgeSet>,
    var_cut: Rc<EdgeSet>,
    cons_cut: Rc<EdgeSet>,
    cut_w: Mat,
    mask: Mat,
    /// `(first cut, pool size)` of every graph.
    pub segments: Vec<(usize, usize)>,
}

fn to_mat(f: &cutlab_core::graph::FeatureMatrix) -> Mat {
    Mat::from_shape_vec((f.rows, f.cols), f.data.clone()).expect("feature matrix shape")
}

fn stack(parts: Vec<Mat>, cols: usize) -> Mat {
    let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
    if views.is_empty() {
        return Mat::zeros((0, cols));
    }
    ndarray::concatenate(Axis(0), &views).expect("feature widths agree")
}

/// Coefficients divided by the largest magnitude in their row.
fn row_scaled(edges: &[cutlab_core::graph::CoefEdge], n_rows: usize) -> Vec<f64> {
    let mut scale = vec![0.0f64; n_rows];
    for e in edges {
        scale[e.row] = scale[e.row].max(e.coef.abs());
    }
    edges
        .iter()
        .map(|e| {
            if scale[e.row] > 0.0 {
                e.coef / scale[e.row]
            } else {
                0.0
            }
        })
        .collect()
}

impl Batch {
    pub fn new(graphs: &[&TripartiteGraph]) -> Result<Batch, ModelError> {
        let first = graphs.first().ok_or(ModelError::EmptyBatch)?;
        let (bipartite, schema) = (first.bipartite, first.feature_schema_version);
        if let Some(g) = graphs
            .iter()
            .find(|g| g.bipartite != bipartite || g.feature_schema_version != schema)
        {
            return Err(ModelError::SchemaMismatch(format!(
                "mixed batch (bipartite {} vs {}, schema {} vs {})",
                g.bipartite, bipartite, g.feature_schema_version, schema
            )));
        }
        let (mut nv, mut nc, mut nk) = (0, 0, 0);
        let mut var_cons = EdgeSet::default();
        let mut var_cut = EdgeSet::default();
        let mut cons_cut = EdgeSet::default();
        let mut segments = Vec::with_capacity(graphs.len());
        for g in graphs {
            let vc = row_scaled(&g.var_cons_edges, g.n_cons());
            for (e, v) in g.var_cons_edges.iter().zip(vc) {
                var_cons.a.push(nv + e.var);
                var_cons.b.push(nc + e.row);
                var_cons.val.push(v);
            }
            let vk = row_scaled(&g.var_cut_edges, g.n_cuts());
            for (e, v) in g.var_cut_edges.iter().zip(vk) {
                var_cut.a.push(nv + e.var);
                var_cut.b.push(nk + e.row);
                var_cut.val.push(v);
            }
            for e in &g.cons_cut_edges {
                cons_cut.a.push(nc + e.cons);
                cons_cut.b.push(nk + e.cut);
                cons_cut.val.push(e.weight);
            }
            segments.push((nk, g.n_cuts()));
            nv += g.n_vars();
            nc += g.n_cons();
            nk += g.n_cuts();
        }
        let mut cut_w = Mat::zeros((nk, nk));
        let mut mask = Mat::from_elem((nk, nk), MASKED);
        for (g, &(start, len)) in graphs.iter().zip(&segments) {
            for i in 0..len {
                for j in 0..len {
                    cut_w[[start + i, start + j]] = g.cut_cut_weights.get(i, j);
                    mask[[start + i, start + j]] = 0.0;
                }
            }
        }
        Ok(Batch {
            bipartite,
            feature_schema_version: schema,
            var_x: stack(
                graphs.iter().map(|g| to_mat(&g.var_feats)).collect(),
                first.var_feats.cols,
            ),
            cons_x: stack(
                graphs.iter().map(|g| to_mat(&g.cons_feats)).collect(),
                first.cons_feats.cols,
            ),
            cut_x: stack(
                graphs.iter().map(|g| to_mat(&g.cut_feats)).collect(),
                first.cut_feats.cols,
            ),
            var_cons: Rc::new(var_cons),
            var_cut: Rc::new(var_cut),
            cons_cut: Rc::new(cons_cut),
            cut_w,
            mask,
            segments,
        })
    }

    pub fn n_cuts(&self) -> usize {
        self.cut_x.nrows()
    }

    pub fn n_graphs(&self) -> usize {
        self.segments.len()
    }

    fn check(&self, params: &PolicyParams) -> Result<(), ModelError> {
        let cfg = &params.config;
        if self.bipartite != cfg.bipartite {
            return Err(ModelError::SchemaMismatch(format!(
                "model is {}, graph is {}",
                if cfg.bipartite {
                    "bipartite"
                } else {
                    "tripartite"
                },
                if self.bipartite {
                    "bipartite"
                } else {
                    "tripartite"
                },
            )));
        }
        if self.feature_schema_version != cfg.feature_schema_version {
            return Err(ModelError::SchemaMismatch(format!(
                "feature schema {} vs model {}",
                self.feature_schema_version, cfg.feature_schema_version
            )));
        }
        if self.var_x.ncols() != cfg.var_dim || self.cut_x.ncols() != cfg.row_dim {
            return Err(ModelError::SchemaMismatch(format!(
                "feature widths {}/{} vs model {}/{}",
                self.var_x.ncols(),
                self.cut_x.ncols(),
                cfg.var_dim,
                cfg.row_dim
            )));
        }
        Ok(())
    }
}

/// One recorded forward pass.
pub struct Forward {
    pub tape: Tape,
    /// Leaf of every parameter tensor, in `PolicyParams::tensors` order.
    pub leaves: Vec<Var>,
    /// Pre-sigmoid head output, `|C| × 1`.
    pub logits: Var,
    pub scores: Var,
    /// Batch statistics per normalized layer (train mode only).
    pub stats: Vec<(String, BatchStats)>,
}

impl Forward {
    pub fn scores(&self) -> Vec<f64> {
        self.tape.value(self.scores).iter().copied().collect()
    }

    pub fn logits(&self) -> Vec<f64> {
        self.tape.value(self.logits).iter().copied().collect()
    }
}

struct Builder<'a> {
    params: &'a PolicyParams,
    tape: Tape,
    leaves: Vec<Var>,
    mode: Mode,
    stats: Vec<(String, BatchStats)>,
}

impl Builder<'_> {
    fn p(&self, name: &str) -> Var {
        self.leaves[self.params.index(name)]
    }

    fn finite(&self, v: Var, layer: &str) -> Result<Var, ModelError> {
        if self.tape.value(v).iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(ModelError::NonFiniteActivation(layer.to_string()))
        }
    }

    fn linear(&mut self, x: Var, w: &str, b: &str) -> Var {
        let (w, b) = (self.p(w), self.p(b));
        let y = self.tape.matmul(x, w);
        self.tape.add_row(y, b)
    }

    fn embed(&mut self, node: &str, x: &Mat) -> Result<Var, ModelError> {
        let x = self.tape.leaf(x.clone());
        let h = self.linear(x, &format!("emb.{node}.l1.w"), &format!("emb.{node}.l1.b"));
        let h = self.tape.relu(h);
        let h = self.linear(h, &format!("emb.{node}.l2.w"), &format!("emb.{node}.l2.b"));
        self.finite(h, &format!("emb.{node}"))
    }

    /// Messages from `src` into `dst` along `edges`, then the update MLP and
    /// batch normalization. Returns the new `dst` embedding.
    fn half_conv(
        &mut self,
        conv: &str,
        src: Var,
        dst: Var,
        edges: &Rc<EdgeSet>,
        reverse: bool,
    ) -> Result<Var, ModelError> {
        let name = |t: &str| format!("conv.{conv}.{t}");
        let n_dst = self.tape.value(dst).nrows();
        let ps = self.tape.matmul(src, self.p(&name("msg.ws")));
        let pd = self.tape.matmul(dst, self.p(&name("msg.wd")));
        let agg = self.tape.edge_agg(
            ps,
            pd,
            self.p(&name("msg.we")),
            self.p(&name("msg.b1")),
            Rc::clone(edges),
            reverse,
        );
        let deg = self.tape.leaf(edges.in_degree(reverse, n_dst));
        let msg = self.tape.matmul(agg, self.p(&name("msg.w2")));
        let bias = self.tape.matmul(deg, self.p(&name("msg.b2")));
        let msg = self.tape.add(msg, bias);
        let msg = self.finite(msg, &name("msg"))?;

        let a = self.tape.matmul(dst, self.p(&name("upd.wh")));
        let b = self.tape.matmul(msg, self.p(&name("upd.wa")));
        let u = self.tape.add(a, b);
        let u = self.tape.add_row(u, self.p(&name("upd.b1")));
        let u = self.tape.relu(u);
        let u = self.linear(u, &name("upd.w2"), &name("upd.b2"));
        let u = self.finite(u, &name("upd"))?;

        let (gamma, beta) = (self.p(&name("bn.gamma")), self.p(&name("bn.beta")));
        let eps = self.params.config.bn_eps;
        let out = match self.mode {
            Mode::Train => {
                let (v, stats) = self.tape.batch_norm(u, gamma, beta, eps);
                self.stats.push((name("bn"), stats));
                v
            }
            Mode::Infer => {
                let run = self.params.running(&name("bn"));
                let g = self.tape.value(gamma).row(0).to_owned();
                let scale = &g / &run.var.mapv(|v| (v + eps).sqrt());
                let shift = &self.tape.value(beta).row(0) - &(&run.mean * &scale);
                let scale = self.tape.leaf(
                    scale
                        .broadcast((n_dst, scale.len()))
                        .expect("row broadcast")
                        .to_owned(),
                );
                let shift = self.tape.leaf(shift.insert_axis(Axis(0)));
                let v = self.tape.mul(u, scale);
                self.tape.add_row(v, shift)
            }
        };
        self.finite(out, &name("bn"))
    }

    fn attention(&mut self, h: Var, batch: &Batch) -> Result<Var, ModelError> {
        let width = self.params.config.hidden as f64;
        let q = self.tape.matmul(h, self.p("att.wq"));
        let k = self.tape.matmul(h, self.p("att.wk"));
        let v = self.tape.matmul(h, self.p("att.wv"));
        // q·(k' + w_{kk'} we) splits into q·k' and w_{kk'} (q·we).
        let kt = self.tape.transpose(k);
        let qk = self.tape.matmul(q, kt);
        let wet = self.tape.transpose(self.p("att.we"));
        let qe = self.tape.matmul(q, wet);
        let w = self.tape.leaf(batch.cut_w.clone());
        let bias = self.tape.mul_col(w, qe);
        let s = self.tape.add(qk, bias);
        let s = self.tape.scale(s, 1.0 / width.sqrt());
        let s = self.tape.add_const(s, &batch.mask);
        let a = self.tape.softmax_rows(s);
        let ctx = self.tape.matmul(a, v);
        let out = self.tape.matmul(ctx, self.p("att.wo"));
        let out = self.tape.add(h, out);
        self.finite(out, "att")
    }
}

pub fn forward(params: &PolicyParams, batch: &Batch, mode: Mode) -> Result<Forward, ModelError> {
    batch.check(params)?;
    let mut tape = Tape::new();
    let leaves = params
        .tensors
        .iter()
        .map(|t| tape.leaf(t.value.clone()))
        .collect();
    let mut b = Builder {
        params,
        tape,
        leaves,
        mode,
        stats: Vec::new(),
    };
    let mut hv = b.embed("var", &batch.var_x)?;
    let mut hk = b.embed("cut", &batch.cut_x)?;
    let mut hc = if batch.bipartite {
        None
    } else {
        Some(b.embed("cons", &batch.cons_x)?)
    };
    let convs: &[&str] = if batch.bipartite {
        &BIPARTITE_CONVS
    } else {
        &CONVS
    };
    for &conv in convs {
        match conv {
            "v2c" => hc = Some(b.half_conv(conv, hv, hc.unwrap(), &batch.var_cons, false)?),
            "c2v" => hv = b.half_conv(conv, hc.unwrap(), hv, &batch.var_cons, true)?,
            "k2v" => hv = b.half_conv(conv, hk, hv, &batch.var_cut, true)?,
            "v2k" => hk = b.half_conv(conv, hv, hk, &batch.var_cut, false)?,
            "k2c" => hc = Some(b.half_conv(conv, hk, hc.unwrap(), &batch.cons_cut, true)?),
            "c2k" => hk = b.half_conv(conv, hc.unwrap(), hk, &batch.cons_cut, false)?,
            _ => unreachable!("unknown convolution {conv}"),
        }
    }
    let hk = b.attention(hk, batch)?;
    let z = b.linear(hk, "head.w1", "head.b1");
    let z = b.tape.relu(z);
    let z = b.linear(z, "head.w2", "head.b2");
    let logits = b.finite(z, "head")?;
    let scores = b.tape.sigmoid(logits);
    Ok(Forward {
        tape: b.tape,
        leaves: b.leaves,
        logits,
        scores,
        stats: b.stats,
    })
}

/// Scores of the cuts of one graph in inference mode.
pub fn score_graph(params: &PolicyParams, graph: &TripartiteGraph) -> Result<Vec<f64>, ModelError> {
    let batch = Batch::new(&[graph])?;
    Ok(forward(params, &batch, Mode::Infer)?.scores())
}

/// Loss, parameter gradients and batch statistics of one train-mode pass.
pub struct Step {
    pub loss: f64,
    pub grads: Vec<Mat>,
    pub stats: Vec<(String, BatchStats)>,
    /// Activation pattern; see `Tape::pattern`.
    pub pattern: Vec<bool>,
}

/// Summed per-graph loss (each graph weighted by `weight`) and its gradient.
/// `targets[g]` holds the normalized lookahead scores of graph `g`.
pub fn loss_and_grad(
    params: &PolicyParams,
    batch: &Batch,
    targets: &[Vec<f64>],
    weight: f64,
    kind: LossKind,
) -> Result<Step, ModelError> {
    let mut fwd = forward(params, batch, Mode::Train)?;
    let out = fwd
        .tape
        .loss(fwd.logits, &segments_of(batch, targets, weight), kind);
    let loss = fwd.tape.value(out)[[0, 0]];
    let g = fwd.tape.backward(out);
    let grads = params
        .tensors
        .iter()
        .zip(&fwd.leaves)
        .map(|(t, &leaf)| {
            g.get(leaf)
                .cloned()
                .unwrap_or_else(|| Mat::zeros(t.value.raw_dim()))
        })
        .collect();
    Ok(Step {
        loss,
        grads,
        stats: std::mem::take(&mut fwd.stats),
        pattern: fwd.tape.pattern().to_vec(),
    })
}

fn segments_of(batch: &Batch, targets: &[Vec<f64>], weight: f64) -> Vec<LossSegment> {
    batch
        .segments
        .iter()
        .zip(targets)
        .map(|(&(start, len), q)| {
            assert_eq!(len, q.len(), "target length");
            LossSegment {
                start,
                q: q.clone(),
                weight,
            }
        })
        .collect()
}

/// Train-mode loss without the backward pass, with its activation pattern.
pub fn loss_value(
    params: &PolicyParams,
    batch: &Batch,
    targets: &[Vec<f64>],
    weight: f64,
    kind: LossKind,
) -> Result<(f64, Vec<bool>), ModelError> {
    let mut fwd = forward(params, batch, Mode::Train)?;
    let out = fwd
        .tape
        .loss(fwd.logits, &segments_of(batch, targets, weight), kind);
    Ok((fwd.tape.value(out)[[0, 0]], fwd.tape.pattern().to_vec()))
}
