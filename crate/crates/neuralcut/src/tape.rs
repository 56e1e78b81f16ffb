//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! then walks it in reverse. Besides the usual algebra it has fused ops for
//! edge-wise message aggregation, batch normalization and the imitation
//! losses, which keep memory proportional to nodes rather than edges.

use std::rc::Rc;

use ndarray::{Array1, Array2, Axis};

use crate::loss::{loss_from_logits, LossKind};

pub type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Edges between two node sets `a` and `b`, with a scalar value each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeSet {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub val: Vec<f64>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Number of edges ending at each node, as an `n × 1` column.
    pub fn in_degree(&self, reverse: bool, n: usize) -> Mat {
        let mut d = Mat::zeros((n, 1));
        let dst = if reverse { &self.a } else { &self.b };
        for &v in dst {
            d[[v, 0]] += 1.0;
        }
        d
    }
}

/// Per-graph segment of the logit column and its target.
#[derive(Clone, Debug)]
pub struct LossSegment {
    pub start: usize,
    pub q: Vec<f64>,
    pub weight: f64,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    /// Adds a constant; the gradient passes through unchanged.
    AddConst(Var),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    /// `out[d] = Σ_{e: s→d} relu(src[s] + dst[d] + val_e w + b)`.
    EdgeAgg {
        src: Var,
        dst: Var,
        w: Var,
        b: Var,
        edges: Rc<EdgeSet>,
        reverse: bool,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Array1<f64>,
    },
    Loss {
        z: Var,
        grad: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Statistics of one batch-normalized layer in train mode.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Unbiased variance (biased when there is a single row).
    pub var: Array1<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Activation pattern (ReLU signs, loss clamps) seen by this pass. Two
    /// passes with equal patterns lie on the same smooth piece.
    pattern: Vec<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + 1 bᵀ` for a `1 × k` row `b`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    /// `a ⊙ c 1ᵀ` for an `n × 1` column `c`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let v = self.value(a) * self.value(c);
        self.push(v, Op::MulCol(a, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, c: &Mat) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        self.pattern.extend(x.iter().map(|&v| v > 0.0));
        let v = x.mapv(|v| v.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Message aggregation along `edges` from the `a` side to the `b` side
    /// (or back when `reverse`). `src` and `dst` hold per-node projections,
    /// `w` (`1 × h`) scales the edge value and `b` (`1 × h`) is the bias.
    pub fn edge_agg(
        &mut self,
        src: Var,
        dst: Var,
        w: Var,
        b: Var,
        edges: Rc<EdgeSet>,
        reverse: bool,
    ) -> Var {
        let (ps, pd) = (self.value(src), self.value(dst));
        let (wv, bv) = (self.value(w).row(0), self.value(b).row(0));
        let h = pd.ncols();
        let mut out = Mat::zeros((pd.nrows(), h));
        let mut pattern = Vec::with_capacity(edges.len() * h);
        for e in 0..edges.len() {
            let (s, d) = if reverse {
                (edges.b[e], edges.a[e])
            } else {
                (edges.a[e], edges.b[e])
            };
            let val = edges.val[e];
            let (rs, rd) = (ps.row(s), pd.row(d));
            let mut od = out.row_mut(d);
            for k in 0..h {
                let pre = rs[k] + rd[k] + val * wv[k] + bv[k];
                pattern.push(pre > 0.0);
                if pre > 0.0 {
                    od[k] += pre;
                }
            }
        }
        self.pattern.extend(pattern);
        self.push(
            out,
            Op::EdgeAgg {
                src,
                dst,
                w,
                b,
                edges,
                reverse,
            },
        )
    }

    /// Batch normalization with batch statistics over rows.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> (Var, BatchStats) {
        let xv = self.value(x);
        let n = xv.nrows() as f64;
        let mean = xv.mean_axis(Axis(0)).expect("batch norm over an empty set");
        let centered = xv - &mean;
        let var_b = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
        let inv_std = var_b.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let out = &xhat * &self.value(gamma).row(0) + self.value(beta).row(0);
        let unbiased = if n > 1.0 {
            &var_b * (n / (n - 1.0))
        } else {
            var_b.clone()
        };
        let stats = BatchStats {
            mean,
            var: unbiased,
        };
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        (v, stats)
    }

    /// Weighted sum of per-segment imitation losses over the logit column
    /// `z`; returns a `1 × 1` node.
    pub fn loss(&mut self, z: Var, segments: &[LossSegment], kind: LossKind) -> Var {
        let zv = &self.nodes[z.0].value;
        let mut grad = Mat::zeros(zv.raw_dim());
        let mut total = 0.0;
        for seg in segments {
            let n = seg.q.len();
            let logits: Vec<f64> = (0..n).map(|i| zv[[seg.start + i, 0]]).collect();
            let (value, g, clamped) = loss_from_logits(&logits, &seg.q, kind);
            total += seg.weight * value;
            for i in 0..n {
                grad[[seg.start + i, 0]] = seg.weight * g[i];
            }
            self.pattern.extend(clamped);
        }
        self.push(Mat::from_elem((1, 1), total), Op::Loss { z, grad })
    }

    /// Gradients of the `1 × 1` node `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Grads {
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(Mat::ones(self.value(out).raw_dim()));
        for i in (0..=out.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    g[i] = Some(gi);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = gi.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&gi);
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::Transpose(a) => acc(&mut g, *a, gi.t().to_owned()),
                Op::Add(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, gi);
                }
                Op::Mul(a, b) => {
                    let ga = &gi * self.value(*b);
                    let gb = &gi * self.value(*a);
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let gb = gi.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut g, *a, gi);
                    acc(&mut g, *b, gb);
                }
                Op::MulCol(a, c) => {
                    let gc = (&gi * self.value(*a))
                        .sum_axis(Axis(1))
                        .insert_axis(Axis(1));
                    let ga = &gi * self.value(*c);
                    acc(&mut g, *a, ga);
                    acc(&mut g, *c, gc);
                }
                Op::Scale(a, k) => acc(&mut g, *a, gi * *k),
                Op::AddConst(a) => acc(&mut g, *a, gi),
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut g, *a, gi * mask);
                }
                Op::Sigmoid(a) => {
                    let s = &node.value;
                    let ga = &gi * &s.mapv(|v| v * (1.0 - v));
                    acc(&mut g, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = &gi * y;
                    for (mut row, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yr, |r, &yv| *r -= yv * dot);
                    }
                    acc(&mut g, *a, ga);
                }
                Op::EdgeAgg {
                    src,
                    dst,
                    w,
                    b,
                    edges,
                    reverse,
                } => {
                    let (ps, pd) = (self.value(*src), self.value(*dst));
                    let (wv, bv) = (self.value(*w).row(0), self.value(*b).row(0));
                    let h = pd.ncols();
                    let mut gs = Mat::zeros(ps.raw_dim());
                    let mut gd = Mat::zeros(pd.raw_dim());
                    let mut gw = Mat::zeros((1, h));
                    let mut gb = Mat::zeros((1, h));
                    for e in 0..edges.len() {
                        let (s, d) = if *reverse {
                            (edges.b[e], edges.a[e])
                        } else {
                            (edges.a[e], edges.b[e])
                        };
                        let val = edges.val[e];
                        for k in 0..h {
                            let pre = ps[[s, k]] + pd[[d, k]] + val * wv[k] + bv[k];
                            if pre > 0.0 {
                                let go = gi[[d, k]];
                                gs[[s, k]] += go;
                                gd[[d, k]] += go;
                                gw[[0, k]] += val * go;
                                gb[[0, k]] += go;
                            }
                        }
                    }
                    acc(&mut g, *src, gs);
                    acc(&mut g, *dst, gd);
                    acc(&mut g, *w, gw);
                    acc(&mut g, *b, gb);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.nrows() as f64;
                    let gbeta = gi.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&gi * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &gi * &self.value(*gamma).row(0);
                    let s1 = dxhat.sum_axis(Axis(0));
                    let s2 = (&dxhat * xhat).sum_axis(Axis(0));
                    let gx = (dxhat * n - &s1 - &(xhat * &s2)) * &(inv_std / n);
                    acc(&mut g, *x, gx);
                    acc(&mut g, *gamma, ggamma);
                    acc(&mut g, *beta, gbeta);
                }
                Op::Loss { z, grad } => {
                    let k = gi[[0, 0]];
                    acc(&mut g, *z, grad * k);
                }
            }
        }
        Grads { g }
    }
}

fn acc(g: &mut [Option<Mat>], v: Var, d: Mat) {
    match &mut g[v.0] {
        Some(x) => *x += &d,
        slot => *slot = Some(d),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub struct Grads {
    g: Vec<Option<Mat>>,
}

impl Grads {
    /// Gradient of a leaf, `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.g[v.0].as_ref()
    }
}
