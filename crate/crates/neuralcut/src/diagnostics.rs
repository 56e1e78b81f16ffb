//! Checks shared by the test suites: graph relabeling, cut duplication and
//! a finite-difference gradient probe.

use cutlab_core::graph::{CoefEdge, FeatureMatrix, ParEdge, TripartiteGraph};
use cutlab_core::seed::rng_from;
use rand::Rng;

use crate::loss::LossKind;
use crate::model::{loss_and_grad, loss_value, Batch, ModelError};
use crate::params::PolicyParams;

fn permute_rows(f: &FeatureMatrix, perm: &[usize]) -> FeatureMatrix {
    // new row perm[i] = old row i
    let mut out = FeatureMatrix::zeros(f.rows, f.cols);
    for (i, &p) in perm.iter().enumerate() {
        out.data[p * f.cols..(p + 1) * f.cols].copy_from_slice(f.row(i));
    }
    out
}

/// Relabels vars, cons and cuts: old index `i` becomes `perm[i]`. Edge
/// lists are also reversed.
pub fn permute_graph(
    g: &TripartiteGraph,
    pv: &[usize],
    pc: &[usize],
    pk: &[usize],
) -> TripartiteGraph {
    let n = g.n_cuts();
    let mut w = FeatureMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w.data[pk[i] * n + pk[j]] = g.cut_cut_weights.get(i, j);
        }
    }
    TripartiteGraph {
        feature_schema_version: g.feature_schema_version,
        bipartite: g.bipartite,
        var_feats: permute_rows(&g.var_feats, pv),
        cons_feats: permute_rows(&g.cons_feats, pc),
        cut_feats: permute_rows(&g.cut_feats, pk),
        var_cons_edges: g
            .var_cons_edges
            .iter()
            .rev()
            .map(|e| CoefEdge {
                var: pv[e.var],
                row: pc[e.row],
                coef: e.coef,
            })
            .collect(),
        var_cut_edges: g
            .var_cut_edges
            .iter()
            .rev()
            .map(|e| CoefEdge {
                var: pv[e.var],
                row: pk[e.row],
                coef: e.coef,
            })
            .collect(),
        cons_cut_edges: g
            .cons_cut_edges
            .iter()
            .rev()
            .map(|e| ParEdge {
                cons: pc[e.cons],
                cut: pk[e.cut],
                weight: e.weight,
            })
            .collect(),
        cut_cut_weights: w,
        clipped: g.clipped,
    }
}

/// Appends a copy of cut `src` (features, edges, parallelism).
pub fn duplicate_cut(g: &TripartiteGraph, src: usize) -> TripartiteGraph {
    let mut out = g.clone();
    let n = g.n_cuts();
    let new = n;
    let mut feats = g.cut_feats.clone();
    feats.data.extend_from_slice(g.cut_feats.row(src));
    feats.rows += 1;
    out.cut_feats = feats;
    for e in &g.var_cut_edges {
        if e.row == src {
            out.var_cut_edges.push(CoefEdge { row: new, ..*e });
        }
    }
    for e in &g.cons_cut_edges {
        if e.cut == src {
            out.cons_cut_edges.push(ParEdge { cut: new, ..*e });
        }
    }
    let m = n + 1;
    let mut w = FeatureMatrix::zeros(m, m);
    let old = |i: usize| if i == new { src } else { i };
    for i in 0..m {
        for j in 0..m {
            w.data[i * m + j] = if old(i) == old(j) {
                1.0
            } else {
                g.cut_cut_weights.get(old(i), old(j))
            };
        }
    }
    out.cut_cut_weights = w;
    out
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    /// Probes discarded because `θ ± step` crossed a ReLU kink or a clamp.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Compares backpropagated gradients with central differences of step
/// `step` at `probes` parameter entries: one entry of every tensor first,
/// then uniformly drawn entries. A probe counts only when both perturbed
/// passes share the activation pattern of the base pass, since the loss is
/// not differentiable across a pattern change. Gradients below
/// `1e-6 · max(1, |L|)` are compared absolutely against that floor, which
/// sits above the cancellation noise of the differences.
pub fn gradient_check(
    params: &PolicyParams,
    batch: &Batch,
    targets: &[Vec<f64>],
    kind: LossKind,
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck, ModelError> {
    let base = loss_and_grad(params, batch, targets, 1.0, kind)?;
    let floor = 1e-6 * base.loss.abs().max(1.0);
    let sizes: Vec<usize> = params.tensors.iter().map(|t| t.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = rng_from(seed);
    let mut p = params.clone();
    let mut out = GradCheck {
        probes: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let mut attempt = 0;
    while out.probes < probes && attempt < 50 * probes.max(sizes.len()) {
        let (t, k) = if attempt < sizes.len() {
            (attempt, rng.gen_range(0..sizes[attempt]))
        } else {
            let mut flat = rng.gen_range(0..total);
            let mut t = 0;
            while flat >= sizes[t] {
                flat -= sizes[t];
                t += 1;
            }
            (t, flat)
        };
        attempt += 1;
        let cols = p.tensors[t].value.ncols();
        let idx = [k / cols, k % cols];
        let orig = p.tensors[t].value[idx];
        p.tensors[t].value[idx] = orig + step;
        let (up, up_pattern) = loss_value(&p, batch, targets, 1.0, kind)?;
        p.tensors[t].value[idx] = orig - step;
        let (down, down_pattern) = loss_value(&p, batch, targets, 1.0, kind)?;
        p.tensors[t].value[idx] = orig;
        if up_pattern != base.pattern || down_pattern != base.pattern {
            out.skipped += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * step);
        let g = base.grads[t][idx];
        let err = relative_error(g, fd, floor);
        out.probes += 1;
        if err > out.max_rel_err {
            out.max_rel_err = err;
            out.worst = format!(
                "{}{:?}: backprop {g:e}, difference {fd:e}",
                p.tensors[t].name, idx
            );
        }
    }
    Ok(out)
}
