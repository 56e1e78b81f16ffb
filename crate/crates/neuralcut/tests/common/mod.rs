#![allow(dead_code)]

use cutlab_core::graph::{
    CoefEdge, FeatureMatrix, ParEdge, TripartiteGraph, FEATURE_SCHEMA_VERSION, ROW_FEATURES,
    VAR_FEATURES,
};
use rand::Rng;

fn feats<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> FeatureMatrix {
    FeatureMatrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

fn coef_edges<R: Rng>(rng: &mut R, n_vars: usize, n_rows: usize) -> Vec<CoefEdge> {
    let mut out = Vec::new();
    for row in 0..n_rows {
        let forced = rng.gen_range(0..n_vars);
        for var in 0..n_vars {
            if var == forced || rng.gen_bool(0.4) {
                let mag = rng.gen_range(0.2..3.0);
                let coef = if rng.gen_bool(0.5) { mag } else { -mag };
                out.push(CoefEdge { var, row, coef });
            }
        }
    }
    out
}

/// Random graph with the encoder's shapes; `n_cons` is ignored when
/// `bipartite`.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    n_vars: usize,
    n_cons: usize,
    n_cuts: usize,
    bipartite: bool,
) -> TripartiteGraph {
    let n_cons = if bipartite { 0 } else { n_cons };
    let mut w = FeatureMatrix::zeros(n_cuts, n_cuts);
    for i in 0..n_cuts {
        w.data[i * n_cuts + i] = 1.0;
        for j in 0..i {
            let v = rng.gen_range(0.0..1.0);
            w.data[i * n_cuts + j] = v;
            w.data[j * n_cuts + i] = v;
        }
    }
    let mut cons_cut = Vec::new();
    for cons in 0..n_cons {
        for cut in 0..n_cuts {
            cons_cut.push(ParEdge {
                cons,
                cut,
                weight: rng.gen_range(0.0..1.0),
            });
        }
    }
    TripartiteGraph {
        feature_schema_version: FEATURE_SCHEMA_VERSION,
        bipartite,
        var_feats: feats(rng, n_vars, VAR_FEATURES),
        cons_feats: feats(rng, n_cons, ROW_FEATURES),
        cut_feats: feats(rng, n_cuts, ROW_FEATURES),
        var_cons_edges: coef_edges(rng, n_vars, n_cons),
        var_cut_edges: coef_edges(rng, n_vars, n_cuts),
        cons_cut_edges: cons_cut,
        cut_cut_weights: w,
        clipped: 0,
    }
}

pub fn shuffled<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
