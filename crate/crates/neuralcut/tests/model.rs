mod common;

use common::{random_graph, shuffled};
use cutlab_core::seed::rng_from;
use neuralcut::diagnostics::{duplicate_cut, gradient_check, permute_graph};
use neuralcut::loss::LossKind;
use neuralcut::model::{forward, loss_and_grad, Batch, Mode, ModelError};
use neuralcut::params::{ModelConfig, PolicyParams};
use rand::Rng;

fn params(hidden: usize, bipartite: bool, seed: u64) -> PolicyParams {
    let config = ModelConfig {
        hidden,
        bipartite,
        ..ModelConfig::default()
    };
    PolicyParams::init(config, &mut rng_from(seed))
}

fn targets<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    q[rng.gen_range(0..n)] = 1.0;
    q
}

#[test]
fn scores_are_probabilities() {
    let mut rng = rng_from(3);
    for bipartite in [false, true] {
        let p = params(16, bipartite, 1);
        let g = random_graph(&mut rng, 7, 5, 6, bipartite);
        let b = Batch::new(&[&g]).unwrap();
        for mode in [Mode::Train, Mode::Infer] {
            let s = forward(&p, &b, mode).unwrap().scores();
            assert_eq!(s.len(), 6);
            assert!(s.iter().all(|&v| v > 0.0 && v < 1.0), "{s:?}");
        }
    }
}

#[test]
fn permutation_equivariance_in_both_modes() {
    let mut rng = rng_from(11);
    for case in 0..100 {
        let bipartite = case % 4 == 3;
        let p = params(16, bipartite, case);
        let (nv, nc, nk) = (
            rng.gen_range(2..9),
            rng.gen_range(1..6),
            rng.gen_range(1..8),
        );
        let g = random_graph(&mut rng, nv, nc, nk, bipartite);
        let (pv, pc, pk) = (
            shuffled(&mut rng, g.n_vars()),
            shuffled(&mut rng, g.n_cons()),
            shuffled(&mut rng, g.n_cuts()),
        );
        let h = permute_graph(&g, &pv, &pc, &pk);
        for mode in [Mode::Train, Mode::Infer] {
            let a = forward(&p, &Batch::new(&[&g]).unwrap(), mode)
                .unwrap()
                .scores();
            let b = forward(&p, &Batch::new(&[&h]).unwrap(), mode)
                .unwrap()
                .scores();
            for i in 0..nk {
                assert!(
                    (a[i] - b[pk[i]]).abs() <= 1e-6,
                    "case {case} {mode:?}: cut {i} {} vs {}",
                    a[i],
                    b[pk[i]]
                );
            }
        }
    }
}

#[test]
fn duplicate_cuts_score_equally() {
    let mut rng = rng_from(5);
    for case in 0..20 {
        let bipartite = case % 2 == 1;
        let p = params(16, bipartite, case);
        let g = duplicate_cut(&random_graph(&mut rng, 6, 4, 5, bipartite), 2);
        for mode in [Mode::Train, Mode::Infer] {
            let s = forward(&p, &Batch::new(&[&g]).unwrap(), mode)
                .unwrap()
                .scores();
            assert!((s[2] - s[5]).abs() <= 1e-6, "{s:?}");
        }
    }
}

#[test]
fn batched_graphs_do_not_interact() {
    let mut rng = rng_from(8);
    let p = params(16, false, 2);
    let g = random_graph(&mut rng, 6, 4, 5, false);
    let h = random_graph(&mut rng, 8, 3, 4, false);
    let alone = forward(&p, &Batch::new(&[&g]).unwrap(), Mode::Infer)
        .unwrap()
        .scores();
    let both = forward(&p, &Batch::new(&[&g, &h]).unwrap(), Mode::Infer)
        .unwrap()
        .scores();
    for i in 0..5 {
        assert!((alone[i] - both[i]).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = rng_from(21);
    for (bipartite, seed) in [(false, 1), (true, 2)] {
        let p = params(6, bipartite, seed);
        let graphs: Vec<_> = (0..3)
            .map(|_| random_graph(&mut rng, 5, 4, 4, bipartite))
            .collect();
        let refs: Vec<_> = graphs.iter().collect();
        let batch = Batch::new(&refs).unwrap();
        let q: Vec<_> = graphs
            .iter()
            .map(|g| targets(&mut rng, g.n_cuts()))
            .collect();
        for kind in LossKind::ALL {
            let check = gradient_check(&p, &batch, &q, kind, 250, 1e-4, seed).unwrap();
            assert!(check.probes >= 200, "{kind}: {check:?}");
            assert!(
                check.max_rel_err <= 1e-4,
                "{kind} bipartite={bipartite}: {check:?}"
            );
        }
    }
}

#[test]
fn parameters_unused_by_the_ablation_get_zero_gradient() {
    let mut rng = rng_from(4);
    let p = params(8, true, 3);
    let g = random_graph(&mut rng, 6, 0, 5, true);
    let q = vec![targets(&mut rng, 5)];
    let step = loss_and_grad(
        &p,
        &Batch::new(&[&g]).unwrap(),
        &q,
        1.0,
        LossKind::SoftBinaryEntropy,
    )
    .unwrap();
    for (t, grad) in p.tensors.iter().zip(&step.grads) {
        let unused = t.name.starts_with("emb.cons")
            || ["v2c", "c2v", "k2c", "c2k"]
                .iter()
                .any(|c| t.name.starts_with(&format!("conv.{c}.")));
        let zero = grad.iter().all(|&v| v == 0.0);
        assert_eq!(unused, zero, "{}", t.name);
    }
}

#[test]
fn duplicating_a_sample_doubles_the_gradient() {
    let mut rng = rng_from(6);
    let p = params(8, false, 5);
    let g = random_graph(&mut rng, 6, 4, 5, false);
    let q = targets(&mut rng, 5);
    let one = loss_and_grad(
        &p,
        &Batch::new(&[&g]).unwrap(),
        std::slice::from_ref(&q),
        1.0,
        LossKind::SoftBinaryEntropy,
    )
    .unwrap();
    let two = loss_and_grad(
        &p,
        &Batch::new(&[&g, &g]).unwrap(),
        &[q.clone(), q],
        1.0,
        LossKind::SoftBinaryEntropy,
    )
    .unwrap();
    assert!((two.loss - 2.0 * one.loss).abs() < 1e-9);
    for (a, b) in one.grads.iter().zip(&two.grads) {
        for (x, y) in a.iter().zip(b) {
            assert!((2.0 * x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{x} {y}");
        }
    }
}

#[test]
fn schema_mismatch_is_reported() {
    let mut rng = rng_from(1);
    let p = params(8, false, 1);
    let g = random_graph(&mut rng, 4, 0, 3, true);
    let err = forward(&p, &Batch::new(&[&g]).unwrap(), Mode::Infer)
        .err()
        .unwrap();
    assert!(matches!(err, ModelError::SchemaMismatch(_)));
    let mut g = random_graph(&mut rng, 4, 2, 3, false);
    g.feature_schema_version += 1;
    let err = forward(&p, &Batch::new(&[&g]).unwrap(), Mode::Infer)
        .err()
        .unwrap();
    assert!(matches!(err, ModelError::SchemaMismatch(_)));
    assert!(matches!(Batch::new(&[]), Err(ModelError::EmptyBatch)));
}

#[test]
fn forward_is_deterministic() {
    let mut rng = rng_from(2);
    let p = params(16, false, 9);
    let g = random_graph(&mut rng, 6, 4, 5, false);
    let b = Batch::new(&[&g]).unwrap();
    let x = forward(&p, &b, Mode::Train).unwrap().scores();
    let y = forward(&p, &b, Mode::Train).unwrap().scores();
    assert_eq!(x, y);
}
