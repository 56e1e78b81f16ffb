//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Exits non-zero when any criterion fails.

mod oracles;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cutlab_core::episode::{collect, rollout_stalling, CollectConfig, RolloutConfig, Sample};
use cutlab_core::generators::{generate, Family, GenSpec};
use cutlab_core::graph::{encode, encode_bipartite, TripartiteGraph};
use cutlab_core::lp::{solve_lp, solve_milp_bnb, BnbError, LpStatus, Simplex};
use cutlab_core::metrics::{
    bound_fulfillment, choose_on_sample, compare, CompareConfig, EvalInstance,
};
use cutlab_core::milp::{normalize, LpRelaxation, MilpInstance, Row};
use cutlab_core::scorers::{
    efficacy, score_pool, DefaultWeights, ScoreContext, ScorerKind, INFEASIBLE_SENTINEL,
};
use cutlab_core::seed::{derive_seed_path, rng_from};
use cutlab_core::separators::separate;
use neuralcut::diagnostics::{duplicate_cut, gradient_check, permute_graph};
use neuralcut::loss::{loss, LossKind};
use neuralcut::model::{forward, Batch, Mode};
use neuralcut::params::{ModelConfig, PolicyParams};
use neuralcut::train::{
    encode_samples, evaluate_bound_fulfillment, init_params, smoothed, train, TrainConfig,
};
use oracles::{brute_force_binary, feasible_points, golden_min, vertex_enumeration, Oracle};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn relax(inst: &MilpInstance) -> LpRelaxation {
    LpRelaxation::new(Arc::new(normalize(inst).unwrap())).unwrap()
}

fn small_spec(family: Family, seed: u64, count: usize) -> GenSpec {
    let mut spec = GenSpec::new(family, seed, count);
    match family {
        Family::MaxCut => {
            spec.sizes.vertices = Some(7);
            spec.sizes.edges = Some(12);
        }
        Family::Packing => {
            spec.sizes.n = Some(10);
            spec.sizes.m = Some(6);
        }
        Family::BinPacking => {
            spec.sizes.n = Some(5);
            spec.sizes.m = Some(5);
        }
        Family::Planning => spec.sizes.horizon = Some(6),
    }
    spec
}

// ---------------------------------------------------------------- 1

fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize, open: bool) -> MilpInstance {
    let obj = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let mut inst = MilpInstance::new("r", obj);
    for j in 0..n {
        inst.var_lower[j] = rng.gen_range(-3..=0) as f64;
        inst.var_upper[j] = rng.gen_range(1..=4) as f64;
        if open && rng.gen_bool(0.3) {
            inst.var_upper[j] = f64::INFINITY;
        }
        if open && rng.gen_bool(0.15) {
            inst.var_lower[j] = f64::NEG_INFINITY;
        }
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| {
                let v = rng.gen_range(-4..=4);
                (v != 0).then_some((j, v as f64))
            })
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        inst.rows
            .push(Row::le(coeffs, rng.gen_range(-6..=8) as f64).unwrap());
    }
    inst
}

fn lp_vs_vertex_enumeration() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_from(101);
    let (mut worst, mut agree, mut counts) = (0.0f64, 0usize, [0usize; 3]);
    let total = 500;
    for i in 0..total {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=8);
        let inst = random_lp(&mut rng, n, m, i % 4 == 3);
        let s = solve_lp(&relax(&inst)).unwrap();
        let ok = match (vertex_enumeration(&inst), s.status) {
            (Oracle::Optimal(z), LpStatus::Optimal) => {
                counts[0] += 1;
                worst = worst.max((s.objective - z).abs());
                (s.objective - z).abs() <= 1e-7
            }
            (Oracle::Infeasible, LpStatus::Infeasible) => {
                counts[1] += 1;
                true
            }
            (Oracle::Unbounded, LpStatus::Unbounded) => {
                counts[2] += 1;
                true
            }
            _ => false,
        };
        agree += ok as usize;
    }
    let el = t.elapsed();
    verdict(
        agree == total && within(el, 60),
        format!(
            "{agree}/{total} agree ({} optimal, {} infeasible, {} unbounded), max |dz| {worst:.1e}, {:.1}s",
            counts[0],
            counts[1],
            counts[2],
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn bnb_vs_enumeration() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_from(202);
    let (mut agree, mut infeasible) = (0, 0);
    let total = 200;
    for trial in 0..total {
        let n = if trial == 0 {
            10
        } else {
            rng.gen_range(2..=10)
        };
        let obj = (0..n).map(|_| rng.gen_range(-9..=9) as f64).collect();
        let mut inst = MilpInstance::new(format!("b{trial}"), obj);
        inst.var_upper = vec![1.0; n];
        inst.integrality = (0..n).collect();
        for _ in 0..rng.gen_range(1..=5) {
            let coeffs: Vec<(usize, f64)> = (0..n)
                .filter_map(|j| {
                    let v = rng.gen_range(-5..=7);
                    (v != 0).then_some((j, v as f64))
                })
                .collect();
            if !coeffs.is_empty() {
                inst.rows
                    .push(Row::le(coeffs, rng.gen_range(-2..=10) as f64).unwrap());
            }
        }
        let ok = match (brute_force_binary(&inst), solve_milp_bnb(&inst, 100_000)) {
            (Some(z), Ok(b)) => b.proved_optimal && b.z_opt == z,
            (None, Err(BnbError::Infeasible)) => {
                infeasible += 1;
                true
            }
            _ => false,
        };
        agree += ok as usize;
    }
    let el = t.elapsed();
    verdict(
        agree == total && within(el, 120),
        format!(
            "{agree}/{total} exact ({infeasible} infeasible), {:.1}s",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Bounded integer program; `mixed` appends one continuous variable.
fn small_integer_program(rng: &mut ChaCha8Rng, mixed: bool) -> MilpInstance {
    let n_int = rng.gen_range(2..=5);
    let n = n_int + mixed as usize;
    let obj = (0..n).map(|_| rng.gen_range(-9..=5) as f64).collect();
    let mut inst = MilpInstance::new("v", obj);
    for j in 0..n_int {
        inst.var_upper[j] = rng.gen_range(1..=3) as f64;
    }
    if mixed {
        inst.var_upper[n_int] = rng.gen_range(1..=4) as f64;
    }
    inst.integrality = (0..n_int).collect();
    for _ in 0..rng.gen_range(1..=4) {
        let coeffs: Vec<(usize, f64)> = (0..n)
            .filter_map(|j| {
                let v = rng.gen_range(-4..=6);
                (v != 0).then_some((j, v as f64))
            })
            .collect();
        if !coeffs.is_empty() {
            inst.rows
                .push(Row::le(coeffs, rng.gen_range(2..=12) as f64).unwrap());
        }
    }
    inst
}

fn cut_validity() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_from(303);
    let (mut instances, mut cuts, mut bad) = (0, 0, Vec::new());
    let mut worst_slack = f64::NEG_INFINITY;
    let mut min_violation = f64::INFINITY;
    let mut tries = 0;
    while instances < 100 && tries < 5000 {
        tries += 1;
        let inst = small_integer_program(&mut rng, tries % 3 == 0);
        let points = feasible_points(&inst);
        if points.is_empty() {
            continue;
        }
        let mut r = relax(&inst);
        let mut used = false;
        for _round in 0..3 {
            let sol = solve_lp(&r).unwrap();
            if !sol.is_optimal() || sol.is_integral(&inst.integrality) {
                break;
            }
            let pool = separate(&sol, &r).unwrap();
            if pool.is_empty() {
                break;
            }
            used = true;
            for c in &pool.cuts {
                cuts += 1;
                let v = c.violation(&sol.primal);
                min_violation = min_violation.min(v);
                let slack = points
                    .iter()
                    .map(|p| c.violation(p))
                    .fold(f64::NEG_INFINITY, f64::max);
                worst_slack = worst_slack.max(slack);
                if v <= 1e-6 || slack > 1e-6 {
                    bad.push(format!(
                        "try {tries}: violation {v:.2e}, worst point {slack:.2e}"
                    ));
                }
            }
            let best = pool
                .cuts
                .iter()
                .max_by(|a, b| {
                    let ea = efficacy(&a.row, &sol.primal).unwrap_or(0.0);
                    let eb = efficacy(&b.row, &sol.primal).unwrap_or(0.0);
                    ea.total_cmp(&eb)
                })
                .unwrap();
            r.push_cut(best.row.clone()).unwrap();
        }
        instances += used as usize;
    }
    let el = t.elapsed();
    verdict(
        instances >= 100 && bad.is_empty() && within(el, 120),
        format!(
            "{instances} instances, {cuts} cuts, min violation at x* {min_violation:.2e}, max activity excess over feasible points {worst_slack:.2e}, {} invalid{}, {:.1}s",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default(),
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn lookahead_properties() -> Verdict {
    let t = Instant::now();
    let (mut pools, mut evals, mut negative, mut cold_checked) = (0usize, 0usize, 0usize, 0usize);
    let mut worst_cold = 0.0f64;
    let mut seed = 0;
    'outer: loop {
        for family in Family::ALL {
            for inst in generate(&small_spec(family, 400 + seed, 5)) {
                let mut r = relax(&inst);
                let mut sx = Simplex::new(&r);
                if sx.solve().unwrap() != LpStatus::Optimal {
                    continue;
                }
                let mut rng = rng_from(derive_seed_path(seed, &[pools as u64]));
                for _round in 0..30 {
                    let sol = sx.solution();
                    if sol.is_integral(&r.base.integrality) {
                        break;
                    }
                    let pool = separate(&sol, &r).unwrap();
                    if pool.is_empty() {
                        break;
                    }
                    let ctx = ScoreContext::new(&sol, &r, 0).with_warm(&sx);
                    let la = score_pool(&ScorerKind::Lookahead, &pool, &ctx).unwrap();
                    pools += 1;
                    evals += la.len();
                    negative += la.iter().filter(|&&v| !(v >= 0.0)).count();
                    for (c, &s) in pool.cuts.iter().zip(&la) {
                        let cold = solve_lp(&r.append_cut(c.row.clone()).unwrap()).unwrap();
                        let expect = match cold.status {
                            LpStatus::Optimal => (cold.objective - sol.objective).max(0.0),
                            LpStatus::Infeasible => INFEASIBLE_SENTINEL,
                            LpStatus::Unbounded => 0.0,
                        };
                        worst_cold = worst_cold.max((expect - s).abs());
                        cold_checked += 1;
                    }
                    let pick = pool.cuts[rng.gen_range(0..pool.len())].row.clone();
                    sx.add_row(&pick);
                    r.push_cut(pick).unwrap();
                    if sx.resolve().unwrap() != LpStatus::Optimal {
                        break;
                    }
                    sx.refresh().unwrap();
                    if pools >= 10_000 {
                        break 'outer;
                    }
                }
            }
        }
        seed += 1;
    }
    let instances: Vec<MilpInstance> = Family::ALL
        .iter()
        .flat_map(|&f| generate(&small_spec(f, 450, 10)))
        .collect();
    let samples = collect(
        &instances,
        &CollectConfig {
            seed: 4,
            ..CollectConfig::default()
        },
    );
    let (mut bf_n, mut bf_bad) = (0, 0);
    for (i, s) in samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_degenerate())
    {
        let chosen = choose_on_sample(&ScorerKind::Lookahead, s, i as u64).unwrap();
        bf_n += 1;
        bf_bad += (bound_fulfillment(s, chosen).unwrap() != 1.0) as usize;
    }
    let el = t.elapsed();
    verdict(
        pools >= 10_000 && negative == 0 && worst_cold <= 1e-8 && bf_n > 0 && bf_bad == 0,
        format!(
            "{pools} pools / {evals} cut scores, {negative} negative; warm vs cold max |d| {worst_cold:.1e} over {cold_checked} cuts; bound fulfillment 1 on {}/{bf_n} samples, {:.1}s",
            bf_n - bf_bad,
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn with_optimum(instances: Vec<MilpInstance>) -> Vec<EvalInstance> {
    instances
        .into_iter()
        .filter_map(|inst| {
            let norm = normalize(&inst).ok()?;
            let b = solve_milp_bnb(&norm, 100_000).ok()?;
            Some(EvalInstance {
                instance: norm,
                z_opt: b.z_opt,
            })
        })
        .collect()
}

/// Paired mean and standard error of `a − factor · b` over finite pairs.
fn paired(a: &[f64], b: &[f64], factor: f64) -> (f64, f64, usize) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| x - factor * y)
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt(), d.len())
}

fn lookahead_beats_baselines() -> Verdict {
    let t = Instant::now();
    let instances = with_optimum(generate(&GenSpec::new(Family::BinPacking, 505, 50)));
    let scorers = [
        ScorerKind::Lookahead,
        ScorerKind::DefaultScore(DefaultWeights::default()),
        ScorerKind::Random,
    ];
    let report = compare(
        &scorers,
        &instances,
        &[],
        &CompareConfig {
            rounds: 30,
            seed: 5,
            ..CompareConfig::default()
        },
    );
    let la = &report.get("lookahead").unwrap().per_instance;
    let def = &report.get("default").unwrap().per_instance;
    let rnd = &report.get("random").unwrap().per_instance;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (d1, s1, n) = paired(la, def, 1.0);
    let (d2, s2, _) = paired(la, rnd, 1.0);
    let (d3, s3, _) = paired(la, rnd, 0.8);
    let el = t.elapsed();
    verdict(
        n >= 50 && d1 < 2.0 * s1 && d2 < 2.0 * s2 && d3 < 2.0 * s3 && within(el, 1800),
        format!(
            "n {n}; reversed IGC integral lookahead {:.3}, default {:.3}, random {:.3}; LA-default {d1:+.3} (2se {:.3}), LA-random {d2:+.3} (2se {:.3}), LA-0.8*random {d3:+.3} (2se {:.3}); {:.0}s",
            mean(la),
            mean(def),
            mean(rnd),
            2.0 * s1,
            2.0 * s2,
            2.0 * s3,
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn random_bound_fulfillment(samples: &[Sample], repeats: u64) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for rep in 0..repeats {
        for (i, s) in samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_degenerate())
        {
            let chosen =
                choose_on_sample(&ScorerKind::Random, s, derive_seed_path(rep, &[i as u64]))
                    .unwrap();
            total += bound_fulfillment(s, chosen).unwrap();
            n += 1;
        }
    }
    total / n as f64
}

fn imitation_learning() -> Verdict {
    let t = Instant::now();
    let all = generate(&GenSpec::new(Family::BinPacking, 606, 270));
    let (train_inst, test_inst) = all.split_at(220);
    let train_samples = collect(
        train_inst,
        &CollectConfig {
            seed: 3,
            ..CollectConfig::default()
        },
    );
    let test_samples = collect(
        test_inst,
        &CollectConfig {
            seed: 4,
            ..CollectConfig::default()
        },
    );
    let config = TrainConfig {
        seed: 6,
        epochs: 32,
        ..TrainConfig::default()
    };
    let outcome = match train(&train_samples, &config, &[]) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("training failed: {e}")),
    };
    let test_enc = encode_samples(&test_samples, false);
    let trained = evaluate_bound_fulfillment(&outcome.params, &test_samples, &test_enc, 7)
        .unwrap()
        .unwrap();
    let init = evaluate_bound_fulfillment(&init_params(&config), &test_samples, &test_enc, 7)
        .unwrap()
        .unwrap();
    let random = random_bound_fulfillment(&test_samples, 5);
    let losses: Vec<f64> = outcome.curve.iter().map(|r| r.train_loss).collect();
    let smooth = smoothed(&losses, 1);
    let decreasing = smooth[..10].windows(2).all(|w| w[1] < w[0]);
    let el = t.elapsed();
    verdict(
        outcome.n_train >= 2000
            && trained >= random + 0.15
            && trained > init
            && decreasing
            && within(el, 7200),
        format!(
            "{} training samples ({} collected), {} test; test bound fulfillment trained {trained:.3}, init {init:.3}, random {random:.3}; smoothed loss {:.4} -> {:.4} over epochs 1-10 ({}), final {:.4}; {:.0}s",
            outcome.n_train,
            train_samples.len(),
            test_enc.len(),
            smooth[0],
            smooth[9],
            if decreasing { "decreasing" } else { "not decreasing" },
            losses.last().unwrap(),
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 7, 8

/// Encoded root states of small generated instances, cycling through the
/// families.
fn toy_graphs(count: usize, seed: u64, bipartite: impl Fn(usize) -> bool) -> Vec<TripartiteGraph> {
    let mut out = Vec::new();
    let mut k = 0u64;
    while out.len() < count {
        let family = Family::ALL[k as usize % 4];
        let inst = generate(&small_spec(family, seed + k, 1)).remove(0);
        k += 1;
        let r = relax(&inst);
        let sol = solve_lp(&r).unwrap();
        if !sol.is_optimal() {
            continue;
        }
        let pool = separate(&sol, &r).unwrap();
        if pool.is_empty() {
            continue;
        }
        let g = if bipartite(out.len()) {
            encode_bipartite(&pool, &r, &sol)
        } else {
            encode(&pool, &r, &sol)
        };
        out.push(g.unwrap());
    }
    out
}

fn model_params(hidden: usize, bipartite: bool, seed: u64) -> PolicyParams {
    let config = ModelConfig {
        hidden,
        bipartite,
        ..ModelConfig::default()
    };
    PolicyParams::init(config, &mut rng_from(seed))
}

fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    q[rng.gen_range(0..n)] = 1.0;
    q
}

fn gradient_checks() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_from(707);
    let mut worst = 0.0f64;
    let mut min_probes = usize::MAX;
    let mut total = 0;
    let mut worst_at = String::new();
    for bipartite in [false, true] {
        let graphs = toy_graphs(3, 700 + bipartite as u64 * 50, |_| bipartite);
        let refs: Vec<&TripartiteGraph> = graphs.iter().collect();
        let batch = Batch::new(&refs).unwrap();
        let targets: Vec<Vec<f64>> = graphs
            .iter()
            .map(|g| random_targets(&mut rng, g.n_cuts()))
            .collect();
        for (k, kind) in LossKind::ALL.into_iter().enumerate() {
            let p = model_params(8, bipartite, 70 + k as u64);
            let gc = gradient_check(&p, &batch, &targets, kind, 250, 1e-5, 71 + k as u64).unwrap();
            total += gc.probes;
            min_probes = min_probes.min(gc.probes);
            if gc.max_rel_err > worst {
                worst = gc.max_rel_err;
                worst_at = format!(
                    "{kind}{} {}",
                    if bipartite { " bipartite" } else { "" },
                    gc.worst
                );
            }
        }
    }
    let el = t.elapsed();
    verdict(
        worst <= 1e-4 && min_probes >= 200 && within(el, 60),
        format!(
            "{total} probes over 4 losses x 2 graph types (min {min_probes} per check), max relative error {worst:.2e} ({worst_at}), {:.1}s",
            el.as_secs_f64()
        ),
    )
}

fn equivariance() -> Verdict {
    let t = Instant::now();
    let mut rng = rng_from(808);
    let graphs = toy_graphs(100, 800, |i| i % 4 == 3);
    let (mut worst_perm, mut worst_dup) = (0.0f64, 0.0f64);
    for (case, g) in graphs.iter().enumerate() {
        let p = model_params(16, g.bipartite, case as u64);
        let shuffle = |rng: &mut ChaCha8Rng, n: usize| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(rng);
            v
        };
        let pv = shuffle(&mut rng, g.n_vars());
        let pc = shuffle(&mut rng, g.n_cons());
        let pk = shuffle(&mut rng, g.n_cuts());
        let h = permute_graph(g, &pv, &pc, &pk);
        let src = rng.gen_range(0..g.n_cuts());
        let d = duplicate_cut(g, src);
        for mode in [Mode::Train, Mode::Infer] {
            let a = forward(&p, &Batch::new(&[g]).unwrap(), mode)
                .unwrap()
                .scores();
            let b = forward(&p, &Batch::new(&[&h]).unwrap(), mode)
                .unwrap()
                .scores();
            for i in 0..g.n_cuts() {
                worst_perm = worst_perm.max((a[i] - b[pk[i]]).abs());
            }
            let s = forward(&p, &Batch::new(&[&d]).unwrap(), mode)
                .unwrap()
                .scores();
            worst_dup = worst_dup.max((s[src] - s[g.n_cuts()]).abs());
        }
    }
    let el = t.elapsed();
    verdict(
        worst_perm <= 1e-6 && worst_dup <= 1e-6,
        format!(
            "100 graphs in train and inference mode: max permuted score difference {worst_perm:.1e}, max duplicate score difference {worst_dup:.1e}, {:.1}s",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn loss_landscape() -> Verdict {
    let mut rng = rng_from(909);
    let mut worst_min = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let mut la: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        if rng.gen_bool(0.3) {
            la[rng.gen_range(0..n)] = 0.0;
        }
        la[rng.gen_range(0..n)] = rng.gen_range(0.5..5.0);
        let best = la.iter().copied().fold(0.0, f64::max);
        let mut s = vec![0.5; n];
        for i in 0..n {
            let f = |v: f64| {
                let mut t = s.clone();
                t[i] = v;
                loss(&t, &la, LossKind::SoftBinaryEntropy).unwrap()
            };
            s[i] = golden_min(f, 1e-12, 1.0 - 1e-12);
        }
        for (si, li) in s.iter().zip(&la) {
            worst_min = worst_min.max((si - li / best).abs());
        }
    }
    let mut worst_ln2 = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let mut la: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        la[rng.gen_range(0..n)] = 1.0;
        let l = loss(&vec![0.5; n], &la, LossKind::SoftBinaryEntropy).unwrap();
        worst_ln2 = worst_ln2.max((l - std::f64::consts::LN_2).abs());
    }
    verdict(
        worst_min <= 1e-3 && worst_ln2 <= 1e-12,
        format!(
            "minimizer distance to q over 100 pools {worst_min:.1e}; |L(0.5) - ln 2| over 100 binary pools {worst_ln2:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 10

fn stall_sweep() -> Verdict {
    let t = Instant::now();
    let eps = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let mut instances = Vec::new();
    for family in Family::ALL {
        let mut spec = GenSpec::new(family, 1010, 5);
        spec.sizes.n = Some(20);
        spec.sizes.m = Some(if family == Family::BinPacking { 8 } else { 20 });
        spec.sizes.horizon = Some(20);
        instances.extend(with_optimum(generate(&spec)));
    }
    let mut violations = Vec::new();
    let mut runs = 0;
    let mut example = String::new();
    for (i, e) in instances.iter().enumerate() {
        for kind in [
            ScorerKind::DefaultScore(DefaultWeights::default()),
            ScorerKind::Random,
        ] {
            let config = RolloutConfig {
                seed: derive_seed_path(1010, &[i as u64]),
                ..RolloutConfig::default()
            };
            let counts: Vec<usize> = eps
                .iter()
                .map(|&ep| {
                    rollout_stalling(&e.instance, e.z_opt, &kind, ep, 10, 200, &config)
                        .unwrap()
                        .n_cuts()
                })
                .collect();
            runs += 1;
            if i == 0 && example.is_empty() {
                example = format!("{counts:?}");
            }
            if counts.windows(2).any(|w| w[1] > w[0]) {
                violations.push(format!("{} {kind}: {counts:?}", e.instance.name));
            }
        }
    }
    let el = t.elapsed();
    verdict(
        violations.is_empty() && runs > 0,
        format!(
            "{runs} instance/scorer sweeps over {} instances, K = 10, cap 200: {} non-monotone{}; e.g. {example}; {:.1}s",
            instances.len(),
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default(),
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 11

fn cutlab(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cutlab"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "cutlab {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn replay_identical() -> Verdict {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| tmp.path().join("run").join(name);
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let model = format!("policy:{}", s(run("train").join("model.ncut")));
    let steps: Vec<(&str, Vec<String>)> = vec![
        (
            "generate",
            [
                "generate",
                "--family",
                "binpacking",
                "--count",
                "4",
                "--n",
                "8",
                "--m",
                "8",
            ]
            .map(String::from)
            .to_vec(),
        ),
        (
            "collect",
            vec![
                "collect".into(),
                "--instances".into(),
                s(run("generate").join("instances")),
                "--iters".into(),
                "5".into(),
            ],
        ),
        (
            "train",
            vec![
                "train".into(),
                "--samples".into(),
                s(run("collect").join("samples.jsonl")),
                "--epochs".into(),
                "2".into(),
                "--hidden".into(),
                "8".into(),
            ],
        ),
        (
            "rollout",
            vec![
                "rollout".into(),
                "--instances".into(),
                s(run("generate").join("instances")),
                "--scorers".into(),
                format!("default,random,lookahead,{model}"),
                "--rounds".into(),
                "10".into(),
            ],
        ),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, args) in &steps {
        let mut full: Vec<String> = args.clone();
        full.extend(["--seed", "11", "--jobs", "1", "--out"].map(String::from));
        full.push(s(run(name)));
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        if let Err(e) = cutlab(&refs) {
            return verdict(false, e);
        }
        let again = tmp.path().join("replay").join(name);
        let manifest = s(run(name).join("manifest.toml"));
        if let Err(e) = cutlab(&["replay", &manifest, "--out", &s(again.clone())]) {
            return verdict(false, e);
        }
        let (a, b) = (files_under(&run(name)), files_under(&again));
        if a != b {
            mismatches.push(format!("{name}: file sets differ"));
            continue;
        }
        for f in &a {
            compared += 1;
            if std::fs::read(run(name).join(f)).unwrap() != std::fs::read(again.join(f)).unwrap() {
                mismatches.push(format!("{name}/{}", f.display()));
            }
        }
    }
    let el = t.elapsed();
    verdict(
        mismatches.is_empty() && compared > 0,
        format!(
            "{compared} files across generate, collect, train and rollout replays, {} differ{}; {:.1}s",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default(),
            el.as_secs_f64()
        ),
    )
}

fn main() {
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let criteria: [(&str, fn() -> Verdict); 11] = [
        (
            "LP solver matches vertex enumeration",
            lp_vs_vertex_enumeration,
        ),
        ("branch and bound matches enumeration", bnb_vs_enumeration),
        ("Gomory cuts are valid and violated", cut_validity),
        (
            "lookahead scores: sign, warm start, bound fulfillment",
            lookahead_properties,
        ),
        (
            "lookahead beats default and random rollouts",
            lookahead_beats_baselines,
        ),
        ("imitation learning beats random", imitation_learning),
        (
            "backpropagation matches finite differences",
            gradient_checks,
        ),
        ("permutation equivariance and duplicate cuts", equivariance),
        ("soft binary entropy landscape", loss_landscape),
        ("stalling rule is monotone in epsilon", stall_sweep),
        ("manifest replay is byte-identical", replay_identical),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let v = check();
        failed += !v.pass as usize;
        println!(
            "criterion {k:>2} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
