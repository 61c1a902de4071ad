//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gating criterion fails.

use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use pushrank::config::{DataBias, ExperimentConfig, VariantConfig};
use pushrank::experiment::run_experiment;
use pushrank::losses::{
    er_loss, er_weight, kos_auc_loss, p_top, pairwise_hinge, LossKind, LossSpec, PseudoCandidateSet,
    DEFAULT_ER_FLOOR,
};
use pushrank::report::REPORT_JSON;
use pushrank::scorer::{finite_difference_grads, init_params, Activation, GRAD_CHECK_STEP};
use pushrank::simulator::{
    evaluate_policies, generate_log, LoggingPolicy, Policy, SimConfig, UniformRandom,
};
use pushrank::stats::{fit_beta_mle, sample_beta, BetaParams, SeededRng};
use pushrank::trainer::{build_pseudo_sets, BatchObjective, TrainingExample};
use pushrank::{N_FEATURES, N_USER_TYPES};
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let specs = [
        LossSpec::default_for(LossKind::PointwiseCe),
        LossSpec::default_for(LossKind::PointwiseL2),
        LossSpec::default_for(LossKind::PairwiseHinge),
        LossSpec::default_for(LossKind::KosAuc),
        LossSpec { cap_k: 0.3, ..LossSpec::default_for(LossKind::KosAuc) },
        LossSpec::default_for(LossKind::ExpectedRegret),
    ];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for net_seed in 0..5u64 {
        let params = init_params(&[12, 8, 4, 1], Activation::Sigmoid, 100 + net_seed).unwrap();
        let mut rng = SeededRng::new(200 + net_seed);
        let n = 32;
        let user_types: Vec<usize> = (0..n).map(|_| rng.index(3)).collect();
        let labels: Vec<u8> = (0..n).map(|_| (rng.uniform() < 0.4) as u8).collect();
        let mut inputs = Array2::zeros((n, 12));
        for (i, mut row) in inputs.rows_mut().into_iter().enumerate() {
            row[user_types[i]] = 1.0;
            for f in 0..N_FEATURES {
                row[N_USER_TYPES + f] = rng.uniform() * 4.0 - 2.0;
            }
        }
        let scores = params.forward_batch(inputs.view()).unwrap();
        for spec in specs {
            let objective =
                BatchObjective::new(spec, &labels, &user_types, scores.as_slice().unwrap(), 60).unwrap();
            let (_, analytic) = params.forward_backward(inputs.view(), |s| objective.evaluate(s)).unwrap();
            let numeric = finite_difference_grads(&params, GRAD_CHECK_STEP, |p| {
                let s = p.forward_batch(inputs.view())?;
                Ok(objective.evaluate(s.as_slice().unwrap())?.0)
            })
            .unwrap();
            let (mut a, mut nm) = (analytic.flat_values(), numeric.flat_values());
            let shift_invariant = matches!(spec.kind, LossKind::PairwiseHinge | LossKind::KosAuc);
            if shift_invariant {
                // The output bias moves every score equally, so its true
                // gradient is zero and both estimates are pure round-off.
                let (ab, nb) = (a.pop().unwrap(), nm.pop().unwrap());
                if ab.abs() > 1e-12 || nb.abs() > 1e-9 {
                    failures.push(format!("{:?} (net {net_seed}): output bias {ab:e} / {nb:e}", spec.kind));
                }
            }
            let err = a
                .iter()
                .zip(&nm)
                .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
                .fold(0.0, f64::max);
            worst = worst.max(err);
            if err >= 1e-5 {
                failures.push(format!("{:?} (net {net_seed}): {err:.2e}", spec.kind));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 10.0,
        format!("max relative error {worst:.2e} over 5 nets x 6 losses in {secs:.2}s; zero output-bias gradient checked for shift-invariant losses {failures:?}"),
    )
}

fn random_set(rng: &mut SeededRng) -> (PseudoCandidateSet, Vec<f64>) {
    let n_pos = 1 + rng.index(5);
    let n_neg = 1 + rng.index(8);
    let mut idx: Vec<usize> = (0..n_pos + n_neg).collect();
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.index(i + 1));
    }
    let scores = (0..idx.len()).map(|_| rng.uniform() * 4.0 - 2.0).collect();
    let set = PseudoCandidateSet {
        user_type: rng.index(N_USER_TYPES),
        positives: idx[..n_pos].to_vec(),
        negatives: idx[n_pos..].to_vec(),
    };
    (set, scores)
}

fn reduction_oracles() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let (mut kos_gap, mut er_gap) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (set, scores) = random_set(&mut rng);
        let mut summed = 0.0;
        for &p in &set.positives {
            for &n in &set.negatives {
                summed += pairwise_hinge(scores[p], scores[n]).unwrap().0;
            }
        }
        let kos = kos_auc_loss(&set, &scores, 1.0).unwrap().0;
        kos_gap = kos_gap.max((kos - summed / set.positives.len() as f64).abs());
        let c = 0.05 + rng.uniform();
        let er = er_loss(&set, &scores, &vec![c; set.pair_count()]).unwrap().0;
        er_gap = er_gap.max((er - c * summed).abs());
    }
    outcome(
        kos_gap <= 1e-12 && er_gap <= 1e-12,
        format!("1000 sets: K-OS(cap 1) gap {kos_gap:.1e}, constant-weight ER gap {er_gap:.1e}"),
    )
}

fn er_weight_vector() -> Outcome {
    let w = er_weight(0.3, 0.1, 0.5, 3, DEFAULT_ER_FLOOR).unwrap();
    // 0.3 - 0.1 is not exactly 0.2 in binary floating point.
    let unit = w == 0.25 * (0.3 - 0.1) && (w - 0.05).abs() <= 1e-16;
    let mut rng = SeededRng::new(3);
    let ptop_one = (0..100).all(|_| p_top(rng.uniform(), 1).unwrap() == 1.0);
    let floored = (0..100).all(|_| {
        let neg = rng.uniform();
        let pos = neg * rng.uniform();
        let f = rng.uniform();
        er_weight(pos, neg, f, 1 + rng.index(60), DEFAULT_ER_FLOOR).unwrap() == DEFAULT_ER_FLOOR
    });
    outcome(
        unit && ptop_one && floored,
        format!("er_weight = {w:?}, p_top(n=1) == 1: {ptop_one}, negative-regret pairs floored: {floored}"),
    )
}

fn beta_recovery() -> Outcome {
    let start = Instant::now();
    let grid = [0.5, 1.0, 2.0, 5.0];
    let mut worst = 0.0f64;
    for &a in &grid {
        for &b in &grid {
            let truth = BetaParams::new(a, b).unwrap();
            let (mut err_a, mut err_b) = (0.0, 0.0);
            for seed in 0..5u64 {
                let mut rng = SeededRng::new(seed * 1000 + (a * 10.0) as u64 * 7 + (b * 10.0) as u64);
                let xs: Vec<f64> = (0..100_000).map(|_| sample_beta(truth, &mut rng)).collect();
                let fit = fit_beta_mle(&xs).unwrap();
                err_a += (fit.alpha_shape - a).abs() / a / 5.0;
                err_b += (fit.beta_shape - b).abs() / b / 5.0;
            }
            worst = worst.max(err_a).max(err_b);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 0.05 && secs < 30.0,
        format!("worst mean relative error {:.3}% over 16 (alpha, beta) pairs in {secs:.1}s", worst * 100.0),
    )
}

fn simulator_statistics() -> Outcome {
    let sim = SimConfig::default();
    let mut oracle_rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
    let dist = Beta::new(2.0, 5.0).unwrap();
    let draws = 400_000;
    let mut max_sum = 0.0;
    for _ in 0..draws {
        let mut m = 0.0f64;
        for _ in 0..sim.n_candidates {
            m = m.max(dist.sample(&mut oracle_rng));
        }
        max_sum += m;
    }
    let oracle = max_sum / draws as f64 - 2.0 / 7.0;
    let policies: [&dyn Policy; 1] = [&UniformRandom];
    let eval = evaluate_policies(
        &sim,
        &policies,
        50_000,
        &mut SeededRng::with_stream(5, 1),
        &mut SeededRng::with_stream(5, 2),
    )
    .unwrap();
    let simulated = eval.mean_regret[0];
    let rel = (simulated - oracle).abs() / oracle;

    let logger = init_params(&[12, 16, 1], Activation::Sigmoid, 8).unwrap();
    let log = generate_log(&sim, LoggingPolicy::EpsilonGreedy(&logger), &mut SeededRng::new(6)).unwrap();
    let explored = log.iter().filter(|e| e.explored).count() as f64 / log.len() as f64;
    outcome(
        rel < 0.01 && (explored - 0.14).abs() <= 0.005,
        format!(
            "uniform regret {simulated:.5} vs oracle {oracle:.5} ({:.3}% off); explored fraction {explored:.4} of {}",
            rel * 100.0,
            log.len()
        ),
    )
}

fn unbiased_direction() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let report = run_experiment(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let random = report.uniform_random.mean_regret;
    let all_better = report.variants.iter().all(|v| v.mean_regret <= 0.8 * random);
    let pw = report.variant("pointwise").unwrap();
    let er = report.variant("expected_regret").unwrap();
    let wins = er
        .per_seed_regret
        .iter()
        .zip(&pw.per_seed_regret)
        .filter(|(e, p)| e <= p)
        .count();
    let rows: Vec<String> = report
        .variants
        .iter()
        .map(|v| format!("{} {:.5}", v.name, v.mean_regret))
        .collect();
    outcome(
        all_better && er.mean_regret <= pw.mean_regret && wins >= 7 && secs < 900.0,
        format!(
            "random {random:.5}; {}; ER <= pointwise in {wins}/10 seeds, ER gain {:.2}%; {secs:.0}s",
            rows.join(", "),
            er.gain_pct
        ),
    )
}

fn biased_direction() -> Outcome {
    let mut config = ExperimentConfig::default();
    config.data_bias = DataBias::Biased;
    config.variants.retain(|v: &VariantConfig| v.name == "pointwise" || v.name == "kos_auc");
    let report = run_experiment(&config).unwrap();
    let pw = report.variant("pointwise").unwrap();
    let kos = report.variant("kos_auc").unwrap();
    outcome(
        kos.mean_regret > pw.mean_regret,
        format!(
            "pointwise {:.5}, K-OS(cap 0) {:.5}, K-OS gain {:.2}%",
            pw.mean_regret, kos.mean_regret, kos.gain_pct
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("small.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &config_path,
        format!(
            "n_seeds = 2\neval_interactions = 500\noutput_dir = {:?}\n\n[sim]\nn_candidates = 20\nn_interactions = 3000\n\n[model]\nhidden_dims = [8]\n\n[train]\nmax_epochs = 4\nbatch_size = 256\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let run = || -> Vec<u8> {
        let status = Command::new(env!("CARGO_BIN_EXE_pushrank"))
            .arg("--config")
            .arg(&config_path)
            .arg("run")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out.join(REPORT_JSON)).unwrap()
    };
    let first = run();
    let second = run();
    outcome(
        first == second,
        format!("two runs, {} byte reports, identical: {}", first.len(), first == second),
    )
}

fn pseudo_partition() -> Outcome {
    let mut rng = SeededRng::new(9);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = 1 + rng.index(600);
        let n_types = 1 + rng.index(N_USER_TYPES);
        let batch: Vec<TrainingExample> = (0..n)
            .map(|_| TrainingExample {
                user_type: rng.index(n_types),
                features: [0.0; N_FEATURES],
                label: rng.random_bool(0.3) as u8,
            })
            .collect();
        let mut seen = vec![0usize; n];
        for set in build_pseudo_sets(&batch) {
            for &i in set.positives.iter().chain(&set.negatives) {
                seen[i] += 1;
                if batch[i].user_type != set.user_type {
                    violations += 1;
                }
            }
            violations += set.positives.iter().filter(|&&i| batch[i].label != 1).count();
            violations += set.negatives.iter().filter(|&&i| batch[i].label != 0).count();
        }
        violations += seen.iter().filter(|&&c| c != 1).count();
    }
    outcome(violations == 0, format!("1000 batches, {violations} violations"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(u32, &str, bool, fn() -> Outcome); 9] = [
        (1, "gradient suite", true, gradient_suite),
        (2, "reduction oracles", true, reduction_oracles),
        (3, "expected-regret weight vector", true, er_weight_vector),
        (4, "Beta MLE recovery", true, beta_recovery),
        (5, "simulator statistics", true, simulator_statistics),
        (6, "unbiased direction of effect", true, unbiased_direction),
        (7, "biased direction of effect (soft)", false, biased_direction),
        (8, "report determinism", true, determinism),
        (9, "pseudo-set partition", true, pseudo_partition),
    ];
    let mut gating_failures = 0;
    for (id, name, gating, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let result = check();
        let status = match (result.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (soft, not gating)",
        };
        if !result.pass && gating {
            gating_failures += 1;
        }
        println!("criterion {id} [{status}] {name}: {}", result.detail);
    }
    if gating_failures > 0 {
        println!("{gating_failures} gating criterion(s) failed");
        std::process::exit(1);
    }
}
