//! Acceptance suite: one test per release criterion. Every test prints a
//! single `CRITERION <n> PASS/FAIL: <metrics>` line before asserting, so a
//! full run reads as a checklist.
//!
//! Criteria 1 and 2 train on the MNIST archives under `data/mnist` at the
//! repository root; the split is ingested once and shared.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use orbit::core::{Task, WeightVector};
use orbit::costs::{AlignmentCostConfig, CostMatrix, TauInsensitiveCost, ZeroOneCost};
use orbit::losses::{RuleKind, StepContext, UpdateRule, orbit_update_simplified, perceptron_update};
use orbit::mnist::{self, MnistSplit};
use orbit::tasks::synth::{synth_alignment, synth_multiclass};
use orbit::tasks::{AlignmentTask, MulticlassTask, MulticlassTrainingCost};
use orbit::trainer::{Schedule, TrainConfig, evaluate, sgd_train};
use orbit::verify::{
    Verdict, check_decode_oracles, check_gmm_identities, check_gradient,
    check_margin_bound_suite, check_orbit_limit, check_orbit_limit_degenerate,
    check_probit_binary,
};
use tempfile::TempDir;

/// Prints the criterion's verdict line, then enforces it.
fn check(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("CRITERION {criterion} {verdict}: {detail}");
    assert!(pass, "CRITERION {criterion} FAIL: {detail}");
}

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

static MNIST: OnceLock<MnistSplit> = OnceLock::new();

/// PCA-100 split with a fixed validation carve-out, ingested once.
fn mnist_split() -> &'static MnistSplit {
    MNIST.get_or_init(|| {
        let dir = mnist_dir();
        mnist::ingest(
            &dir.join("train-images-idx3-ubyte.gz"),
            &dir.join("train-labels-idx1-ubyte.gz"),
            &dir.join("t10k-images-idx3-ubyte.gz"),
            &dir.join("t10k-labels-idx1-ubyte.gz"),
            100,
            17,
        )
        .expect("MNIST ingest failed (expects IDX archives under data/mnist)")
    })
}

fn orbit_mnist_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        eta0: 0.1,
        schedule: Schedule::InvSqrt,
        lambda: 0.001,
        shuffle_seed: 7,
        rule: UpdateRule::new(RuleKind::Orbit),
        init_weights: None,
    }
}

fn perceptron_mnist_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        eta0: 1.0,
        schedule: Schedule::Constant,
        lambda: 0.0,
        shuffle_seed: 7,
        rule: UpdateRule::new(RuleKind::Perceptron),
        init_weights: None,
    }
}

#[test]
fn criterion_01_mnist_error_bands() {
    let start = Instant::now();
    let split = mnist_split();
    let task = MulticlassTask::new(10, 100).unwrap();

    let (w_orbit, _) = sgd_train(&task, &split.train, None, &ZeroOneCost, &orbit_mnist_config())
        .unwrap();
    let (_, orbit_err) = evaluate(&task, &w_orbit, &split.test, &ZeroOneCost).unwrap();

    let (w_perc, _) = sgd_train(
        &task,
        &split.train,
        None,
        &ZeroOneCost,
        &perceptron_mnist_config(),
    )
    .unwrap();
    let (_, perc_err) = evaluate(&task, &w_perc, &split.test, &ZeroOneCost).unwrap();

    let orbit_pct = 100.0 * orbit_err;
    let perc_pct = 100.0 * perc_err;
    let elapsed = start.elapsed();
    let pass = (orbit_pct - 8.34).abs() <= 1.0
        && (perc_pct - 8.54).abs() <= 1.0
        && elapsed <= Duration::from_secs(600);
    check(
        1,
        pass,
        &format!(
            "orbit test error {orbit_pct:.2}% (band 8.34±1.0), perceptron {perc_pct:.2}% \
             (band 8.54±1.0), {:.0}s (limit 600s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_mnist_randomized_costs() {
    let start = Instant::now();
    let split = mnist_split();
    let eval_task = MulticlassTask::new(10, 100).unwrap();

    // The cost-blind baseline is trained once and priced under each matrix.
    let (w_perc, _) = sgd_train(
        &eval_task,
        &split.train,
        None,
        &ZeroOneCost,
        &perceptron_mnist_config(),
    )
    .unwrap();

    let mut wins = 0usize;
    let mut orbit_total = 0.0;
    let mut perc_total = 0.0;
    for seed in 0..10u64 {
        let matrix = CostMatrix::random(10, 1000 + seed).unwrap();
        let task = MulticlassTask::new(10, 100)
            .unwrap()
            .with_training_cost(MulticlassTrainingCost::Matrix(matrix.clone()))
            .unwrap();
        let (w_orbit, _) =
            sgd_train(&task, &split.train, None, &matrix, &orbit_mnist_config()).unwrap();
        let (orbit_cost, _) = evaluate(&eval_task, &w_orbit, &split.test, &matrix).unwrap();
        let (perc_cost, _) = evaluate(&eval_task, &w_perc, &split.test, &matrix).unwrap();
        if orbit_cost < perc_cost {
            wins += 1;
        }
        orbit_total += orbit_cost;
        perc_total += perc_cost;
    }
    // Mean costs on the 100-point scale the error bands use.
    let orbit_mean = 100.0 * orbit_total / 10.0;
    let perc_mean = 100.0 * perc_total / 10.0;
    let gap = perc_mean - orbit_mean;
    let elapsed = start.elapsed();
    let pass = wins >= 8 && gap >= 1.0 && elapsed <= Duration::from_secs(1800);
    check(
        2,
        pass,
        &format!(
            "orbit wins {wins}/10 (need >=8), mean cost orbit {orbit_mean:.2} vs perceptron \
             {perc_mean:.2}, gap {gap:.2} (need >=1.0), {:.0}s (limit 1800s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_gradient_check() {
    let record = check_gradient(3).unwrap();
    let max_rel = record.estimates["max_rel_error"].as_f64().unwrap();
    let draws = record.params["draws"].as_u64().unwrap();
    let h = record.params["h"].as_f64().unwrap();
    let pass = record.verdict == Verdict::Pass && max_rel < 1e-5 && draws == 100 && h == 1e-5;
    check(
        3,
        pass,
        &format!("max relative error {max_rel:.3e} over {draws} draws at h={h:.0e} (need <1e-5)"),
    );
}

#[test]
fn criterion_04_perceptron_equivalence() {
    // Simplified orbit and perceptron step from their own running weights;
    // with a 0-1 cost and lambda = 0 the trajectories must agree bit for bit.
    const STEPS: u64 = 1000;
    let task = MulticlassTask::new(5, 8).unwrap();
    let data = synth_multiclass(5, 8, 0.8, 250, 99).unwrap();
    let mut w_simplified = WeightVector::zeros(task.dim());
    let mut w_perceptron = WeightVector::zeros(task.dim());
    let mut mismatched = 0u64;
    let mut updates_fired = 0u64;
    for t in 1..=STEPS {
        let ctx = StepContext::new(0.5 / (t as f64).sqrt(), 0.0).unwrap();
        let ex = &data.examples[((t - 1) as usize) % data.examples.len()];
        let before = w_perceptron.clone();
        w_simplified = orbit_update_simplified(&task, &w_simplified, ex, &ZeroOneCost, &ctx)
            .unwrap();
        w_perceptron = perceptron_update(&task, &w_perceptron, ex, &ctx).unwrap();
        if w_perceptron != before {
            updates_fired += 1;
        }
        let same = w_simplified
            .as_slice()
            .iter()
            .zip(w_perceptron.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatched += 1;
        }
    }
    let pass = mismatched == 0 && updates_fired > 0;
    check(
        4,
        pass,
        &format!(
            "{mismatched} of {STEPS} steps diverged bitwise ({updates_fired} non-trivial updates)"
        ),
    );
}

#[test]
fn criterion_05_scaling_limit() {
    let record = check_orbit_limit(5).unwrap();
    let max_gap = record.estimates["max_final_gap"].as_f64().unwrap();
    let monotone = record.estimates["monotone_violations"].as_u64().unwrap();
    let instances = record.params["instances"].as_u64().unwrap();
    let degenerate = check_orbit_limit_degenerate().unwrap();
    let exactly_half = degenerate.estimates["exactly_half_cost"].as_bool().unwrap();
    let pass = record.verdict == Verdict::Pass
        && max_gap < 1e-9
        && monotone == 0
        && instances >= 100
        && degenerate.verdict == Verdict::Pass
        && exactly_half;
    check(
        5,
        pass,
        &format!(
            "max |loss(1e6*w) - cost| = {max_gap:.3e} over {instances} negative-margin instances \
             (need <1e-9); zero-margin value exactly cost/2: {exactly_half}"
        ),
    );
}

#[test]
fn criterion_06_margin_bound_monte_carlo() {
    let records = check_margin_bound_suite(7).unwrap();
    assert_eq!(records.len(), 2);
    let bound = &records[0];
    let split = &records[1];
    let instances = bound.params["instances"].as_u64().unwrap();
    let mc = bound.params["mc_samples"].as_u64().unwrap();
    let bound_violations = bound.estimates["violations"].as_u64().unwrap();
    let split_violations = split.estimates["violations"].as_u64().unwrap();
    let skipped = bound.estimates["skipped"].as_u64().unwrap();
    let pass = bound.verdict == Verdict::Pass
        && split.verdict == Verdict::Pass
        && bound_violations == 0
        && split_violations == 0
        && skipped == 0
        && instances == 50
        && mc == 20_000;
    check(
        6,
        pass,
        &format!(
            "smoothed-loss bound: {bound_violations} violations, label-split: {split_violations} \
             violations over {instances} margin-qualified instances at {mc} MC samples"
        ),
    );
}

#[test]
fn criterion_07_decode_oracles() {
    let records = check_decode_oracles(11).unwrap();
    assert_eq!(records.len(), 3);
    let mut pass = true;
    let mut parts = Vec::new();
    for record in &records {
        let mismatches = record.estimates["mismatches"].as_u64().unwrap();
        let instances = record.params["instances"].as_u64().unwrap();
        pass &= record.verdict == Verdict::Pass && mismatches == 0 && instances == 1000;
        parts.push(format!("{} {mismatches}/{instances}", record.check));
    }
    check(7, pass, &format!("mismatches vs brute force: {}", parts.join(", ")));
}

#[test]
fn criterion_08_gmm_identities() {
    let records = check_gmm_identities(13).unwrap();
    assert_eq!(records.len(), 3);
    let round_trip = records[0].estimates["max_abs_error"].as_f64().unwrap();
    let quadratic = records[1].estimates["max_abs_error"].as_f64().unwrap();
    let gradient = records[2].estimates["max_rel_error"].as_f64().unwrap();
    let pass = records.iter().all(|r| r.verdict == Verdict::Pass)
        && round_trip < 1e-10
        && quadratic < 1e-9
        && gradient < 1e-5;
    check(
        8,
        pass,
        &format!(
            "round-trip {round_trip:.3e} (<1e-10), quadratic identity {quadratic:.3e} (<1e-9), \
             gradient vs finite differences {gradient:.3e} (<1e-5)"
        ),
    );
}

#[test]
fn criterion_09_binary_probit_closed_form() {
    let record = check_probit_binary(17).unwrap();
    let violations = record.estimates["violations"].as_u64().unwrap();
    let max_z = record.estimates["max_z_score"].as_f64().unwrap();
    let instances = record.params["instances"].as_u64().unwrap();
    let pass = record.verdict == Verdict::Pass && violations == 0 && instances == 50;
    check(
        9,
        pass,
        &format!(
            "{violations} of {instances} seeds beyond 3 standard errors of the closed form \
             (max z = {max_z:.2})"
        ),
    );
}

#[test]
fn criterion_10_alignment_training_halves_cost() {
    let cost_config = AlignmentCostConfig::new(1.0).unwrap();
    let cost = TauInsensitiveCost(cost_config);
    let task = AlignmentTask::new(3, 4.0, cost_config).unwrap();
    let train = synth_alignment((10, 20), (2, 4), 3, 0.3, 300, 41).unwrap().examples;
    let validation = synth_alignment((10, 20), (2, 4), 3, 0.3, 100, 42).unwrap().examples;
    let test = synth_alignment((10, 20), (2, 4), 3, 0.3, 100, 43).unwrap().examples;

    let zero = WeightVector::zeros(task.dim());
    let (baseline, _) = evaluate(&task, &zero, &test, &cost).unwrap();

    let mut best: Option<(f64, f64, WeightVector)> = None;
    for lambda in [0.01, 0.1, 0.2] {
        let cfg = TrainConfig {
            epochs: 4,
            eta0: 1.0,
            schedule: Schedule::InvSqrt,
            lambda,
            shuffle_seed: 1,
            rule: UpdateRule::new(RuleKind::Orbit),
            init_weights: None,
        };
        let (w, _) = sgd_train(&task, &train, None, &cost, &cfg).unwrap();
        let (val_cost, _) = evaluate(&task, &w, &validation, &cost).unwrap();
        if best.as_ref().is_none_or(|(b, _, _)| val_cost < *b) {
            best = Some((val_cost, lambda, w));
        }
    }
    let (_, best_lambda, w) = best.unwrap();
    let (final_cost, _) = evaluate(&task, &w, &test, &cost).unwrap();
    let ratio = final_cost / baseline;
    let pass = ratio <= 0.5;
    check(
        10,
        pass,
        &format!(
            "held-out cost {final_cost:.4} vs zero-weight baseline {baseline:.4} \
             (ratio {ratio:.3}, need <=0.5) at lambda {best_lambda}"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 11: byte-identical reruns of every command
// ---------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_orbit"))
        .current_dir(dir)
        .args(args)
        .status()
        .expect("failed to launch the orbit binary")
        .success()
}

/// `(relative path, bytes)` for every file under `dir`, sorted by path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn criterion_11_rerun_determinism() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let idx = mnist_dir();

    std::fs::write(
        root.join("synth.json"),
        r#"{
          "task": { "kind": "MULTICLASS", "num_classes": 4, "input_dim": 6 },
          "dataset": {
            "generator": { "kind": "MULTICLASS", "num_classes": 4, "input_dim": 6,
                           "noise": 0.6, "sizes": { "train": 120, "validation": 40, "test": 40 },
                           "seed": 5 }
          },
          "output_dir": "data"
        }"#,
    )
    .unwrap();
    std::fs::write(
        root.join("train.json"),
        r#"{
          "task": { "kind": "MULTICLASS", "num_classes": 4, "input_dim": 6 },
          "dataset": { "path": "data" },
          "cost": { "kind": "MATRIX", "num_classes": 4, "seed": 2 },
          "rule": { "kind": "ORBIT" },
          "train": { "epochs": 2, "eta0": 0.5, "schedule": "INV_SQRT", "lambda": 0.001,
                     "shuffle_seed": 3 },
          "output_dir": "trainrun"
        }"#,
    )
    .unwrap();
    std::fs::write(
        root.join("eval.json"),
        r#"{
          "task": { "kind": "MULTICLASS", "num_classes": 4, "input_dim": 6 },
          "dataset": { "path": "data" },
          "cost": { "kind": "MATRIX", "num_classes": 4, "seed": 2 },
          "eval": { "model": "trainrun/model.json", "split": "test" },
          "output_dir": "evalrun"
        }"#,
    )
    .unwrap();
    std::fs::write(
        root.join("verify.json"),
        r#"{ "verify": { "seed": 1 }, "output_dir": "verrun" }"#,
    )
    .unwrap();

    let train_images = idx.join("train-images-idx3-ubyte.gz");
    let train_labels = idx.join("train-labels-idx1-ubyte.gz");
    let test_images = idx.join("t10k-images-idx3-ubyte.gz");
    let test_labels = idx.join("t10k-labels-idx1-ubyte.gz");
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "ingest-mnist",
            "--train-images", train_images.to_str().unwrap(),
            "--train-labels", train_labels.to_str().unwrap(),
            "--test-images", test_images.to_str().unwrap(),
            "--test-labels", test_labels.to_str().unwrap(),
            "--pca-dim", "20",
            "--split-seed", "3",
            "--out", "idx",
            "--quiet",
        ],
        vec!["synth", "--config", "synth.json", "--quiet"],
        vec!["train", "--config", "train.json", "--quiet"],
        vec!["eval", "--config", "eval.json", "--quiet"],
        vec!["verify", "--config", "verify.json", "--quiet"],
        vec!["report", "trainrun", "evalrun", "verrun", "--out", "summary", "--quiet"],
    ];

    for args in &commands {
        assert!(run_cli(root, args), "first run of `{}` failed", args[0]);
    }
    let first = snapshot(root);
    for args in &commands {
        assert!(run_cli(root, args), "second run of `{}` failed", args[0]);
    }
    let second = snapshot(root);

    let mut differing = Vec::new();
    assert_eq!(first.len(), second.len(), "rerun changed the set of files");
    for ((name_a, bytes_a), (name_b, bytes_b)) in first.iter().zip(second.iter()) {
        assert_eq!(name_a, name_b, "rerun changed the set of files");
        if bytes_a != bytes_b {
            differing.push(name_a.clone());
        }
    }
    let pass = differing.is_empty();
    check(
        11,
        pass,
        &format!(
            "{} files rewritten by ingest-mnist/synth/train/eval/verify/report, {} differ{}",
            first.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            }
        ),
    );
}
