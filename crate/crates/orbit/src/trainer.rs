//! Online SGD training loop: any update rule, seeded epoch shuffling,
//! constant or inverse-square-root learning rates, and per-epoch evaluation.
//!
//! The loop is deterministic by construction: the dataset bytes and the
//! config fully determine every output. Epoch shuffles derive from
//! `hash(shuffle_seed, epoch)`, and Monte-Carlo rules re-seed every step
//! from `hash(rule_seed, step)`, so even sampling-based rules replay
//! bit-identically. The global step index `t` counts across epochs starting
//! at 1 and never resets, matching the usual `1/sqrt(t)` analysis.
//!
//! Training keeps the final iterate; there is no weight averaging.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::core::{Example, Task, WeightVector};
use crate::costs::CostFunction;
use crate::data::sha256_hex;
use crate::error::{Error, Result};
use crate::gmm_hmm::{GmmStateModel, HmmParams, Utterance, gmm_update, viterbi_decode};
use crate::losses::{
    RuleKind, StepContext, UpdateRule, direct_loss_update, hinge_loss_value, hinge_update,
    orbit_loss_value, orbit_update, orbit_update_simplified, perceptron_update, probit_update,
    ramp_loss_value, ramp_update,
};
use crate::rng::{derive_seed, shuffled_indices};

/// Learning-rate schedule over the global step index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Schedule {
    Constant,
    InvSqrt,
}

/// Full specification of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub eta0: f64,
    pub schedule: Schedule,
    pub lambda: f64,
    pub shuffle_seed: u64,
    pub rule: UpdateRule,
    /// Explicit initial weights; zero initialization when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_weights: Option<Vec<f64>>,
}

impl TrainConfig {
    /// Validates rates and the rule's own parameters. `eta0 * lambda >= 1`
    /// would zero or flip the decay factor, so it is rejected outright; with
    /// a non-increasing schedule every later step is then stable too.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(Error::Config(format!(
                "eta0 must be positive and finite, got {}",
                self.eta0
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be non-negative and finite, got {}",
                self.lambda
            )));
        }
        if self.eta0 * self.lambda >= 1.0 {
            return Err(Error::ConfigUnstable(self.eta0 * self.lambda));
        }
        if let Some(w) = &self.init_weights
            && w.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("initial weights"));
        }
        self.rule.validate()
    }
}

/// Step size at global step `t >= 1` under the config's schedule.
pub fn learning_rate(cfg: &TrainConfig, t: u64) -> f64 {
    debug_assert!(t >= 1, "step index starts at 1");
    match cfg.schedule {
        Schedule::Constant => cfg.eta0,
        Schedule::InvSqrt => cfg.eta0 / (t as f64).sqrt(),
    }
}

/// How the trained parameters were initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Initialization {
    Zeros,
    Explicit,
}

/// Per-epoch training metrics. All fields are computed with the weights as
/// of the end of the epoch; evaluation fields are present only when an
/// evaluation split was supplied, and the surrogate mean only for rules
/// whose surrogate objective has a closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_surrogate_loss: Option<f64>,
    pub train_mean_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_mean_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_error_rate: Option<f64>,
    /// Wall-clock seconds for the epoch. Excluded from serialized reports
    /// and from equality so that reruns compare and serialize identically.
    #[serde(skip, default)]
    pub wall_time_secs: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.mean_surrogate_loss == other.mean_surrogate_loss
            && self.train_mean_cost == other.train_mean_cost
            && self.eval_mean_cost == other.eval_mean_cost
            && self.eval_error_rate == other.eval_error_rate
    }
}

/// Summary of one training run: one record per epoch plus a digest of the
/// final parameters for cross-referencing saved models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initialization: Initialization,
    pub records: Vec<EpochRecord>,
    pub final_params_sha256: String,
}

fn weights_sha256(w: &WeightVector) -> String {
    let mut bytes = Vec::with_capacity(w.len() * 8);
    for v in w.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn apply_rule<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    cfg: &TrainConfig,
    ctx: &StepContext,
    t: u64,
) -> Result<WeightVector> {
    match cfg.rule.kind {
        RuleKind::Orbit => orbit_update(task, w, example, cost, ctx),
        RuleKind::OrbitSimplified => orbit_update_simplified(task, w, example, cost, ctx),
        RuleKind::Perceptron => perceptron_update(task, w, example, ctx),
        RuleKind::Hinge => hinge_update(task, w, example, cost, ctx),
        RuleKind::Ramp => ramp_update(task, w, example, cost, ctx),
        RuleKind::Probit => {
            // Fresh Gaussian stream per step, derived so reruns replay exactly.
            let rule = cfg.rule.with_rng_seed(derive_seed(cfg.rule.rng_seed, t));
            probit_update(task, w, example, cost, ctx, &rule)
        }
        RuleKind::Direct => direct_loss_update(task, w, example, cost, ctx, &cfg.rule),
    }
}

fn mean_surrogate<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    dataset: &[Example<T::Input, T::Label>],
    cost: &C,
    kind: RuleKind,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for ex in dataset {
        let v = match kind {
            RuleKind::Orbit | RuleKind::OrbitSimplified => {
                orbit_loss_value(task, w, &ex.input, &ex.target, cost)?
            }
            RuleKind::Hinge => hinge_loss_value(task, w, &ex.input, &ex.target, cost)?,
            RuleKind::Ramp => ramp_loss_value(task, w, &ex.input, &ex.target, cost)?,
            _ => return Ok(None),
        };
        total += v;
    }
    Ok(Some(total / dataset.len() as f64))
}

/// Mean cost and error rate of `weights` over a dataset.
pub fn evaluate<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    weights: &WeightVector,
    dataset: &[Example<T::Input, T::Label>],
    cost: &C,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut total_cost = 0.0;
    let mut errors = 0usize;
    for ex in dataset {
        let decoded = task.decode(weights, &ex.input)?;
        total_cost += cost.cost(&ex.target, &decoded);
        if !task.labels_equal(&ex.target, &decoded) {
            errors += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((total_cost / n, errors as f64 / n))
}

/// Trains a linear model by online SGD over `cfg.epochs` passes.
///
/// Every epoch visits the whole training set once, in the order given by a
/// shuffle seeded with `hash(shuffle_seed, epoch)`. Metrics are recorded at
/// each epoch boundary; `eval` supplies an optional held-out split for the
/// evaluation columns.
pub fn sgd_train<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    train: &[Example<T::Input, T::Label>],
    eval: Option<&[Example<T::Input, T::Label>]>,
    cost: &C,
    cfg: &TrainConfig,
) -> Result<(WeightVector, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let (mut w, initialization) = match &cfg.init_weights {
        Some(values) => {
            if values.len() != task.dim() {
                return Err(Error::DimMismatch {
                    expected: task.dim(),
                    got: values.len(),
                });
            }
            (WeightVector::new(values.clone())?, Initialization::Explicit)
        }
        None => (WeightVector::zeros(task.dim()), Initialization::Zeros),
    };

    let mut records = Vec::with_capacity(cfg.epochs as usize);
    let mut t: u64 = 1;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let order = shuffled_indices(train.len(), derive_seed(cfg.shuffle_seed, epoch as u64));
        for idx in order {
            let eta = learning_rate(cfg, t);
            let ctx = StepContext::new(eta, cfg.lambda)?;
            w = apply_rule(task, &w, &train[idx], cost, cfg, &ctx, t)?;
            t += 1;
        }

        let (train_mean_cost, _) = evaluate(task, &w, train, cost)?;
        let surrogate = mean_surrogate(task, &w, train, cost, cfg.rule.kind)?;
        let (eval_mean_cost, eval_error_rate) = match eval {
            Some(split) => {
                let (c, e) = evaluate(task, &w, split, cost)?;
                (Some(c), Some(e))
            }
            None => (None, None),
        };
        records.push(EpochRecord {
            epoch,
            mean_surrogate_loss: surrogate,
            train_mean_cost,
            eval_mean_cost,
            eval_error_rate,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
    }

    let report = TrainReport {
        initialization,
        records,
        final_params_sha256: weights_sha256(&w),
    };
    Ok((w, report))
}

/// Mean sequence cost and utterance error rate of a state model.
pub fn evaluate_gmm<C: CostFunction<Vec<usize>>>(
    hmm: &HmmParams,
    gmm: &GmmStateModel,
    dataset: &[Utterance],
    cost: &C,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut total_cost = 0.0;
    let mut errors = 0usize;
    for utt in dataset {
        let decoded = viterbi_decode(&utt.frames, hmm, gmm)?;
        total_cost += cost.cost(&utt.transcript, &decoded);
        if decoded != utt.transcript {
            errors += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((total_cost / n, errors as f64 / n))
}

/// Trains the emission parameters of a CD-HMM by online updates, keeping
/// the transition side frozen.
///
/// Only the PERCEPTRON and ORBIT rules apply here, neither uses weight
/// decay, so `lambda` must be 0. Initialization is always explicit (the
/// caller supplies the starting model).
pub fn sgd_train_gmm<C: CostFunction<Vec<usize>>>(
    train: &[Utterance],
    eval: Option<&[Utterance]>,
    hmm: &HmmParams,
    init: &GmmStateModel,
    cost: &C,
    cfg: &TrainConfig,
) -> Result<(GmmStateModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if cfg.lambda != 0.0 {
        return Err(Error::Config(
            "state-model updates have no decay term; set lambda = 0".into(),
        ));
    }
    let mut model = init.clone();
    let mut records = Vec::with_capacity(cfg.epochs as usize);
    let mut t: u64 = 1;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let order = shuffled_indices(train.len(), derive_seed(cfg.shuffle_seed, epoch as u64));
        for idx in order {
            let eta = learning_rate(cfg, t);
            let ctx = StepContext::new(eta, 0.0)?;
            model = gmm_update(&train[idx], hmm, &model, cost, &ctx, cfg.rule.kind)?;
            t += 1;
        }
        let (train_mean_cost, _) = evaluate_gmm(hmm, &model, train, cost)?;
        let (eval_mean_cost, eval_error_rate) = match eval {
            Some(split) => {
                let (c, e) = evaluate_gmm(hmm, &model, split, cost)?;
                (Some(c), Some(e))
            }
            None => (None, None),
        };
        records.push(EpochRecord {
            epoch,
            mean_surrogate_loss: None,
            train_mean_cost,
            eval_mean_cost,
            eval_error_rate,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
    }
    let bytes = serde_json::to_vec(&model).map_err(Error::from)?;
    let report = TrainReport {
        initialization: Initialization::Explicit,
        records,
        final_params_sha256: sha256_hex(&bytes),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::ZeroOneCost;
    use crate::tasks::MulticlassTask;
    use crate::tasks::synth::synth_multiclass;

    fn base_config(kind: RuleKind) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            eta0: 0.1,
            schedule: Schedule::InvSqrt,
            lambda: 0.001,
            shuffle_seed: 7,
            rule: UpdateRule::new(kind),
            init_weights: None,
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let mut cfg = base_config(RuleKind::Orbit);
        cfg.eta0 = 0.1;
        assert_eq!(learning_rate(&cfg, 1), 0.1);
        cfg.eta0 = 1.0;
        assert_eq!(learning_rate(&cfg, 4), 0.5);
        cfg.schedule = Schedule::Constant;
        assert_eq!(learning_rate(&cfg, 123), 1.0);
    }

    #[test]
    fn unstable_config_rejected() {
        let mut cfg = base_config(RuleKind::Orbit);
        cfg.eta0 = 1.0;
        cfg.lambda = 1.0;
        assert!(matches!(
            cfg.validate(),
            Err(Error::ConfigUnstable { .. })
        ));
        cfg.lambda = 0.999;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let data = synth_multiclass(3, 2, 0.1, 20, 5).unwrap();
        let mut cfg = base_config(RuleKind::Orbit);
        cfg.epochs = 0;
        let (w, report) = sgd_train(&task, &data.examples, None, &ZeroOneCost, &cfg).unwrap();
        assert_eq!(w.as_slice(), vec![0.0; 6]);
        assert!(report.records.is_empty());
        assert_eq!(report.initialization, Initialization::Zeros);

        cfg.init_weights = Some(vec![1.0; 6]);
        let (w, report) = sgd_train(&task, &data.examples, None, &ZeroOneCost, &cfg).unwrap();
        assert_eq!(w.as_slice(), vec![1.0; 6]);
        assert_eq!(report.initialization, Initialization::Explicit);
    }

    #[test]
    fn init_weights_dimension_checked() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let data = synth_multiclass(3, 2, 0.1, 10, 5).unwrap();
        let mut cfg = base_config(RuleKind::Perceptron);
        cfg.init_weights = Some(vec![0.0; 5]);
        assert!(matches!(
            sgd_train(&task, &data.examples, None, &ZeroOneCost, &cfg),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn perceptron_separates_synthetic_data() {
        // The generator plants well-separated class centers, so a perceptron
        // with lambda = 0 must fit the training set within 50 epochs.
        let task = MulticlassTask::new(2, 2).unwrap();
        let data = synth_multiclass(2, 2, 0.2, 60, 11).unwrap();
        let mut cfg = base_config(RuleKind::Perceptron);
        cfg.epochs = 50;
        cfg.eta0 = 1.0;
        cfg.schedule = Schedule::Constant;
        cfg.lambda = 0.0;
        let (w, report) = sgd_train(&task, &data.examples, None, &ZeroOneCost, &cfg).unwrap();
        let (_, err) = evaluate(&task, &w, &data.examples, &ZeroOneCost).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(report.records.len(), 50);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let data = synth_multiclass(3, 2, 0.6, 40, 13).unwrap();
        for kind in [
            RuleKind::Orbit,
            RuleKind::Probit,
            RuleKind::Hinge,
            RuleKind::Direct,
        ] {
            let mut cfg = base_config(kind);
            cfg.rule = cfg.rule.with_probit_samples(20);
            let run = || {
                sgd_train(
                    &task,
                    &data.examples,
                    Some(&data.examples),
                    &ZeroOneCost,
                    &cfg,
                )
                .unwrap()
            };
            let (w1, r1) = run();
            let (w2, r2) = run();
            let bits = |w: &WeightVector| -> Vec<u64> {
                w.as_slice().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&w1), bits(&w2), "{kind:?}");
            assert_eq!(r1, r2, "{kind:?}");
        }
    }

    #[test]
    fn records_report_surrogates_and_eval() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let data = synth_multiclass(3, 2, 0.6, 30, 17).unwrap();
        let eval = synth_multiclass(3, 2, 0.6, 10, 18).unwrap();
        for (kind, expect_surrogate) in [
            (RuleKind::Orbit, true),
            (RuleKind::OrbitSimplified, true),
            (RuleKind::Hinge, true),
            (RuleKind::Ramp, true),
            (RuleKind::Perceptron, false),
            (RuleKind::Direct, false),
        ] {
            let cfg = base_config(kind);
            let (_, report) = sgd_train(
                &task,
                &data.examples,
                Some(&eval.examples),
                &ZeroOneCost,
                &cfg,
            )
            .unwrap();
            assert_eq!(report.records.len(), 2);
            for rec in &report.records {
                assert_eq!(rec.mean_surrogate_loss.is_some(), expect_surrogate, "{kind:?}");
                assert!(rec.eval_mean_cost.is_some());
                assert!(rec.eval_error_rate.is_some());
                assert!(rec.train_mean_cost >= 0.0);
            }
        }
    }

    /// A cost that is identically zero: updates reduce to pure decay.
    struct ZeroCost;
    impl CostFunction<usize> for ZeroCost {
        fn cost(&self, _: &usize, _: &usize) -> f64 {
            0.0
        }
    }

    #[test]
    fn zero_cost_decays_geometrically() {
        let task = MulticlassTask::new(2, 2).unwrap();
        let data = synth_multiclass(2, 2, 0.3, 8, 23).unwrap();
        let mut cfg = base_config(RuleKind::Orbit);
        cfg.epochs = 3;
        cfg.lambda = 0.01;
        cfg.init_weights = Some(vec![0.5, -0.25, 1.5, -2.0]);
        let (w, _) = sgd_train(&task, &data.examples, None, &ZeroCost, &cfg).unwrap();
        // Replay the decay sequence exactly as the step kernel computes it.
        let steps = 3 * data.examples.len() as u64;
        let mut expect = cfg.init_weights.clone().unwrap();
        for t in 1..=steps {
            let decay = 1.0 - learning_rate(&cfg, t) * cfg.lambda;
            for v in expect.iter_mut() {
                *v = *v * decay + 0.0;
            }
        }
        let got: Vec<u64> = w.as_slice().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = expect.iter().map(|v| v.to_bits()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn evaluate_zero_weights_balanced_classes() {
        // Zero weights decode every input as class 0, so a perfectly
        // balanced 4-class set has error exactly 3/4.
        let task = MulticlassTask::new(4, 2).unwrap();
        let examples: Vec<Example<Vec<f64>, usize>> = (0..16)
            .map(|i| Example {
                input: vec![i as f64, -(i as f64)],
                target: i % 4,
            })
            .collect();
        let w = WeightVector::zeros(task.dim());
        let (cost, err) = evaluate(&task, &w, &examples, &ZeroOneCost).unwrap();
        assert_eq!(err, 0.75);
        assert_eq!(cost, 0.75);
    }

    #[test]
    fn empty_dataset_rejected() {
        let task = MulticlassTask::new(2, 2).unwrap();
        let cfg = base_config(RuleKind::Orbit);
        let empty: Vec<Example<Vec<f64>, usize>> = Vec::new();
        assert!(sgd_train(&task, &empty, None, &ZeroOneCost, &cfg).is_err());
        let w = WeightVector::zeros(4);
        assert!(evaluate(&task, &w, &empty, &ZeroOneCost).is_err());
    }

    mod gmm {
        use super::*;
        use crate::gmm_hmm::{NormalizedHammingCost, build_phi};
        use nalgebra::DMatrix;

        /// Two states with unit-variance emissions centered at +2 and -2;
        /// frames drawn at the centers make decoding unambiguous.
        fn setup() -> (HmmParams, GmmStateModel, Vec<Utterance>) {
            let hmm = HmmParams::uniform(2).unwrap();
            let eye = DMatrix::identity(1, 1);
            // Deliberately misplaced means: state 0 slightly off-center.
            let gmm = GmmStateModel::new(vec![
                vec![build_phi(&[0.5], &eye, 0.0).unwrap()],
                vec![build_phi(&[-2.0], &eye, 0.0).unwrap()],
            ])
            .unwrap();
            let utts = vec![
                Utterance {
                    frames: vec![vec![2.0], vec![-2.0], vec![2.0]],
                    transcript: vec![0, 1, 0],
                },
                Utterance {
                    frames: vec![vec![-2.0], vec![-2.0], vec![2.0]],
                    transcript: vec![1, 1, 0],
                },
            ];
            (hmm, gmm, utts)
        }

        #[test]
        fn training_reduces_cost_and_is_deterministic() {
            let (hmm, gmm, utts) = setup();
            let mut cfg = base_config(RuleKind::Orbit);
            cfg.epochs = 10;
            cfg.eta0 = 0.05;
            cfg.lambda = 0.0;
            let (before, _) = evaluate_gmm(&hmm, &gmm, &utts, &NormalizedHammingCost).unwrap();
            let (trained, report) =
                sgd_train_gmm(&utts, None, &hmm, &gmm, &NormalizedHammingCost, &cfg).unwrap();
            let (after, _) = evaluate_gmm(&hmm, &trained, &utts, &NormalizedHammingCost).unwrap();
            assert!(after <= before, "{after} > {before}");
            assert_eq!(report.records.len(), 10);
            assert_eq!(report.initialization, Initialization::Explicit);

            let (trained2, report2) =
                sgd_train_gmm(&utts, None, &hmm, &gmm, &NormalizedHammingCost, &cfg).unwrap();
            assert_eq!(trained, trained2);
            assert_eq!(report, report2);
        }

        #[test]
        fn lambda_and_rule_restrictions() {
            let (hmm, gmm, utts) = setup();
            let mut cfg = base_config(RuleKind::Orbit);
            cfg.lambda = 0.001;
            assert!(matches!(
                sgd_train_gmm(&utts, None, &hmm, &gmm, &NormalizedHammingCost, &cfg),
                Err(Error::Config(_))
            ));
            cfg.lambda = 0.0;
            cfg.rule = UpdateRule::new(RuleKind::Hinge);
            assert!(matches!(
                sgd_train_gmm(&utts, None, &hmm, &gmm, &NormalizedHammingCost, &cfg),
                Err(Error::UnsupportedTask(_))
            ));
        }
    }
}
