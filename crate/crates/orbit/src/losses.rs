//! Surrogate losses and their online update rules.
//!
//! The central object is the orbit loss. Writing `m = w . dphi(y, y_hat_w)`
//! for the normalized-difference margin of the decoded label,
//!
//! ```text
//! orbit(w, x, y) = Q(m) * cost(y, y_hat_w),      Q(m) = P[N(0,1) > m],
//! ```
//!
//! i.e. the cost of the current prediction damped by the probability that an
//! isotropic Gaussian perturbation of the score still ranks `y_hat_w` above
//! `y`. Its stochastic-gradient step (with the decoded label frozen) is
//!
//! ```text
//! w  <-  (1 - eta*lambda) w + eta * exp(-m^2/2) * cost * dphi,
//! ```
//!
//! and dropping the exponential damping factor recovers a cost-scaled
//! structured perceptron. This module implements that pair plus the
//! comparison rules: hinge (structural SVM subgradient), ramp, probit
//! (sampled zero-order gradient), and direct loss (epsilon-scaled
//! cost-augmented difference). All rules funnel through one shared stepping
//! kernel so that algebraically identical rules produce bit-identical
//! trajectories.
//!
//! Normalization convention: orbit and perceptron steps move along the
//! normalized difference `dphi = (phi(y) - phi(y'))/||.||`; hinge, ramp and
//! direct use the raw difference, as in their standard definitions.

use serde::{Deserialize, Serialize};

use crate::core::{Example, FeatureVector, Task, WeightVector, delta_phi, delta_phi_hat, score};
use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, standard_normal_vec};

/// Which update rule a trainer applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleKind {
    Orbit,
    OrbitSimplified,
    Perceptron,
    Hinge,
    Ramp,
    Probit,
    Direct,
}

impl RuleKind {
    /// Stable uppercase name, matching the configuration encoding.
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Orbit => "ORBIT",
            RuleKind::OrbitSimplified => "ORBIT_SIMPLIFIED",
            RuleKind::Perceptron => "PERCEPTRON",
            RuleKind::Hinge => "HINGE",
            RuleKind::Ramp => "RAMP",
            RuleKind::Probit => "PROBIT",
            RuleKind::Direct => "DIRECT",
        }
    }
}

/// An update rule plus its rule-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub kind: RuleKind,
    /// Epsilon for the direct-loss rule; either sign is legal, zero is not.
    pub direct_epsilon: f64,
    /// Monte-Carlo sample count for the probit rule.
    pub probit_samples: usize,
    /// Base seed for the probit rule's Gaussian draws.
    pub rng_seed: u64,
}

impl UpdateRule {
    /// A rule with default parameters (epsilon 1.1, 100 probit samples).
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            direct_epsilon: 1.1,
            probit_samples: 100,
            rng_seed: 0,
        }
    }

    pub fn with_direct_epsilon(mut self, epsilon: f64) -> Self {
        self.direct_epsilon = epsilon;
        self
    }

    pub fn with_probit_samples(mut self, samples: usize) -> Self {
        self.probit_samples = samples;
        self
    }

    pub fn with_rng_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Checks the parameters needed by this rule's kind.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RuleKind::Direct => {
                if self.direct_epsilon == 0.0 {
                    return Err(Error::ZeroEpsilon);
                }
                if !self.direct_epsilon.is_finite() {
                    return Err(Error::NonFinite("direct epsilon"));
                }
            }
            RuleKind::Probit if self.probit_samples == 0 => {
                return Err(Error::Config(
                    "probit rule needs at least 1 sample".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Step size and regularization for one online update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepContext {
    eta: f64,
    lambda: f64,
}

impl StepContext {
    /// Requires `eta > 0` and `lambda >= 0`, both finite.
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::Config(format!("eta must be finite and > 0, got {eta}")));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { eta, lambda })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The multiplicative weight decay `1 - eta*lambda`.
    pub fn decay(&self) -> f64 {
        1.0 - self.eta * self.lambda
    }
}

/// Gaussian upper-tail probability `Q(m) = P[N(0,1) > m] = erfc(m/sqrt(2))/2`,
/// accurate to better than 1e-12 absolute everywhere.
pub fn gaussian_upper_tail(margin: f64) -> f64 {
    0.5 * libm::erfc(margin / std::f64::consts::SQRT_2)
}

/// The single stepping kernel `w_i * decay + scale * dir_i`, evaluated in
/// ascending index order. Every update rule reduces to one call of this, so
/// rules that agree on (decay, scale, dir) agree bit-for-bit.
fn apply_step(w: &WeightVector, decay: f64, scale: f64, dir: &[f64]) -> Result<WeightVector> {
    if dir.len() != w.len() {
        return Err(Error::DimMismatch {
            expected: w.len(),
            got: dir.len(),
        });
    }
    let values = w
        .as_slice()
        .iter()
        .zip(dir.iter())
        .map(|(wi, di)| wi * decay + scale * di)
        .collect();
    WeightVector::new(values)
}

/// Orbit loss of `w` on one example: `Q(w . dphi(y, y_hat_w)) * cost(y, y_hat_w)`.
pub fn orbit_loss_value<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    input: &T::Input,
    target: &T::Label,
    cost: &C,
) -> Result<f64> {
    let decoded = task.decode(w, input)?;
    let loss = cost.cost(target, &decoded);
    let dphi = delta_phi_hat(task, input, target, &decoded);
    let margin = score(w, &dphi)?;
    Ok(gaussian_upper_tail(margin) * loss)
}

/// Analytic gradient of the orbit loss with the decoded label held fixed:
/// `-(1/sqrt(2 pi)) * exp(-margin^2/2) * cost * dphi`.
pub fn orbit_analytic_gradient(margin: f64, cost_value: f64, dphi: &FeatureVector) -> Vec<f64> {
    let coef = -(1.0 / (2.0 * std::f64::consts::PI).sqrt())
        * (-(margin * margin) / 2.0).exp()
        * cost_value;
    dphi.as_slice().iter().map(|v| coef * v).collect()
}

/// Orbit update: one decode, then
/// `w <- (1 - eta*lambda) w + eta * exp(-m^2/2) * cost * dphi`.
pub fn orbit_update<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
) -> Result<WeightVector> {
    let decoded = task.decode(w, &example.input)?;
    let loss = cost.cost(&example.target, &decoded);
    let dphi = delta_phi_hat(task, &example.input, &example.target, &decoded);
    let margin = score(w, &dphi)?;
    let scale = ctx.eta() * (-(margin * margin) / 2.0).exp() * loss;
    apply_step(w, ctx.decay(), scale, dphi.as_slice())
}

/// Simplified orbit update (the exponential damping factor dropped):
/// `w <- (1 - eta*lambda) w + eta * cost * dphi`.
pub fn orbit_update_simplified<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
) -> Result<WeightVector> {
    let decoded = task.decode(w, &example.input)?;
    let loss = cost.cost(&example.target, &decoded);
    let dphi = delta_phi_hat(task, &example.input, &example.target, &decoded);
    let scale = ctx.eta() * loss;
    apply_step(w, ctx.decay(), scale, dphi.as_slice())
}

/// Regularized structured perceptron:
/// `w <- (1 - eta*lambda) w + eta * 1{y != y_hat_w} * dphi`.
pub fn perceptron_update<T: Task>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    ctx: &StepContext,
) -> Result<WeightVector> {
    let decoded = task.decode(w, &example.input)?;
    let indicator = if task.labels_equal(&example.target, &decoded) {
        0.0
    } else {
        1.0
    };
    let dphi = delta_phi_hat(task, &example.input, &example.target, &decoded);
    let scale = ctx.eta() * indicator;
    apply_step(w, ctx.decay(), scale, dphi.as_slice())
}

/// Structural hinge loss `max_{y'} [cost(y, y') + w . phi(x, y')] - w . phi(x, y)`.
///
/// The `cost` argument must be the same cost the task applies inside
/// [`Task::cost_augmented_decode`]; the task owning its augmenting cost is
/// what keeps decoding exact for decomposable costs.
pub fn hinge_loss_value<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    input: &T::Input,
    target: &T::Label,
    cost: &C,
) -> Result<f64> {
    let augmented = task.cost_augmented_decode(w, input, target, 1.0)?;
    let aug_score = score(w, &task.phi(input, &augmented))? + cost.cost(target, &augmented);
    let target_score = score(w, &task.phi(input, target))?;
    Ok(aug_score - target_score)
}

/// Hinge (structural SVM) subgradient step:
/// `w <- (1 - eta*lambda) w + eta * [phi(x, y) - phi(x, y_aug)]`.
pub fn hinge_update<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
) -> Result<WeightVector> {
    let _ = cost; // the augmenting cost lives inside the task
    let augmented = task.cost_augmented_decode(w, &example.input, &example.target, 1.0)?;
    let diff = delta_phi(task, &example.input, &example.target, &augmented);
    apply_step(w, ctx.decay(), ctx.eta(), diff.as_slice())
}

/// Ramp loss `max_{y'} [w . phi + cost] - max_{y'} [w . phi]`, always >= 0.
pub fn ramp_loss_value<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    input: &T::Input,
    target: &T::Label,
    cost: &C,
) -> Result<f64> {
    let augmented = task.cost_augmented_decode(w, input, target, 1.0)?;
    let decoded = task.decode(w, input)?;
    let aug_score = score(w, &task.phi(input, &augmented))? + cost.cost(target, &augmented);
    let plain_score = score(w, &task.phi(input, &decoded))?;
    Ok(aug_score - plain_score)
}

/// Ramp subgradient step (two decodes):
/// `w <- (1 - eta*lambda) w + eta * [phi(x, y_hat_w) - phi(x, y_aug)]`.
pub fn ramp_update<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
) -> Result<WeightVector> {
    let _ = cost; // the augmenting cost lives inside the task
    let decoded = task.decode(w, &example.input)?;
    let augmented = task.cost_augmented_decode(w, &example.input, &example.target, 1.0)?;
    let diff = delta_phi(task, &example.input, &decoded, &augmented);
    apply_step(w, ctx.decay(), ctx.eta(), diff.as_slice())
}

/// Monte-Carlo estimate of the probit loss `E_{e ~ N(0, I)}[cost(y, decode(w + e, x))]`.
///
/// Draw `i` uses the Gaussian stream `derive_seed(seed, i)`, so estimates are
/// deterministic in `seed` and different sample counts share a prefix.
/// Returns `(mean, stderr)` where stderr is the sample standard deviation
/// over the draws divided by `sqrt(n)` (0 when `n == 1`).
pub fn probit_loss_estimate<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    input: &T::Input,
    target: &T::Label,
    cost: &C,
    num_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if num_samples == 0 {
        return Err(Error::Config("probit estimate needs at least 1 sample".into()));
    }
    let mut values = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let noise = standard_normal_vec(derive_seed(seed, i as u64), w.len());
        let perturbed = w.plus(&noise)?;
        let decoded = task.decode(&perturbed, input)?;
        values.push(cost.cost(target, &decoded));
    }
    Ok(mean_and_stderr(&values))
}

/// Mean and standard error (sample std over sqrt(n)) of a value list.
pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    debug_assert!(n >= 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Probit update via the zero-order (score-function) gradient estimator
/// `g = (1/n) sum_i cost(y, decode(w + e_i, x)) * e_i`, then
/// `w <- (1 - eta*lambda) w - eta * g`. Performs `n` decode calls; draw `i`
/// uses the Gaussian stream `derive_seed(rule.rng_seed, i)`.
pub fn probit_update<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
    rule: &UpdateRule,
) -> Result<WeightVector> {
    if rule.probit_samples == 0 {
        return Err(Error::Config("probit rule needs at least 1 sample".into()));
    }
    let n = rule.probit_samples;
    let mut grad = vec![0.0; w.len()];
    for i in 0..n {
        let noise = standard_normal_vec(derive_seed(rule.rng_seed, i as u64), w.len());
        let perturbed = w.plus(&noise)?;
        let decoded = task.decode(&perturbed, &example.input)?;
        let loss = cost.cost(&example.target, &decoded);
        for (g, e) in grad.iter_mut().zip(noise.iter()) {
            *g += loss * e;
        }
    }
    let inv_n = 1.0 / n as f64;
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    apply_step(w, ctx.decay(), -ctx.eta(), &grad)
}

/// Direct-loss step (two decodes):
/// `w <- (1 - eta*lambda) w + (eta/epsilon) * [phi(x, y_hat_w) - phi(x, y_direct)]`
/// with `y_direct = argmax_{y'} [w . phi(x, y') + epsilon * cost(y, y')]`.
/// Either sign of epsilon is legal; zero is rejected.
pub fn direct_loss_update<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    w: &WeightVector,
    example: &Example<T::Input, T::Label>,
    cost: &C,
    ctx: &StepContext,
    rule: &UpdateRule,
) -> Result<WeightVector> {
    let _ = cost; // the augmenting cost lives inside the task
    let epsilon = rule.direct_epsilon;
    if epsilon == 0.0 {
        return Err(Error::ZeroEpsilon);
    }
    if !epsilon.is_finite() {
        return Err(Error::NonFinite("direct epsilon"));
    }
    let decoded = task.decode(w, &example.input)?;
    let direct =
        task.cost_augmented_decode(w, &example.input, &example.target, epsilon)?;
    let diff = delta_phi(task, &example.input, &decoded, &direct);
    apply_step(w, ctx.decay(), ctx.eta() / epsilon, diff.as_slice())
}
