//! Experiment configuration: a single JSON document driving synthesis,
//! training, evaluation, and verification.
//!
//! Parsing is strict — unknown keys are rejected at every level, and schema
//! errors carry the path to the offending field. After parsing, a
//! configuration is *resolved*: command-line overrides are applied, optional
//! fields are expanded to the concrete values the run will use (generated
//! cost matrices are expanded to their entries, the verify section's margin
//! constant to its threshold default), and the resolved document is written
//! next to the run's outputs so every artifact records exactly what produced
//! it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use orbit::costs::CostMatrix;
use orbit::losses::{RuleKind, UpdateRule};
use orbit::rng::derive_seed;
use orbit::trainer::Schedule;
use orbit::verify::{BoundCheckConfig, margin_condition_threshold};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Top-level configuration document. Every section is optional at parse
/// time; each command states which sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Which structured task the weights decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum TaskConfig {
    #[serde(rename = "MULTICLASS")]
    Multiclass { num_classes: usize, input_dim: usize },
    #[serde(rename = "ALIGNMENT")]
    Alignment { frame_dim: usize, mean_duration: f64 },
    #[serde(rename = "VOWEL")]
    Vowel { frame_dim: usize, mean_duration: f64 },
}

impl TaskConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TaskConfig::Multiclass { .. } => "multiclass",
            TaskConfig::Alignment { .. } => "alignment",
            TaskConfig::Vowel { .. } => "vowel",
        }
    }
}

/// Where the examples come from: a dataset directory on disk (written by
/// `synth` or `ingest-mnist`) or an inline generator specification.
/// Exactly one of the two must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.path, &self.generator) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "dataset: give either `path` or `generator`, not both".into(),
            )),
            (None, None) => Err(CliError::Usage(
                "dataset: one of `path` or `generator` is required".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Sizes of the three conventional splits; absent splits are size 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    #[serde(default)]
    pub validation: usize,
    #[serde(default)]
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, stem: &str) -> usize {
        match stem {
            "train" => self.train,
            "validation" => self.validation,
            "test" => self.test,
            _ => 0,
        }
    }
}

/// Planted-signal generator specification. Each split draws from its own
/// stream, derived from `seed` and the split's index (train 0,
/// validation 1, test 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum GeneratorConfig {
    #[serde(rename = "MULTICLASS")]
    Multiclass {
        num_classes: usize,
        input_dim: usize,
        noise: f64,
        sizes: SplitSizes,
        seed: u64,
    },
    #[serde(rename = "ALIGNMENT")]
    Alignment {
        frames_range: (usize, usize),
        boundaries_range: (usize, usize),
        frame_dim: usize,
        noise: f64,
        sizes: SplitSizes,
        seed: u64,
    },
    #[serde(rename = "VOWEL")]
    Vowel {
        frames_range: (usize, usize),
        frame_dim: usize,
        noise: f64,
        sizes: SplitSizes,
        seed: u64,
    },
}

impl GeneratorConfig {
    pub fn sizes(&self) -> SplitSizes {
        match self {
            GeneratorConfig::Multiclass { sizes, .. }
            | GeneratorConfig::Alignment { sizes, .. }
            | GeneratorConfig::Vowel { sizes, .. } => *sizes,
        }
    }

    pub fn seed_mut(&mut self) -> &mut u64 {
        match self {
            GeneratorConfig::Multiclass { seed, .. }
            | GeneratorConfig::Alignment { seed, .. }
            | GeneratorConfig::Vowel { seed, .. } => seed,
        }
    }
}

/// Task cost function. A `MATRIX` cost is given either as explicit rows in
/// `values` or as `(num_classes, seed)` for the seeded semi-randomized
/// generator; resolution always expands `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum CostConfig {
    #[serde(rename = "ZERO_ONE")]
    ZeroOne,
    #[serde(rename = "MATRIX")]
    Matrix {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_classes: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Vec<f64>>>,
    },
    #[serde(rename = "TAU_INSENSITIVE")]
    TauInsensitive { tau: f64 },
    #[serde(rename = "VOWEL")]
    Vowel { tau_b: f64, tau_e: f64 },
}

impl CostConfig {
    /// Builds the matrix a `MATRIX` cost denotes (after resolution the
    /// entries are always explicit).
    pub fn matrix(&self) -> Result<CostMatrix, CliError> {
        match self {
            CostConfig::Matrix {
                values: Some(rows), ..
            } => Ok(CostMatrix::from_rows(rows.clone())?),
            CostConfig::Matrix {
                num_classes: Some(k),
                seed: Some(s),
                values: None,
            } => Ok(CostMatrix::random(*k, *s)?),
            CostConfig::Matrix { .. } => Err(CliError::Usage(
                "cost: MATRIX needs either `values` or both `num_classes` and `seed`".into(),
            )),
            _ => Err(CliError::Usage("cost: not a MATRIX cost".into())),
        }
    }
}

fn default_direct_epsilon() -> f64 {
    UpdateRule::new(RuleKind::Direct).direct_epsilon
}

fn default_probit_samples() -> usize {
    UpdateRule::new(RuleKind::Probit).probit_samples
}

/// Update rule and its rule-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub kind: RuleKind,
    /// Epsilon for the DIRECT rule; either sign is legal, zero is not.
    #[serde(default = "default_direct_epsilon")]
    pub direct_epsilon: f64,
    /// Monte-Carlo sample count for the PROBIT rule.
    #[serde(default = "default_probit_samples")]
    pub probit_samples: usize,
    /// Base seed for the PROBIT rule's Gaussian draws.
    #[serde(default)]
    pub rng_seed: u64,
}

impl RuleConfig {
    pub fn to_update_rule(&self) -> UpdateRule {
        let mut rule = UpdateRule::new(self.kind);
        rule.direct_epsilon = self.direct_epsilon;
        rule.probit_samples = self.probit_samples;
        rule.rng_seed = self.rng_seed;
        rule
    }
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

/// Scalar training parameters (the update rule lives in the `rule`
/// section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: u32,
    pub eta0: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
    /// Explicit initial weights; zero initialization when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_weights: Option<Vec<f64>>,
}

fn default_split() -> String {
    "test".to_string()
}

/// What to evaluate: a saved model against one dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub model: PathBuf,
    #[serde(default = "default_split")]
    pub split: String,
}

fn default_sigma() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.01
}
fn default_m() -> usize {
    100
}
fn default_mc_samples() -> usize {
    20_000
}

/// Parameters of the margin-conditioned bound checks run by `verify`.
/// `margin_eta` defaults to the admissible threshold
/// `sigma * sqrt(2 ln(m / sigma))` scaled for the `w / sigma` model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_eta: Option<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: default_sigma(),
            gamma: default_gamma(),
            delta: default_delta(),
            m: default_m(),
            margin_eta: None,
            mc_samples: default_mc_samples(),
        }
    }
}

impl VerifySection {
    /// The bound-check configuration this section denotes. The margin
    /// suite's Monte-Carlo streams derive from the section seed the same way
    /// the library's default battery derives them.
    pub fn to_bound_config(&self) -> BoundCheckConfig {
        BoundCheckConfig {
            sigma: self.sigma,
            gamma: self.gamma,
            delta: self.delta,
            m: self.m,
            margin_eta: self.resolved_margin_eta(),
            mc_samples: self.mc_samples,
            seed: derive_seed(self.seed, 4),
        }
    }

    pub fn resolved_margin_eta(&self) -> f64 {
        self.margin_eta
            .unwrap_or_else(|| margin_condition_threshold(self.sigma, self.m) / self.sigma)
    }
}

/// Reads and strictly parses a configuration file, reporting schema errors
/// with the path to the offending field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let mut msg = String::new();
        let pointer = e.path().to_string();
        let _ = write!(msg, "config error in {}", path.display());
        if pointer != "." {
            let _ = write!(msg, " at `{pointer}`");
        }
        let _ = write!(msg, ": {}", e.inner());
        CliError::Usage(msg)
    })
}

/// Command-line overrides applied during resolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides<'a> {
    /// Replaces the subcommand's primary seed (generator seed for `synth`,
    /// shuffle seed for `train`, check seed for `verify`).
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
}

/// Applies overrides and expands every optional value the run will use.
pub fn resolve(
    mut cfg: ExperimentConfig,
    overrides: Overrides<'_>,
    command: &str,
) -> Result<ExperimentConfig, CliError> {
    if let Some(out) = overrides.out {
        cfg.output_dir = Some(out.to_path_buf());
    }
    if let Some(seed) = overrides.seed {
        match command {
            "synth" => {
                let dataset = cfg.dataset.as_mut().and_then(|d| d.generator.as_mut());
                match dataset {
                    Some(generator) => *generator.seed_mut() = seed,
                    None => {
                        return Err(CliError::Usage(
                            "--seed overrides the generator seed, but the config has no \
                             dataset.generator section"
                                .into(),
                        ));
                    }
                }
            }
            "train" => match cfg.train.as_mut() {
                Some(train) => train.shuffle_seed = seed,
                None => {
                    return Err(CliError::Usage(
                        "--seed overrides the shuffle seed, but the config has no train section"
                            .into(),
                    ));
                }
            },
            "verify" => cfg.verify.get_or_insert_with(VerifySection::default).seed = seed,
            other => {
                return Err(CliError::Usage(format!(
                    "the {other} command has no seed to override"
                )));
            }
        }
    }
    if let Some(dataset) = &cfg.dataset {
        dataset.validate()?;
    }
    // The verify command runs the default battery when the section is
    // absent; materialize it so the resolved document says what ran.
    if command == "verify" && cfg.verify.is_none() {
        cfg.verify = Some(VerifySection::default());
    }
    // Expand a seeded MATRIX cost to its explicit entries so the resolved
    // document is self-contained.
    if let Some(cost @ CostConfig::Matrix { .. }) = &mut cfg.cost {
        let matrix = cost.matrix()?;
        if let CostConfig::Matrix { values, .. } = cost {
            *values = Some(matrix.rows());
        }
    }
    // Expand the verify section's margin constant to the value the run uses.
    if let Some(verify) = &mut cfg.verify {
        verify.margin_eta = Some(verify.resolved_margin_eta());
    }
    Ok(cfg)
}

/// Writes the resolved configuration next to the run's outputs.
pub fn write_resolved(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    let path = out_dir.join("config.resolved.json");
    orbit::data::save_json(&path, cfg)?;
    Ok(path)
}

/// The output directory a writing command must have (config `output_dir` or
/// `--out`).
pub fn required_output_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.output_dir.clone().ok_or_else(|| {
        CliError::Usage("an output directory is required (config `output_dir` or --out)".into())
    })
}
