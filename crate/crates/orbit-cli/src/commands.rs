//! The CLI subcommands: dataset ingestion and synthesis, training,
//! evaluation, verification, and report aggregation.
//!
//! Every writing command produces deterministic artifacts: given the same
//! resolved configuration it rewrites byte-identical files. Nothing here
//! records timestamps, absolute paths it was not given, or iteration order
//! that depends on the filesystem (directory walks are sorted).

use std::fs;
use std::path::{Path, PathBuf};

use orbit::core::{Example, Task, WeightVector};
use orbit::costs::{
    AlignmentCostConfig, CostFunction, CostMatrix, TauInsensitiveCost, VowelCost, VowelCostConfig,
    ZeroOneCost,
};
use orbit::data::{
    self, DATA_FORMAT_VERSION, DatasetKind, DatasetManifest, LinearModelFile, file_sha256,
    read_alignment_csv, read_multiclass_csv, read_vowel_csv, save_dataset, save_json,
    write_alignment_csv, write_multiclass_csv, write_vowel_csv,
};
use orbit::mnist;
use orbit::rng::derive_seed;
use orbit::tasks::synth::{synth_alignment, synth_multiclass, synth_vowel};
use orbit::tasks::{AlignmentTask, MulticlassTask, MulticlassTrainingCost, VowelTask};
use orbit::trainer::{TrainConfig, TrainReport, evaluate, sgd_train};
use orbit::verify::{CheckRecord, Verdict, run_all_checks_with};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::config::{
    CostConfig, ExperimentConfig, GeneratorConfig, TaskConfig, required_output_dir, write_resolved,
};
use crate::{CliError, IngestArgs, ReportArgs};

/// Split stems every dataset directory may contain, in canonical order.
const SPLIT_STEMS: [&str; 3] = ["train", "validation", "test"];

/// Instances drawn by the margin-conditioned bound suite during `verify`.
const MARGIN_SUITE_INSTANCES: usize = 50;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn kind_name(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Multiclass => "multiclass",
        DatasetKind::Alignment => "alignment",
        DatasetKind::Vowel => "vowel",
    }
}

fn verdict_name(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skipped => "SKIPPED",
    }
}

// ---------------------------------------------------------------------------
// ingest-mnist
// ---------------------------------------------------------------------------

/// Reads the four raw IDX files, projects the images onto the principal
/// components fitted on the training split alone, and writes the three
/// splits as CSV datasets with manifests.
pub fn cmd_ingest_mnist(args: IngestArgs) -> Result<(), CliError> {
    let pca_dim = args.pca_dim;
    let split_seed = args.seed.unwrap_or(args.split_seed);
    let split = mnist::ingest(
        &args.train_images,
        &args.train_labels,
        &args.test_images,
        &args.test_labels,
        pca_dim,
        split_seed,
    )?;
    fs::create_dir_all(&args.out)?;
    let basis_sha256 = split.pca.basis_sha256();
    let sources = json!({
        "train_images": source_entry(&args.train_images)?,
        "train_labels": source_entry(&args.train_labels)?,
        "test_images": source_entry(&args.test_images)?,
        "test_labels": source_entry(&args.test_labels)?,
    });
    for (stem, examples) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let params = json!({
            "sources": sources,
            "pca_dim": pca_dim,
            "pca_basis_sha256": basis_sha256,
            "split_seed": split_seed,
            "split": stem,
        });
        save_dataset(
            &args.out,
            stem,
            DatasetKind::Multiclass,
            "mnist-pca",
            params,
            examples.len(),
            None,
            |path| write_multiclass_csv(path, examples),
        )?;
        if !args.quiet {
            println!(
                "wrote {stem}: {} examples -> {}",
                examples.len(),
                args.out.join(format!("{stem}.csv")).display()
            );
        }
    }
    if !args.quiet {
        println!("pca: {pca_dim} components, basis sha256 {basis_sha256}");
    }
    Ok(())
}

fn source_entry(path: &Path) -> Result<Value, CliError> {
    Ok(json!({
        "path": path.display().to_string(),
        "sha256": file_sha256(path)?,
    }))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Generates the configured planted-signal dataset splits into the output
/// directory.
pub fn cmd_synth(cfg: ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let out_dir = required_output_dir(&cfg)?;
    let generator = cfg
        .dataset
        .as_ref()
        .and_then(|d| d.generator.as_ref())
        .ok_or_else(|| usage("synth requires a `dataset.generator` section"))?
        .clone();
    fs::create_dir_all(&out_dir)?;
    write_resolved(&cfg, &out_dir)?;
    materialize_generator(&generator, &out_dir, quiet)?;
    Ok(())
}

/// Writes the generator's non-empty splits into `dir`. Each split draws
/// from a stream derived from the generator seed and the split's index, so
/// the splits are disjoint and individually reproducible.
fn materialize_generator(
    generator: &GeneratorConfig,
    dir: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let sizes = generator.sizes();
    for (index, stem) in SPLIT_STEMS.iter().enumerate() {
        let n = sizes.get(stem);
        if n == 0 {
            continue;
        }
        match generator {
            GeneratorConfig::Multiclass {
                num_classes,
                input_dim,
                noise,
                seed,
                ..
            } => {
                let ds = synth_multiclass(
                    *num_classes,
                    *input_dim,
                    *noise,
                    n,
                    derive_seed(*seed, index as u64),
                )?;
                let mut params = ds.params.clone();
                params["split"] = json!(stem);
                save_dataset(
                    dir,
                    stem,
                    DatasetKind::Multiclass,
                    "synth-multiclass",
                    params,
                    n,
                    ds.feature_normalizer,
                    |path| write_multiclass_csv(path, &ds.examples),
                )?;
            }
            GeneratorConfig::Alignment {
                frames_range,
                boundaries_range,
                frame_dim,
                noise,
                seed,
                ..
            } => {
                let ds = synth_alignment(
                    *frames_range,
                    *boundaries_range,
                    *frame_dim,
                    *noise,
                    n,
                    derive_seed(*seed, index as u64),
                )?;
                let mut params = ds.params.clone();
                params["split"] = json!(stem);
                save_dataset(
                    dir,
                    stem,
                    DatasetKind::Alignment,
                    "synth-alignment",
                    params,
                    n,
                    ds.feature_normalizer,
                    |path| write_alignment_csv(path, &ds.examples),
                )?;
            }
            GeneratorConfig::Vowel {
                frames_range,
                frame_dim,
                noise,
                seed,
                ..
            } => {
                let ds = synth_vowel(
                    *frames_range,
                    *frame_dim,
                    *noise,
                    n,
                    derive_seed(*seed, index as u64),
                )?;
                let mut params = ds.params.clone();
                params["split"] = json!(stem);
                save_dataset(
                    dir,
                    stem,
                    DatasetKind::Vowel,
                    "synth-vowel",
                    params,
                    n,
                    ds.feature_normalizer,
                    |path| write_vowel_csv(path, &ds.examples),
                )?;
            }
        }
        if !quiet {
            println!(
                "wrote {stem}: {n} examples -> {}",
                dir.join(format!("{stem}.csv")).display()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// dataset loading
// ---------------------------------------------------------------------------

/// One loaded dataset split plus the hash of its manifest, which model and
/// evaluation files record for provenance.
struct LoadedSplit<X, Y> {
    examples: Vec<Example<X, Y>>,
    manifest_sha256: String,
}

/// Parser turning one split payload into typed examples.
type SplitReader<X, Y> = fn(&Path) -> orbit::Result<Vec<Example<X, Y>>>;

fn load_split<X, Y>(
    dir: &Path,
    stem: &str,
    expected: DatasetKind,
    read: SplitReader<X, Y>,
) -> Result<Option<LoadedSplit<X, Y>>, CliError> {
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    if !manifest_path.exists() {
        return Ok(None);
    }
    let manifest = DatasetManifest::load(&manifest_path)?;
    if manifest.kind != expected {
        return Err(usage(format!(
            "dataset split `{stem}` in {} holds {} examples, but the task needs {}",
            dir.display(),
            kind_name(manifest.kind),
            kind_name(expected)
        )));
    }
    let payload = manifest.verified_payload_path(&manifest_path)?;
    let examples = read(&payload)?;
    if examples.len() != manifest.count {
        return Err(CliError::Data(format!(
            "{}: manifest says {} examples, payload has {}",
            payload.display(),
            manifest.count,
            examples.len()
        )));
    }
    Ok(Some(LoadedSplit {
        examples,
        manifest_sha256: file_sha256(&manifest_path)?,
    }))
}

fn load_required_split<X, Y>(
    dir: &Path,
    stem: &str,
    expected: DatasetKind,
    read: SplitReader<X, Y>,
) -> Result<LoadedSplit<X, Y>, CliError> {
    load_split(dir, stem, expected, read)?.ok_or_else(|| {
        CliError::Data(format!(
            "missing dataset split `{stem}` in {} (no {stem}.manifest.json)",
            dir.display()
        ))
    })
}

/// Resolves the dataset section to a directory of split files, running the
/// generator into `{out_dir}/dataset` when the config specifies one.
fn dataset_dir(cfg: &ExperimentConfig, out_dir: &Path, quiet: bool) -> Result<PathBuf, CliError> {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| usage("this command requires a `dataset` section"))?;
    dataset.validate()?;
    if let Some(path) = &dataset.path {
        if !path.is_dir() {
            return Err(CliError::Data(format!(
                "dataset path {} is not a directory",
                path.display()
            )));
        }
        return Ok(path.clone());
    }
    let generator = dataset.generator.as_ref().expect("validated above");
    let dir = out_dir.join("dataset");
    materialize_generator(generator, &dir, quiet)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// task/cost compatibility checks
// ---------------------------------------------------------------------------

fn check_multiclass_split(
    split: &LoadedSplit<Vec<f64>, usize>,
    stem: &str,
    num_classes: usize,
    input_dim: usize,
) -> Result<(), CliError> {
    if let Some(ex) = split.examples.first()
        && ex.input.len() != input_dim
    {
        return Err(usage(format!(
            "task.input_dim is {input_dim} but the `{stem}` split has {} features per example",
            ex.input.len()
        )));
    }
    if let Some(&label) = split.examples.iter().map(|ex| &ex.target).max()
        && label >= num_classes
    {
        return Err(usage(format!(
            "task.num_classes is {num_classes} but the `{stem}` split contains label {label}"
        )));
    }
    Ok(())
}

fn check_frames_split<X, Y>(
    split: &LoadedSplit<X, Y>,
    stem: &str,
    frame_dim: usize,
    frames_of: fn(&X) -> &Vec<Vec<f64>>,
) -> Result<(), CliError> {
    for ex in &split.examples {
        if let Some(frame) = frames_of(&ex.input).first()
            && frame.len() != frame_dim
        {
            return Err(usage(format!(
                "task.frame_dim is {frame_dim} but the `{stem}` split has {}-dimensional frames",
                frame.len()
            )));
        }
    }
    Ok(())
}

fn check_vowel_targets(
    split: &LoadedSplit<orbit::tasks::VowelInput, (usize, usize)>,
    stem: &str,
) -> Result<(), CliError> {
    for ex in &split.examples {
        let (b, e) = ex.target;
        if b >= e || e > ex.input.num_frames() {
            return Err(CliError::Data(format!(
                "`{stem}` split contains an invalid vowel interval ({b}, {e}) \
                 for {} frames",
                ex.input.num_frames()
            )));
        }
    }
    Ok(())
}

/// The cost matrix a multiclass run uses, if any; also checks its size.
fn multiclass_cost(
    cost: &CostConfig,
    num_classes: usize,
) -> Result<Option<CostMatrix>, CliError> {
    match cost {
        CostConfig::ZeroOne => Ok(None),
        CostConfig::Matrix { .. } => {
            let matrix = cost.matrix()?;
            if matrix.num_classes() != num_classes {
                return Err(usage(format!(
                    "cost matrix is {}x{0} but task.num_classes is {num_classes}",
                    matrix.num_classes()
                )));
            }
            Ok(Some(matrix))
        }
        _ => Err(usage(
            "cost: a MULTICLASS task takes a ZERO_ONE or MATRIX cost",
        )),
    }
}

fn alignment_cost(cost: &CostConfig) -> Result<AlignmentCostConfig, CliError> {
    match cost {
        CostConfig::TauInsensitive { tau } => Ok(AlignmentCostConfig::new(*tau)?),
        _ => Err(usage(
            "cost: an ALIGNMENT task takes a TAU_INSENSITIVE cost",
        )),
    }
}

fn vowel_cost_config(cost: &CostConfig) -> Result<VowelCostConfig, CliError> {
    match cost {
        CostConfig::Vowel { tau_b, tau_e } => Ok(VowelCostConfig::new(*tau_b, *tau_e)?),
        _ => Err(usage("cost: a VOWEL task takes a VOWEL cost")),
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Trains the configured rule on the `train` split (evaluating each epoch on
/// `validation` when present) and writes `model.json`, `report.jsonl`, and
/// the resolved configuration.
pub fn cmd_train(cfg: ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let task_cfg = cfg
        .task
        .clone()
        .ok_or_else(|| usage("train requires a `task` section"))?;
    let cost_cfg = cfg
        .cost
        .clone()
        .ok_or_else(|| usage("train requires a `cost` section"))?;
    let rule_cfg = cfg
        .rule
        .clone()
        .ok_or_else(|| usage("train requires a `rule` section"))?;
    let train_section = cfg
        .train
        .clone()
        .ok_or_else(|| usage("train requires a `train` section"))?;
    let out_dir = required_output_dir(&cfg)?;
    fs::create_dir_all(&out_dir)?;
    write_resolved(&cfg, &out_dir)?;
    let data_dir = dataset_dir(&cfg, &out_dir, quiet)?;

    let train_config = TrainConfig {
        epochs: train_section.epochs,
        eta0: train_section.eta0,
        schedule: train_section.schedule,
        lambda: train_section.lambda,
        shuffle_seed: train_section.shuffle_seed,
        rule: rule_cfg.to_update_rule(),
        init_weights: train_section.init_weights.clone(),
    };
    let echo = serde_json::to_value(&cfg)?;

    match task_cfg {
        TaskConfig::Multiclass {
            num_classes,
            input_dim,
        } => {
            let train = load_required_split(
                &data_dir,
                "train",
                DatasetKind::Multiclass,
                read_multiclass_csv,
            )?;
            let validation =
                load_split(&data_dir, "validation", DatasetKind::Multiclass, read_multiclass_csv)?;
            check_multiclass_split(&train, "train", num_classes, input_dim)?;
            if let Some(v) = &validation {
                check_multiclass_split(v, "validation", num_classes, input_dim)?;
            }
            let task = MulticlassTask::new(num_classes, input_dim)?;
            match multiclass_cost(&cost_cfg, num_classes)? {
                None => run_linear_train(
                    &task,
                    "multiclass",
                    &ZeroOneCost,
                    &train,
                    validation.as_ref(),
                    &train_config,
                    &out_dir,
                    &echo,
                    quiet,
                ),
                Some(matrix) => {
                    let task =
                        task.with_training_cost(MulticlassTrainingCost::Matrix(matrix.clone()))?;
                    run_linear_train(
                        &task,
                        "multiclass",
                        &matrix,
                        &train,
                        validation.as_ref(),
                        &train_config,
                        &out_dir,
                        &echo,
                        quiet,
                    )
                }
            }
        }
        TaskConfig::Alignment {
            frame_dim,
            mean_duration,
        } => {
            let cost_config = alignment_cost(&cost_cfg)?;
            let train = load_required_split(
                &data_dir,
                "train",
                DatasetKind::Alignment,
                read_alignment_csv,
            )?;
            let validation =
                load_split(&data_dir, "validation", DatasetKind::Alignment, read_alignment_csv)?;
            check_frames_split(&train, "train", frame_dim, |input| &input.frames)?;
            if let Some(v) = &validation {
                check_frames_split(v, "validation", frame_dim, |input| &input.frames)?;
            }
            let task = AlignmentTask::new(frame_dim, mean_duration, cost_config)?;
            run_linear_train(
                &task,
                "alignment",
                &TauInsensitiveCost(cost_config),
                &train,
                validation.as_ref(),
                &train_config,
                &out_dir,
                &echo,
                quiet,
            )
        }
        TaskConfig::Vowel {
            frame_dim,
            mean_duration,
        } => {
            let cost_config = vowel_cost_config(&cost_cfg)?;
            let train =
                load_required_split(&data_dir, "train", DatasetKind::Vowel, read_vowel_csv)?;
            let validation =
                load_split(&data_dir, "validation", DatasetKind::Vowel, read_vowel_csv)?;
            check_frames_split(&train, "train", frame_dim, |input| &input.frames)?;
            check_vowel_targets(&train, "train")?;
            if let Some(v) = &validation {
                check_frames_split(v, "validation", frame_dim, |input| &input.frames)?;
                check_vowel_targets(v, "validation")?;
            }
            let task = VowelTask::new(frame_dim, mean_duration, cost_config)?;
            run_linear_train(
                &task,
                "vowel",
                &VowelCost(cost_config),
                &train,
                validation.as_ref(),
                &train_config,
                &out_dir,
                &echo,
                quiet,
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_linear_train<T: Task, C: CostFunction<T::Label>>(
    task: &T,
    task_kind: &str,
    cost: &C,
    train: &LoadedSplit<T::Input, T::Label>,
    validation: Option<&LoadedSplit<T::Input, T::Label>>,
    train_config: &TrainConfig,
    out_dir: &Path,
    config_echo: &Value,
    quiet: bool,
) -> Result<(), CliError> {
    let eval = validation.map(|split| split.examples.as_slice());
    let (weights, report) = sgd_train(task, &train.examples, eval, cost, train_config)?;
    let model = LinearModelFile {
        format_version: DATA_FORMAT_VERSION,
        task_kind: task_kind.to_string(),
        dim: weights.len(),
        weights: weights.into_vec(),
        config_echo: config_echo.clone(),
        dataset_manifest_hash: train.manifest_sha256.clone(),
    };
    let model_path = out_dir.join("model.json");
    model.save(&model_path)?;
    write_report_jsonl(&out_dir.join("report.jsonl"), &report)?;
    if !quiet {
        for record in &report.records {
            let mut line = format!(
                "epoch {}: train_mean_cost {:.6}",
                record.epoch, record.train_mean_cost
            );
            if let Some(v) = record.mean_surrogate_loss {
                line.push_str(&format!(" surrogate {v:.6}"));
            }
            if let (Some(c), Some(e)) = (record.eval_mean_cost, record.eval_error_rate) {
                line.push_str(&format!(" eval_mean_cost {c:.6} eval_error_rate {e:.6}"));
            }
            println!("{line}");
        }
        println!(
            "model -> {} (weights sha256 {})",
            model_path.display(),
            report.final_params_sha256
        );
    }
    Ok(())
}

fn write_report_jsonl(path: &Path, report: &TrainReport) -> Result<(), CliError> {
    let mut out = String::new();
    for record in &report.records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// One evaluation of a saved model on a dataset split, as written to
/// `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub format_version: u32,
    /// Path of the evaluated model file, as given.
    pub model: String,
    /// Update rule recorded in the model's configuration echo.
    pub rule: String,
    pub split: String,
    pub count: usize,
    pub mean_cost: f64,
    pub error_rate: f64,
    /// Hash of the manifest of the split evaluated here.
    pub dataset_manifest_hash: String,
    /// Hash of the manifest of the split the model was trained on.
    pub model_dataset_manifest_hash: String,
}

/// Evaluates a saved model on the configured split and writes `eval.json`.
pub fn cmd_eval(cfg: ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let task_cfg = cfg
        .task
        .clone()
        .ok_or_else(|| usage("eval requires a `task` section"))?;
    let cost_cfg = cfg
        .cost
        .clone()
        .ok_or_else(|| usage("eval requires a `cost` section"))?;
    let eval_section = cfg
        .eval
        .clone()
        .ok_or_else(|| usage("eval requires an `eval` section"))?;
    if !SPLIT_STEMS.contains(&eval_section.split.as_str()) {
        return Err(usage(format!(
            "eval.split must be one of train/validation/test, got `{}`",
            eval_section.split
        )));
    }
    let out_dir = required_output_dir(&cfg)?;
    fs::create_dir_all(&out_dir)?;
    write_resolved(&cfg, &out_dir)?;
    let data_dir = dataset_dir(&cfg, &out_dir, quiet)?;

    let model = LinearModelFile::load(&eval_section.model)?;
    if model.task_kind != task_cfg.kind_name() {
        return Err(usage(format!(
            "model {} is a {} model, but the config's task is {}",
            eval_section.model.display(),
            model.task_kind,
            task_cfg.kind_name()
        )));
    }
    let rule = model.config_echo["rule"]["kind"]
        .as_str()
        .unwrap_or("UNKNOWN")
        .to_string();
    let weights = WeightVector::new(model.weights.clone())?;
    let stem = eval_section.split.as_str();

    let (count, mean_cost, error_rate, split_sha256) = match task_cfg {
        TaskConfig::Multiclass {
            num_classes,
            input_dim,
        } => {
            let split =
                load_required_split(&data_dir, stem, DatasetKind::Multiclass, read_multiclass_csv)?;
            check_multiclass_split(&split, stem, num_classes, input_dim)?;
            let task = MulticlassTask::new(num_classes, input_dim)?;
            check_model_dim(&task, &weights, &eval_section.model)?;
            let (mean_cost, error_rate) = match multiclass_cost(&cost_cfg, num_classes)? {
                None => evaluate(&task, &weights, &split.examples, &ZeroOneCost)?,
                Some(matrix) => evaluate(&task, &weights, &split.examples, &matrix)?,
            };
            (split.examples.len(), mean_cost, error_rate, split.manifest_sha256)
        }
        TaskConfig::Alignment {
            frame_dim,
            mean_duration,
        } => {
            let cost_config = alignment_cost(&cost_cfg)?;
            let split =
                load_required_split(&data_dir, stem, DatasetKind::Alignment, read_alignment_csv)?;
            check_frames_split(&split, stem, frame_dim, |input| &input.frames)?;
            let task = AlignmentTask::new(frame_dim, mean_duration, cost_config)?;
            check_model_dim(&task, &weights, &eval_section.model)?;
            let (mean_cost, error_rate) =
                evaluate(&task, &weights, &split.examples, &TauInsensitiveCost(cost_config))?;
            (split.examples.len(), mean_cost, error_rate, split.manifest_sha256)
        }
        TaskConfig::Vowel {
            frame_dim,
            mean_duration,
        } => {
            let cost_config = vowel_cost_config(&cost_cfg)?;
            let split = load_required_split(&data_dir, stem, DatasetKind::Vowel, read_vowel_csv)?;
            check_frames_split(&split, stem, frame_dim, |input| &input.frames)?;
            check_vowel_targets(&split, stem)?;
            let task = VowelTask::new(frame_dim, mean_duration, cost_config)?;
            check_model_dim(&task, &weights, &eval_section.model)?;
            let (mean_cost, error_rate) =
                evaluate(&task, &weights, &split.examples, &VowelCost(cost_config))?;
            (split.examples.len(), mean_cost, error_rate, split.manifest_sha256)
        }
    };

    let record = EvalRecord {
        format_version: DATA_FORMAT_VERSION,
        model: eval_section.model.display().to_string(),
        rule,
        split: eval_section.split.clone(),
        count,
        mean_cost,
        error_rate,
        dataset_manifest_hash: split_sha256,
        model_dataset_manifest_hash: model.dataset_manifest_hash.clone(),
    };
    let eval_path = out_dir.join("eval.json");
    save_json(&eval_path, &record)?;
    if !quiet {
        println!("split {stem}: count {count} mean_cost {mean_cost:.6} error_rate {error_rate:.6}");
        println!("eval -> {}", eval_path.display());
    }
    Ok(())
}

fn check_model_dim<T: Task>(
    task: &T,
    weights: &WeightVector,
    model_path: &Path,
) -> Result<(), CliError> {
    if weights.len() != task.dim() {
        return Err(usage(format!(
            "model {} has {} weights, but the configured task needs {}",
            model_path.display(),
            weights.len(),
            task.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Runs the full verification battery and writes one verdict per line to
/// `verdicts.jsonl`. Any FAIL verdict makes the command exit with status 3.
pub fn cmd_verify(cfg: ExperimentConfig, quiet: bool) -> Result<(), CliError> {
    let section = cfg.verify.clone().unwrap_or_default();
    let out_dir = required_output_dir(&cfg)?;
    fs::create_dir_all(&out_dir)?;
    write_resolved(&cfg, &out_dir)?;
    let bound_cfg = section.to_bound_config();
    let records = run_all_checks_with(section.seed, &bound_cfg, MARGIN_SUITE_INSTANCES)?;
    write_verdicts_jsonl(&out_dir.join("verdicts.jsonl"), &records)?;
    let mut failed = 0usize;
    let mut skipped = 0usize;
    for record in &records {
        match record.verdict {
            Verdict::Fail => failed += 1,
            Verdict::Skipped => skipped += 1,
            Verdict::Pass => {}
        }
        if !quiet {
            println!("{}: {}", record.check, verdict_name(record.verdict));
        }
    }
    if !quiet {
        println!(
            "verification: {} checks, {failed} failed, {skipped} skipped",
            records.len()
        );
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

fn write_verdicts_jsonl(path: &Path, records: &[CheckRecord]) -> Result<(), CliError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct EvalRow {
    source: String,
    rule: String,
    split: String,
    count: usize,
    mean_cost: f64,
    error_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TrainRow {
    source: String,
    epochs: usize,
    final_train_mean_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_surrogate_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_eval_mean_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_eval_error_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct VerifyRow {
    source: String,
    pass: usize,
    fail: usize,
    skipped: usize,
    failed_checks: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    format_version: u32,
    evaluations: Vec<EvalRow>,
    training: Vec<TrainRow>,
    verification: Vec<VerifyRow>,
}

/// Fields of an epoch record the report cares about (tolerates extras so
/// reports survive format growth).
#[derive(Debug, Clone, Deserialize)]
struct EpochRow {
    #[allow(dead_code)]
    epoch: u32,
    train_mean_cost: f64,
    #[serde(default)]
    mean_surrogate_loss: Option<f64>,
    #[serde(default)]
    eval_mean_cost: Option<f64>,
    #[serde(default)]
    eval_error_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct VerdictRow {
    check: String,
    verdict: String,
}

/// Collects `eval.json`, `report.jsonl`, and `verdicts.jsonl` files under
/// the given run directories and writes `summary.txt` and `summary.json`.
pub fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => Some(crate::config::load_config(path)?),
        None => None,
    };
    let mut roots = args.roots.clone();
    if roots.is_empty()
        && let Some(dir) = config.as_ref().and_then(|c| c.output_dir.clone())
    {
        roots.push(dir);
    }
    if roots.is_empty() {
        return Err(usage(
            "report needs run directories (positional arguments or the config's output_dir)",
        ));
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| roots[0].clone());

    let mut artifacts = Vec::new();
    for root in &roots {
        if !root.is_dir() {
            return Err(CliError::Data(format!(
                "report root {} is not a directory",
                root.display()
            )));
        }
        collect_artifacts(root, &mut artifacts)?;
    }

    let mut summary = Summary {
        format_version: DATA_FORMAT_VERSION,
        evaluations: Vec::new(),
        training: Vec::new(),
        verification: Vec::new(),
    };
    for path in &artifacts {
        let source = path.display().to_string();
        match path.file_name().and_then(|n| n.to_str()) {
            Some("eval.json") => {
                let record: EvalRecord = data::load_json(path)
                    .map_err(|e| CliError::Data(format!("{source}: {e}")))?;
                summary.evaluations.push(EvalRow {
                    source,
                    rule: record.rule,
                    split: record.split,
                    count: record.count,
                    mean_cost: record.mean_cost,
                    error_rate: record.error_rate,
                });
            }
            Some("report.jsonl") => {
                let rows: Vec<EpochRow> = read_jsonl(path)?;
                if let Some(last) = rows.last() {
                    summary.training.push(TrainRow {
                        source,
                        epochs: rows.len(),
                        final_train_mean_cost: last.train_mean_cost,
                        final_surrogate_loss: last.mean_surrogate_loss,
                        final_eval_mean_cost: last.eval_mean_cost,
                        final_eval_error_rate: last.eval_error_rate,
                    });
                }
            }
            Some("verdicts.jsonl") => {
                let rows: Vec<VerdictRow> = read_jsonl(path)?;
                let mut row = VerifyRow {
                    source,
                    pass: 0,
                    fail: 0,
                    skipped: 0,
                    failed_checks: Vec::new(),
                };
                for r in rows {
                    match r.verdict.as_str() {
                        "PASS" => row.pass += 1,
                        "FAIL" => {
                            row.fail += 1;
                            row.failed_checks.push(r.check);
                        }
                        _ => row.skipped += 1,
                    }
                }
                summary.verification.push(row);
            }
            _ => {}
        }
    }

    fs::create_dir_all(&out_dir)?;
    let text = render_summary(&summary);
    fs::write(out_dir.join("summary.txt"), &text)?;
    save_json(&out_dir.join("summary.json"), &summary)?;
    if !args.quiet {
        print!("{text}");
        println!("summary -> {}", out_dir.join("summary.txt").display());
    }
    Ok(())
}

/// Depth-first, name-sorted walk collecting known artifact files.
fn collect_artifacts(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_artifacts(&path, out)?;
        } else if matches!(
            path.file_name().and_then(|n| n.to_str()),
            Some("eval.json" | "report.jsonl" | "verdicts.jsonl")
        ) {
            out.push(path);
        }
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn render_summary(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str("EVALUATIONS\n");
    if summary.evaluations.is_empty() {
        out.push_str("  (none)\n");
    } else {
        out.push_str(&format!(
            "  {:<18} {:<12} {:>8} {:>12} {:>12}  {}\n",
            "rule", "split", "count", "mean_cost", "error_rate", "source"
        ));
        for row in &summary.evaluations {
            out.push_str(&format!(
                "  {:<18} {:<12} {:>8} {:>12.6} {:>12.6}  {}\n",
                row.rule, row.split, row.count, row.mean_cost, row.error_rate, row.source
            ));
        }
    }
    out.push('\n');
    out.push_str("TRAINING\n");
    if summary.training.is_empty() {
        out.push_str("  (none)\n");
    } else {
        out.push_str(&format!(
            "  {:>6} {:>12} {:>12} {:>12} {:>12}  {}\n",
            "epochs", "train_cost", "surrogate", "eval_cost", "eval_error", "source"
        ));
        for row in &summary.training {
            out.push_str(&format!(
                "  {:>6} {:>12.6} {:>12} {:>12} {:>12}  {}\n",
                row.epochs,
                row.final_train_mean_cost,
                opt(row.final_surrogate_loss),
                opt(row.final_eval_mean_cost),
                opt(row.final_eval_error_rate),
                row.source
            ));
        }
    }
    out.push('\n');
    out.push_str("VERIFICATION\n");
    if summary.verification.is_empty() {
        out.push_str("  (none)\n");
    } else {
        out.push_str(&format!(
            "  {:>5} {:>5} {:>8}  {}\n",
            "pass", "fail", "skipped", "source"
        ));
        for row in &summary.verification {
            out.push_str(&format!(
                "  {:>5} {:>5} {:>8}  {}\n",
                row.pass, row.fail, row.skipped, row.source
            ));
            for check in &row.failed_checks {
                out.push_str(&format!("        failed: {check}\n"));
            }
        }
    }
    out
}
