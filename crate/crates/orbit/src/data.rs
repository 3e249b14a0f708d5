//! Dataset and model persistence.
//!
//! A dataset on disk is a pair of files: a CSV payload holding the examples
//! and a JSON manifest recording the generator, all generation parameters,
//! the row count, the feature normalizer (when one was applied), and the
//! payload's SHA-256. Model files are single JSON documents that echo their
//! training configuration and the manifest hash of the dataset they were
//! trained on, so every artifact is traceable to its inputs.
//!
//! All writers are deterministic: equal in-memory values serialize to
//! byte-identical files. Floating-point values are written in shortest
//! round-trip form, so read-back reproduces the exact bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, de::DeserializeOwned};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::core::Example;
use crate::error::{Error, Result};
use crate::gmm_hmm::{GmmStateModel, HmmParams};
use crate::tasks::{AlignmentInput, VowelInput};

/// Version stamp written into every manifest and model file.
pub const DATA_FORMAT_VERSION: u32 = 1;

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Serializes `value` as pretty-printed JSON (with a trailing newline) and
/// writes it to `path`. Struct fields keep declaration order and maps are
/// sorted, so equal values produce byte-identical files.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a JSON document written by [`save_json`] (or any JSON file).
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Which example shape a dataset payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Rows `label, x_1, ..., x_p`.
    Multiclass,
    /// Rows `T, K, y_1, ..., y_K, frame values (T * frame_dim)`.
    Alignment,
    /// Rows `T, t_b, t_e, frame values (T * frame_dim)`.
    Vowel,
}

/// The JSON sidecar describing a dataset payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    /// Generator name, e.g. "synth-multiclass" or "mnist-pca".
    pub generator: String,
    /// Every generation parameter, seeds included.
    pub params: Value,
    /// Number of examples in the payload.
    pub count: usize,
    /// Scale factor that was divided out of the inputs, when any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_normalizer: Option<f64>,
    /// Payload file name, relative to the manifest's directory.
    pub payload: String,
    /// SHA-256 of the payload file.
    pub payload_sha256: String,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    /// Loads and validates a manifest (format version must match).
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = load_json(path)?;
        if manifest.format_version != DATA_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported manifest format version {} (expected {DATA_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    /// Resolves the payload path relative to the manifest's location and
    /// checks its hash before returning it.
    pub fn verified_payload_path(&self, manifest_path: &Path) -> Result<std::path::PathBuf> {
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let payload_path = dir.join(&self.payload);
        let actual = file_sha256(&payload_path)?;
        if actual != self.payload_sha256 {
            return Err(Error::Data(format!(
                "payload hash mismatch for {}: manifest says {}, file is {actual}",
                payload_path.display(),
                self.payload_sha256
            )));
        }
        Ok(payload_path)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_writer(fs::File::create(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(fs::File::open(path)?))
}

fn parse_field<T: std::str::FromStr>(field: &str, row: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| {
        Error::Data(format!("row {row}: cannot parse {what} from {field:?}"))
    })
}

/// Writes rows `label, x_1, ..., x_p`.
pub fn write_multiclass_csv(path: &Path, examples: &[Example<Vec<f64>, usize>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for ex in examples {
        let mut record = Vec::with_capacity(1 + ex.input.len());
        record.push(ex.target.to_string());
        record.extend(ex.input.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_multiclass_csv`]; all rows must agree on
/// the input dimension.
pub fn read_multiclass_csv(path: &Path) -> Result<Vec<Example<Vec<f64>, usize>>> {
    let mut reader = csv_reader(path)?;
    let mut examples = Vec::new();
    let mut dim: Option<usize> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Data(format!(
                "row {row}: need a label and at least one feature"
            )));
        }
        let target: usize = parse_field(&record[0], row, "class label")?;
        let input: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| parse_field(f, row, "feature"))
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(input.len()),
            Some(d) if d != input.len() => {
                return Err(Error::Data(format!(
                    "row {row}: dimension {} differs from {d}",
                    input.len()
                )));
            }
            _ => {}
        }
        examples.push(Example::new(input, target));
    }
    Ok(examples)
}

fn flat_frames(frames: &[Vec<f64>]) -> impl Iterator<Item = &f64> {
    frames.iter().flat_map(|f| f.iter())
}

fn unflatten_frames(
    fields: &csv::StringRecord,
    start: usize,
    t: usize,
    row: usize,
) -> Result<Vec<Vec<f64>>> {
    let tail = fields.len() - start;
    if t == 0 || tail == 0 || !tail.is_multiple_of(t) {
        return Err(Error::Data(format!(
            "row {row}: {tail} frame values do not divide into {t} frames"
        )));
    }
    let p = tail / t;
    let mut frames = Vec::with_capacity(t);
    let mut it = fields.iter().skip(start);
    for _ in 0..t {
        let mut frame = Vec::with_capacity(p);
        for _ in 0..p {
            frame.push(parse_field(
                it.next().expect("length checked"),
                row,
                "frame value",
            )?);
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes rows `T, K, y_1, ..., y_K, frame values (T * frame_dim)`.
pub fn write_alignment_csv(
    path: &Path,
    examples: &[Example<AlignmentInput, Vec<usize>>],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    for ex in examples {
        if ex.target.len() != ex.input.num_boundaries {
            return Err(Error::LengthMismatch {
                left: ex.target.len(),
                right: ex.input.num_boundaries,
            });
        }
        let mut record = vec![
            ex.input.num_frames().to_string(),
            ex.input.num_boundaries.to_string(),
        ];
        record.extend(ex.target.iter().map(|b| b.to_string()));
        record.extend(flat_frames(&ex.input.frames).map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_alignment_csv`].
pub fn read_alignment_csv(path: &Path) -> Result<Vec<Example<AlignmentInput, Vec<usize>>>> {
    let mut reader = csv_reader(path)?;
    let mut examples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 3 {
            return Err(Error::Data(format!("row {row}: truncated alignment row")));
        }
        let t: usize = parse_field(&record[0], row, "frame count")?;
        let k: usize = parse_field(&record[1], row, "boundary count")?;
        if record.len() < 2 + k {
            return Err(Error::Data(format!(
                "row {row}: {k} boundaries declared but row is too short"
            )));
        }
        let target: Vec<usize> = (0..k)
            .map(|i| parse_field(&record[2 + i], row, "boundary frame"))
            .collect::<Result<_>>()?;
        let frames = unflatten_frames(&record, 2 + k, t, row)?;
        examples.push(Example::new(AlignmentInput::new(frames, k), target));
    }
    Ok(examples)
}

/// Writes rows `T, t_b, t_e, frame values (T * frame_dim)`.
pub fn write_vowel_csv(
    path: &Path,
    examples: &[Example<VowelInput, (usize, usize)>],
) -> Result<()> {
    let mut w = csv_writer(path)?;
    for ex in examples {
        let mut record = vec![
            ex.input.num_frames().to_string(),
            ex.target.0.to_string(),
            ex.target.1.to_string(),
        ];
        record.extend(flat_frames(&ex.input.frames).map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_vowel_csv`].
pub fn read_vowel_csv(path: &Path) -> Result<Vec<Example<VowelInput, (usize, usize)>>> {
    let mut reader = csv_reader(path)?;
    let mut examples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 4 {
            return Err(Error::Data(format!("row {row}: truncated vowel row")));
        }
        let t: usize = parse_field(&record[0], row, "frame count")?;
        let begin: usize = parse_field(&record[1], row, "interval begin")?;
        let end: usize = parse_field(&record[2], row, "interval end")?;
        let frames = unflatten_frames(&record, 3, t, row)?;
        examples.push(Example::new(VowelInput::new(frames), (begin, end)));
    }
    Ok(examples)
}

/// Writes a payload with `write_payload` and a matching manifest beside it;
/// returns the manifest. `stem` names both files (`stem.csv`,
/// `stem.manifest.json`).
#[allow(clippy::too_many_arguments)]
pub fn save_dataset<F>(
    dir: &Path,
    stem: &str,
    kind: DatasetKind,
    generator: &str,
    params: Value,
    count: usize,
    feature_normalizer: Option<f64>,
    write_payload: F,
) -> Result<DatasetManifest>
where
    F: FnOnce(&Path) -> Result<()>,
{
    fs::create_dir_all(dir)?;
    let payload_name = format!("{stem}.csv");
    let payload_path = dir.join(&payload_name);
    write_payload(&payload_path)?;
    let manifest = DatasetManifest {
        format_version: DATA_FORMAT_VERSION,
        kind,
        generator: generator.to_string(),
        params,
        count,
        feature_normalizer,
        payload: payload_name,
        payload_sha256: file_sha256(&payload_path)?,
    };
    manifest.save(&dir.join(format!("{stem}.manifest.json")))?;
    Ok(manifest)
}

/// A persisted linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModelFile {
    pub format_version: u32,
    /// Task the weights decode, e.g. "multiclass" or "alignment".
    pub task_kind: String,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// The fully resolved configuration the model was trained with.
    pub config_echo: Value,
    /// SHA-256 of the training dataset's manifest file.
    pub dataset_manifest_hash: String,
}

impl LinearModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.weights.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: self.weights.len(),
            });
        }
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = load_json(path)?;
        if model.format_version != DATA_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {} (expected {DATA_FORMAT_VERSION})",
                model.format_version
            )));
        }
        if model.weights.len() != model.dim {
            return Err(Error::Data(format!(
                "model declares dim {} but holds {} weights",
                model.dim,
                model.weights.len()
            )));
        }
        if model.weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("model weights must be finite".into()));
        }
        Ok(model)
    }
}

/// A persisted generative (HMM + mixture-emission) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmModelFile {
    pub format_version: u32,
    pub hmm: HmmParams,
    pub gmm: GmmStateModel,
    pub config_echo: Value,
    pub dataset_manifest_hash: String,
}

impl GmmModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = load_json(path)?;
        if model.format_version != DATA_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {} (expected {DATA_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::synth::{synth_alignment, synth_multiclass, synth_vowel};
    use serde_json::json;

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn multiclass_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.csv");
        let data = synth_multiclass(3, 4, 0.7, 25, 42).unwrap();
        write_multiclass_csv(&path, &data.examples).unwrap();
        let back = read_multiclass_csv(&path).unwrap();
        assert_eq!(back, data.examples);

        // Equal inputs produce byte-identical payloads.
        let path2 = dir.path().join("mc2.csv");
        write_multiclass_csv(&path2, &data.examples).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn alignment_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("align.csv");
        let data = synth_alignment((5, 9), (1, 3), 2, 0.4, 20, 7).unwrap();
        write_alignment_csv(&path, &data.examples).unwrap();
        let back = read_alignment_csv(&path).unwrap();
        assert_eq!(back, data.examples);
    }

    #[test]
    fn vowel_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vowel.csv");
        let data = synth_vowel((6, 10), 3, 0.4, 20, 7).unwrap();
        write_vowel_csv(&path, &data.examples).unwrap();
        let back = read_vowel_csv(&path).unwrap();
        assert_eq!(back, data.examples);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "0,1.0,2.0\n1,3.0\n").unwrap();
        assert!(matches!(read_multiclass_csv(&path), Err(Error::Data(_))));
        fs::write(&path, "not-a-label,1.0\n").unwrap();
        assert!(matches!(read_multiclass_csv(&path), Err(Error::Data(_))));
        // 2 frames declared but 3 values: not divisible.
        fs::write(&path, "2,1,1,0.5,0.25,0.125\n").unwrap();
        assert!(matches!(read_alignment_csv(&path), Err(Error::Data(_))));
    }

    #[test]
    fn dataset_save_verify_and_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_multiclass(2, 2, 0.5, 10, 3).unwrap();
        let manifest = save_dataset(
            dir.path(),
            "train",
            DatasetKind::Multiclass,
            "synth-multiclass",
            data.params.clone(),
            data.examples.len(),
            data.feature_normalizer,
            |p| write_multiclass_csv(p, &data.examples),
        )
        .unwrap();

        let manifest_path = dir.path().join("train.manifest.json");
        let loaded = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(loaded, manifest);
        let payload = loaded.verified_payload_path(&manifest_path).unwrap();
        assert_eq!(read_multiclass_csv(&payload).unwrap(), data.examples);

        // Tampering with the payload breaks hash verification.
        fs::write(dir.path().join("train.csv"), "0,1.0,2.0\n").unwrap();
        assert!(matches!(
            loaded.verified_payload_path(&manifest_path),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn manifest_rejects_unknown_fields_and_bad_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(
            &path,
            r#"{"format_version":1,"kind":"multiclass","generator":"g","params":{},
               "count":0,"payload":"p.csv","payload_sha256":"00","surprise":true}"#,
        )
        .unwrap();
        assert!(DatasetManifest::load(&path).is_err());
        fs::write(
            &path,
            r#"{"format_version":9,"kind":"multiclass","generator":"g","params":{},
               "count":0,"payload":"p.csv","payload_sha256":"00"}"#,
        )
        .unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Data(_))));
    }

    #[test]
    fn linear_model_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = LinearModelFile {
            format_version: DATA_FORMAT_VERSION,
            task_kind: "multiclass".into(),
            dim: 3,
            weights: vec![0.1, -0.2, 0.3000000000000004],
            config_echo: json!({"eta0": 0.5}),
            dataset_manifest_hash: "ab".into(),
        };
        model.save(&path).unwrap();
        let back = LinearModelFile::load(&path).unwrap();
        assert_eq!(back, model);
        // Exact float bits survive the JSON round trip.
        assert_eq!(back.weights[2].to_bits(), model.weights[2].to_bits());

        let mut wrong = model.clone();
        wrong.dim = 2;
        assert!(wrong.save(&path).is_err());
        fs::write(
            &path,
            r#"{"format_version":1,"task_kind":"multiclass","dim":2,"weights":[1.0],
               "config_echo":{},"dataset_manifest_hash":""}"#,
        )
        .unwrap();
        assert!(matches!(LinearModelFile::load(&path), Err(Error::Data(_))));
    }

    #[test]
    fn gmm_model_round_trip() {
        use crate::gmm_hmm::build_phi;
        use nalgebra::DMatrix;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gmm.json");
        let phi = build_phi(&[0.5, -1.0], &DMatrix::identity(2, 2), 0.25).unwrap();
        let model = GmmModelFile {
            format_version: DATA_FORMAT_VERSION,
            hmm: HmmParams::uniform(2).unwrap(),
            gmm: GmmStateModel::new(vec![vec![phi.clone()], vec![phi]]).unwrap(),
            config_echo: json!({"epochs": 3}),
            dataset_manifest_hash: "cd".into(),
        };
        model.save(&path).unwrap();
        assert_eq!(GmmModelFile::load(&path).unwrap(), model);
    }
}
