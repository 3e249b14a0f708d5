//! MNIST ingestion: IDX file parsing, pixel normalization, a deterministic
//! train/validation split, and PCA dimensionality reduction fit on the
//! training split only.
//!
//! IDX files may be gzip-compressed (detected by the gzip magic bytes) or
//! raw. Pixels are mapped to `[0, 1]` by dividing by 255. The 60000-example
//! training archive is split 50000/10000 into train/validation by a seeded
//! shuffle; the 10000-example test archive is kept intact. The PCA basis is
//! sign-canonicalized (largest-magnitude entry positive) so equal inputs
//! always produce the identical basis, and a SHA-256 of the basis bytes is
//! exposed for dataset manifests.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::core::Example;
use crate::data::sha256_hex;
use crate::error::{Error, Result};
use crate::rng::shuffled_indices;

/// IDX magic number for unsigned-byte 3D tensors (images).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic number for unsigned-byte 1D tensors (labels).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Data(format!(
            "{}: truncated IDX header",
            path.display()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Reads an IDX image tensor and normalizes pixels to `[0, 1]`. Returns one
/// flattened row-major vector per image.
pub fn read_idx_images(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let item = rows
        .checked_mul(cols)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::Data(format!("{}: empty image shape", path.display())))?;
    let body = &bytes[16.min(bytes.len())..];
    if body.len() != count * item {
        return Err(Error::CountMismatch {
            path: path.display().to_string(),
            expected: count,
            got: body.len() / item,
        });
    }
    Ok(body
        .chunks_exact(item)
        .map(|chunk| chunk.iter().map(|&b| b as f64 / 255.0).collect())
        .collect())
}

/// Reads an IDX label tensor; labels must be digits 0-9.
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8.min(bytes.len())..];
    if body.len() != count {
        return Err(Error::CountMismatch {
            path: path.display().to_string(),
            expected: count,
            got: body.len(),
        });
    }
    body.iter()
        .map(|&b| {
            if b > 9 {
                Err(Error::Data(format!(
                    "{}: label {b} out of digit range",
                    path.display()
                )))
            } else {
                Ok(b as usize)
            }
        })
        .collect()
}

/// A fitted PCA projection: `z = basis * (x - mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Mean of the fitting data.
    pub mean: Vec<f64>,
    /// One principal component per row, by descending eigenvalue, each
    /// sign-canonicalized so its largest-magnitude entry is positive.
    pub basis: Vec<Vec<f64>>,
    /// Eigenvalues matching the retained components, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fits a `pca_dim`-component PCA by eigendecomposition of the sample
    /// covariance (accumulated in fixed chunk order for determinism).
    pub fn fit(data: &[Vec<f64>], pca_dim: usize) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::Data("PCA needs at least 2 samples".into()));
        }
        let p = data[0].len();
        if p == 0 || data.iter().any(|x| x.len() != p) {
            return Err(Error::Data("PCA samples must share a nonzero dimension".into()));
        }
        if pca_dim == 0 || pca_dim > p {
            return Err(Error::Config(format!(
                "pca_dim must lie in [1, {p}], got {pca_dim}"
            )));
        }

        let mut mean = vec![0.0f64; p];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }

        // Covariance via chunked gemm on centered rows: C = sum X_c' X_c / (n-1).
        const CHUNK: usize = 1024;
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for chunk in data.chunks(CHUNK) {
            let mut centered = DMatrix::<f64>::zeros(chunk.len(), p);
            for (i, x) in chunk.iter().enumerate() {
                for j in 0..p {
                    centered[(i, j)] = x[j] - mean[j];
                }
            }
            cov += centered.transpose() * centered;
        }
        cov /= (n - 1) as f64;
        // Clean up rounding asymmetry before the symmetric eigensolver.
        let cov = (&cov + cov.transpose()) * 0.5;

        let eigen = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("covariance eigenvalues are finite")
        });

        let mut basis = Vec::with_capacity(pca_dim);
        let mut eigenvalues = Vec::with_capacity(pca_dim);
        for &idx in order.iter().take(pca_dim) {
            let col = eigen.eigenvectors.column(idx);
            let mut component: Vec<f64> = col.iter().copied().collect();
            // Sign canonicalization: make the largest-magnitude entry
            // (first on ties) positive.
            let mut arg = 0usize;
            for (j, v) in component.iter().enumerate() {
                if v.abs() > component[arg].abs() {
                    arg = j;
                }
            }
            if component[arg] < 0.0 {
                for v in component.iter_mut() {
                    *v = -*v;
                }
            }
            basis.push(component);
            eigenvalues.push(eigen.eigenvalues[idx]);
        }
        Ok(Self {
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    /// Projects one sample: `z = basis * (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(v, m)| v - m).collect();
        Ok(self
            .basis
            .iter()
            .map(|row| crate::core::dot(row, &centered))
            .collect())
    }

    /// Reconstructs from a projection: `x = basis' z + mean`.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.basis.len() {
            return Err(Error::DimMismatch {
                expected: self.basis.len(),
                got: z.len(),
            });
        }
        let mut x = DVector::from_column_slice(&self.mean);
        for (row, &zi) in self.basis.iter().zip(z.iter()) {
            for j in 0..x.len() {
                x[j] += row[j] * zi;
            }
        }
        Ok(x.iter().copied().collect())
    }

    /// SHA-256 over the little-endian bytes of mean then basis rows;
    /// recorded in dataset manifests so projections are traceable.
    pub fn basis_sha256(&self) -> String {
        let mut bytes =
            Vec::with_capacity(8 * (self.mean.len() + self.basis.len() * self.input_dim()));
        for v in &self.mean {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for row in &self.basis {
            for v in row {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        sha256_hex(&bytes)
    }
}

/// Projected MNIST splits plus the PCA model that produced them.
#[derive(Debug, Clone)]
pub struct MnistSplit {
    pub train: Vec<Example<Vec<f64>, usize>>,
    pub validation: Vec<Example<Vec<f64>, usize>>,
    pub test: Vec<Example<Vec<f64>, usize>>,
    pub pca: PcaModel,
}

/// Sizes of the seeded train/validation split of the training archive.
pub const MNIST_TRAIN_SIZE: usize = 50_000;
pub const MNIST_VALIDATION_SIZE: usize = 10_000;

/// Full ingestion pipeline: read both archives, split the training archive
/// `MNIST_TRAIN_SIZE`/`MNIST_VALIDATION_SIZE` by a seeded shuffle, fit PCA
/// on the training split only, and project all three sets.
pub fn ingest(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
    pca_dim: usize,
    split_seed: u64,
) -> Result<MnistSplit> {
    let images = read_idx_images(train_images)?;
    let labels = read_idx_labels(train_labels)?;
    if images.len() != labels.len() {
        return Err(Error::Data(format!(
            "training archive mismatch: {} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    let expected = MNIST_TRAIN_SIZE + MNIST_VALIDATION_SIZE;
    if images.len() != expected {
        return Err(Error::Data(format!(
            "training archive holds {} examples, expected {expected}",
            images.len()
        )));
    }
    let test_images_v = read_idx_images(test_images)?;
    let test_labels_v = read_idx_labels(test_labels)?;
    if test_images_v.len() != test_labels_v.len() {
        return Err(Error::Data(format!(
            "test archive mismatch: {} images vs {} labels",
            test_images_v.len(),
            test_labels_v.len()
        )));
    }

    let order = shuffled_indices(images.len(), split_seed);
    let (train_idx, validation_idx) = order.split_at(MNIST_TRAIN_SIZE);

    let train_pixels: Vec<Vec<f64>> = train_idx.iter().map(|&i| images[i].clone()).collect();
    let pca = PcaModel::fit(&train_pixels, pca_dim)?;

    let project_set = |idx: &[usize]| -> Result<Vec<Example<Vec<f64>, usize>>> {
        idx.iter()
            .map(|&i| Ok(Example::new(pca.project(&images[i])?, labels[i])))
            .collect()
    };
    let train = project_set(train_idx)?;
    let validation = project_set(validation_idx)?;
    let test = test_images_v
        .iter()
        .zip(test_labels_v.iter())
        .map(|(x, &y)| Ok(Example::new(pca.project(x)?, y)))
        .collect::<Result<_>>()?;

    Ok(MnistSplit {
        train,
        validation,
        test,
        pca,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal_vec;
    use std::io::Write;

    fn write_idx_images(path: &Path, images: &[[u8; 4]], gz: bool) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        for img in images {
            bytes.extend_from_slice(img);
        }
        write_bytes(path, &bytes, gz);
    }

    fn write_idx_labels(path: &Path, labels: &[u8], gz: bool) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        write_bytes(path, &bytes, gz);
    }

    fn write_bytes(path: &Path, bytes: &[u8], gz: bool) {
        if gz {
            let file = std::fs::File::create(path).unwrap();
            let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap();
        } else {
            std::fs::write(path, bytes).unwrap();
        }
    }

    #[test]
    fn idx_round_trip_gz_and_raw() {
        let dir = tempfile::tempdir().unwrap();
        let images = [[0u8, 51, 102, 255], [255, 204, 153, 0]];
        for gz in [false, true] {
            let ipath = dir.path().join(format!("imgs-{gz}"));
            let lpath = dir.path().join(format!("lbls-{gz}"));
            write_idx_images(&ipath, &images, gz);
            write_idx_labels(&lpath, &[3, 9], gz);
            let parsed = read_idx_images(&ipath).unwrap();
            assert_eq!(parsed.len(), 2);
            assert_eq!(parsed[0], vec![0.0, 51.0 / 255.0, 102.0 / 255.0, 1.0]);
            assert_eq!(read_idx_labels(&lpath).unwrap(), vec![3, 9]);
        }
    }

    #[test]
    fn idx_guards() {
        let dir = tempfile::tempdir().unwrap();
        // Wrong magic: a labels file read as images.
        let lpath = dir.path().join("labels");
        write_idx_labels(&lpath, &[1, 2], false);
        assert!(matches!(
            read_idx_images(&lpath),
            Err(Error::BadMagic { expected, got, .. })
                if expected == IDX_IMAGES_MAGIC && got == IDX_LABELS_MAGIC
        ));

        // Truncated body: header promises 2 images, file holds 1.5.
        let ipath = dir.path().join("truncated");
        write_idx_images(&ipath, &[[1, 2, 3, 4], [5, 6, 7, 8]], false);
        let mut bytes = std::fs::read(&ipath).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&ipath, &bytes).unwrap();
        assert!(matches!(
            read_idx_images(&ipath),
            Err(Error::CountMismatch {
                expected: 2,
                got: 1,
                ..
            })
        ));

        // Out-of-range label byte.
        let bad = dir.path().join("bad-label");
        write_idx_labels(&bad, &[4, 11], false);
        assert!(matches!(read_idx_labels(&bad), Err(Error::Data(_))));
    }

    fn synthetic_samples(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        // Anisotropic data: coordinate j gets scale (j+1).
        (0..n)
            .map(|i| {
                standard_normal_vec(crate::rng::derive_seed(seed, i as u64), p)
                    .into_iter()
                    .enumerate()
                    .map(|(j, v)| v * (j + 1) as f64)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn full_rank_pca_is_a_rotation() {
        let data = synthetic_samples(200, 6, 5);
        let pca = PcaModel::fit(&data, 6).unwrap();
        for x in data.iter().take(20) {
            let z = pca.project(x).unwrap();
            let back = pca.reconstruct(&z).unwrap();
            for (a, b) in x.iter().zip(back.iter()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
        // Components are orthonormal.
        for i in 0..6 {
            for j in 0..6 {
                let d = crate::core::dot(&pca.basis[i], &pca.basis[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-9);
            }
        }
        // Eigenvalues are sorted descending and the top one reflects the
        // largest-variance coordinate (scale 6 => variance ~36).
        for pair in pca.eigenvalues.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        assert!(pca.eigenvalues[0] > 20.0);
    }

    #[test]
    fn truncated_pca_keeps_high_variance_directions() {
        let data = synthetic_samples(300, 5, 9);
        let pca = PcaModel::fit(&data, 2).unwrap();
        assert_eq!(pca.output_dim(), 2);
        // The top component should align with the last (largest-scale) axis.
        let c0 = &pca.basis[0];
        assert!(c0[4].abs() > 0.9, "top component {c0:?}");
        // Canonical sign: the dominant entry is positive.
        assert!(c0[4] > 0.0);
    }

    #[test]
    fn pca_is_deterministic_and_hashable() {
        let data = synthetic_samples(100, 4, 13);
        let a = PcaModel::fit(&data, 3).unwrap();
        let b = PcaModel::fit(&data, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.basis_sha256(), b.basis_sha256());
        let c = PcaModel::fit(&synthetic_samples(100, 4, 14), 3).unwrap();
        assert_ne!(a.basis_sha256(), c.basis_sha256());
    }

    #[test]
    fn pca_validation() {
        let data = synthetic_samples(10, 3, 1);
        assert!(PcaModel::fit(&data, 0).is_err());
        assert!(PcaModel::fit(&data, 4).is_err());
        assert!(PcaModel::fit(&data[..1], 2).is_err());
        let pca = PcaModel::fit(&data, 2).unwrap();
        assert!(pca.project(&[1.0, 2.0]).is_err());
        assert!(pca.reconstruct(&[1.0]).is_err());
    }
}
