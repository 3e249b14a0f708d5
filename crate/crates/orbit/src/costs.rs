//! Task costs (the "real" losses that training tries to reduce).
//!
//! A cost compares a reference label with a prediction and returns a
//! nonnegative number that is zero when the two coincide. Costs enter
//! training both directly (as the per-mistake scale of an update) and through
//! cost-augmented decoding.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// A cost function over labels of type `L`.
///
/// Implementations must be nonnegative and satisfy `cost(y, y) = 0`.
pub trait CostFunction<L> {
    fn cost(&self, target: &L, predicted: &L) -> f64;
}

/// The 0-1 cost: 1 on any mistake, 0 otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZeroOneCost;

impl<L: PartialEq> CostFunction<L> for ZeroOneCost {
    fn cost(&self, target: &L, predicted: &L) -> f64 {
        if target == predicted { 0.0 } else { 1.0 }
    }
}

/// Convenience free function form of [`ZeroOneCost`].
pub fn zero_one_cost<L: PartialEq>(target: &L, predicted: &L) -> f64 {
    ZeroOneCost.cost(target, predicted)
}

/// A dense k x k cost matrix over class labels `0..k`.
///
/// Row index is the reference class, column index the prediction.
/// Serializes as a plain JSON array of rows for report reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    k: usize,
    /// Row-major entries, length k*k.
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix from rows, validating shape, zero diagonal, and
    /// nonnegative finite entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::Config(format!(
                "cost matrix needs at least 2 classes, got {k}"
            )));
        }
        let mut entries = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!(
                        "cost matrix entry ({i}, {j}) = {v} must be finite and >= 0"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::Config(format!(
                        "cost matrix diagonal entry ({i}, {i}) = {v} must be 0"
                    )));
                }
                entries.push(v);
            }
        }
        Ok(Self { k, entries })
    }

    /// A seeded semi-randomized matrix: zero diagonal, off-diagonal entries
    /// drawn uniformly from {1, 2}.
    pub fn random(k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!(
                "cost matrix needs at least 2 classes, got {k}"
            )));
        }
        let mut rng = seeded_rng(seed);
        let mut entries = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    entries.push(0.0);
                } else {
                    entries.push(rand::Rng::random_range(&mut rng, 1..=2) as f64);
                }
            }
        }
        Ok(Self { k, entries })
    }

    /// Number of classes k.
    pub fn num_classes(&self) -> usize {
        self.k
    }

    /// Entry (target, predicted). Panics if either index is out of range.
    pub fn get(&self, target: usize, predicted: usize) -> f64 {
        assert!(
            target < self.k && predicted < self.k,
            "cost matrix index ({target}, {predicted}) out of range for k = {}",
            self.k
        );
        self.entries[target * self.k + predicted]
    }

    /// The rows of the matrix.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| self.entries[i * self.k..(i + 1) * self.k].to_vec())
            .collect()
    }
}

impl CostFunction<usize> for CostMatrix {
    fn cost(&self, target: &usize, predicted: &usize) -> f64 {
        self.get(*target, *predicted)
    }
}

impl Serialize for CostMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CostMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        CostMatrix::from_rows(rows).map_err(D::Error::custom)
    }
}

/// Configuration for the tau-insensitive alignment cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCostConfig {
    /// Slack in frames: boundary errors up to tau are free.
    pub tau: f64,
}

impl AlignmentCostConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Config(format!("tau must be finite and >= 0, got {tau}")));
        }
        Ok(Self { tau })
    }
}

/// Tau-insensitive boundary cost: the mean over boundaries of
/// `max(|y_k - yhat_k| - tau, 0)`.
///
/// The two boundary sequences must be non-empty and equally long.
pub fn tau_insensitive_cost(
    target: &[usize],
    predicted: &[usize],
    config: AlignmentCostConfig,
) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: predicted.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::Data("empty boundary sequence".into()));
    }
    let mut sum = 0.0;
    for (&a, &b) in target.iter().zip(predicted.iter()) {
        let gap = a.abs_diff(b) as f64 - config.tau;
        sum += gap.max(0.0);
    }
    Ok(sum / target.len() as f64)
}

/// [`CostFunction`] wrapper around [`tau_insensitive_cost`]; panics on
/// malformed sequences (use the free function for checked evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauInsensitiveCost(pub AlignmentCostConfig);

impl CostFunction<Vec<usize>> for TauInsensitiveCost {
    fn cost(&self, target: &Vec<usize>, predicted: &Vec<usize>) -> f64 {
        tau_insensitive_cost(target, predicted, self.0)
            .expect("boundary sequences must be non-empty and equally long")
    }
}

/// Configuration for the vowel-interval cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VowelCostConfig {
    /// Slack in frames for the interval begin.
    pub tau_b: f64,
    /// Slack in frames for the interval end.
    pub tau_e: f64,
}

impl VowelCostConfig {
    pub fn new(tau_b: f64, tau_e: f64) -> Result<Self> {
        for (name, v) in [("tau_b", tau_b), ("tau_e", tau_e)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { tau_b, tau_e })
    }
}

/// Vowel-interval cost: `max(|bhat - b| - tau_b, 0) + max(|ehat - e| - tau_e, 0)`
/// for intervals `(b, e)` with `b < e`.
pub fn vowel_cost(
    target: (usize, usize),
    predicted: (usize, usize),
    config: VowelCostConfig,
) -> Result<f64> {
    for (b, e) in [target, predicted] {
        if b >= e {
            return Err(Error::InvalidInterval { begin: b, end: e });
        }
    }
    let begin_gap = (target.0.abs_diff(predicted.0) as f64 - config.tau_b).max(0.0);
    let end_gap = (target.1.abs_diff(predicted.1) as f64 - config.tau_e).max(0.0);
    Ok(begin_gap + end_gap)
}

/// [`CostFunction`] wrapper around [`vowel_cost`]; panics on invalid
/// intervals (use the free function for checked evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VowelCost(pub VowelCostConfig);

impl CostFunction<(usize, usize)> for VowelCost {
    fn cost(&self, target: &(usize, usize), predicted: &(usize, usize)) -> f64 {
        vowel_cost(*target, *predicted, self.0).expect("intervals must satisfy begin < end")
    }
}
