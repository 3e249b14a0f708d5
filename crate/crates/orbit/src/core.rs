//! Linear structured-prediction primitives.
//!
//! A [`Task`] couples an input space X with a discrete label space Y through
//! a joint feature map phi(x, y) in R^d. Prediction is exact linear decoding,
//!
//! ```text
//! y_hat(w, x) = argmax_{y in Y(x)} w . phi(x, y),
//! ```
//!
//! and learning updates move `w` along (normalized) feature differences
//!
//! ```text
//! delta_phi(y, y')     = phi(x, y) - phi(x, y'),
//! delta_phi_hat(y, y') = delta_phi / ||delta_phi||   (zero when the labels
//!                        coincide or the difference vanishes).
//! ```
//!
//! All dot products and sums run in fixed ascending index order so that
//! repeated runs produce bit-identical floating-point results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A weight vector `w in R^d`. All entries are finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wraps raw weights, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector"));
        }
        Ok(Self(values))
    }

    /// The zero vector in `R^dim`.
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `alpha * w`; errors if the scale factor is not finite.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        Self::new(self.0.iter().map(|v| alpha * v).collect())
    }

    /// `w + delta`, entry by entry.
    pub fn plus(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.len() {
            return Err(Error::DimMismatch {
                expected: self.len(),
                got: delta.len(),
            });
        }
        Self::new(
            self.0
                .iter()
                .zip(delta.iter())
                .map(|(w, d)| w + d)
                .collect(),
        )
    }
}

/// A joint feature vector `phi(x, y) in R^d`. Entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps raw features, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(Self(values))
    }

    /// The zero vector in `R^dim`.
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A supervised example: an input paired with its reference label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example<X, Y> {
    pub input: X,
    pub target: Y,
}

impl<X, Y> Example<X, Y> {
    pub fn new(input: X, target: Y) -> Self {
        Self { input, target }
    }
}

/// A structured-prediction task: feature map plus exact decoding.
///
/// Implementations must keep `phi` pure (no interior mutability, no
/// randomness) and `decode` exactly optimal: the returned label maximizes
/// `w . phi(x, y)` over the full label space of `x`. Ties are broken by a
/// fixed, documented preference order per task, and `enumerate_labels` (when
/// supported) yields labels in exactly that preference order so that a
/// first-strict-maximum scan over the enumeration reproduces `decode`.
pub trait Task {
    type Input;
    type Label: Clone;

    /// Dimension d of the joint feature space.
    fn dim(&self) -> usize;

    /// Joint feature map `phi(x, y)`. Both arguments must be valid for the
    /// task; implementations may panic on structurally invalid labels.
    fn phi(&self, input: &Self::Input, label: &Self::Label) -> FeatureVector;

    /// Exact decoding `argmax_y w . phi(x, y)`.
    fn decode(&self, weights: &WeightVector, input: &Self::Input) -> Result<Self::Label>;

    /// Cost-augmented decoding `argmax_y [w . phi(x, y) + eps_scale * cost(target, y)]`
    /// under the task's own training cost. Optional.
    fn cost_augmented_decode(
        &self,
        weights: &WeightVector,
        input: &Self::Input,
        target: &Self::Label,
        eps_scale: f64,
    ) -> Result<Self::Label> {
        let _ = (weights, input, target, eps_scale);
        Err(Error::UnsupportedTask("cost-augmented decoding"))
    }

    /// Label equality as the task defines it.
    fn labels_equal(&self, a: &Self::Label, b: &Self::Label) -> bool;

    /// The full label space of `input`, in decode tie-break preference order.
    /// Optional; only feasible for small label spaces.
    fn enumerate_labels(&self, input: &Self::Input) -> Result<Vec<Self::Label>> {
        let _ = input;
        Err(Error::UnsupportedTask("label enumeration"))
    }
}

/// `w . f`, accumulated in ascending index order.
pub fn score(weights: &WeightVector, features: &FeatureVector) -> Result<f64> {
    if weights.len() != features.len() {
        return Err(Error::DimMismatch {
            expected: weights.len(),
            got: features.len(),
        });
    }
    Ok(dot(weights.as_slice(), features.as_slice()))
}

/// Plain sequential dot product; the shared inner loop for all scoring so
/// equal inputs always produce bit-identical outputs.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Feature difference `phi(x, a) - phi(x, b)`.
pub fn delta_phi<T: Task>(
    task: &T,
    input: &T::Input,
    a: &T::Label,
    b: &T::Label,
) -> FeatureVector {
    let fa = task.phi(input, a);
    let fb = task.phi(input, b);
    debug_assert_eq!(fa.len(), fb.len());
    let values = fa
        .as_slice()
        .iter()
        .zip(fb.as_slice().iter())
        .map(|(x, y)| x - y)
        .collect();
    FeatureVector::new(values).expect("difference of finite vectors is finite")
}

/// Normalized feature difference: `delta_phi / ||delta_phi||`, or the zero
/// vector when the labels are equal or the difference vanishes. Its norm is
/// therefore always exactly 0 or 1 (up to rounding).
pub fn delta_phi_hat<T: Task>(
    task: &T,
    input: &T::Input,
    a: &T::Label,
    b: &T::Label,
) -> FeatureVector {
    if task.labels_equal(a, b) {
        return FeatureVector::zeros(task.dim());
    }
    let diff = delta_phi(task, input, a, b);
    let norm = diff.norm();
    if norm == 0.0 {
        return FeatureVector::zeros(task.dim());
    }
    let inv = 1.0 / norm;
    FeatureVector::new(diff.as_slice().iter().map(|v| inv * v).collect())
        .expect("normalized finite vector is finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy;

    impl Task for Toy {
        type Input = ();
        type Label = usize;

        fn dim(&self) -> usize {
            2
        }

        fn phi(&self, _input: &(), label: &usize) -> FeatureVector {
            let v = match label {
                0 => vec![1.0, 0.0],
                1 => vec![0.0, 1.0],
                _ => vec![1.0, 0.0], // label 2 aliases label 0's features
            };
            FeatureVector::new(v).unwrap()
        }

        fn decode(&self, weights: &WeightVector, input: &()) -> Result<usize> {
            let mut best = 0;
            let mut best_score = score(weights, &self.phi(input, &0))?;
            for y in 1..3 {
                let s = score(weights, &self.phi(input, &y))?;
                if s > best_score {
                    best = y;
                    best_score = s;
                }
            }
            Ok(best)
        }

        fn labels_equal(&self, a: &usize, b: &usize) -> bool {
            a == b
        }
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(WeightVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(WeightVector::new(vec![f64::INFINITY]).is_err());
        assert!(FeatureVector::new(vec![f64::NEG_INFINITY]).is_err());
        assert!(WeightVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn score_checks_dimensions() {
        let w = WeightVector::new(vec![1.0, 2.0]).unwrap();
        let f = FeatureVector::new(vec![3.0]).unwrap();
        assert!(matches!(
            score(&w, &f),
            Err(Error::DimMismatch {
                expected: 2,
                got: 1
            })
        ));
        let f2 = FeatureVector::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(score(&w, &f2).unwrap(), 1.0);
    }

    #[test]
    fn delta_phi_hat_is_unit_or_zero() {
        let t = Toy;
        // Distinct labels with distinct features: unit norm.
        let d = delta_phi_hat(&t, &(), &0, &1);
        assert!((d.norm() - 1.0).abs() < 1e-12);
        // Equal labels: exactly zero.
        let z = delta_phi_hat(&t, &(), &1, &1);
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
        // Distinct labels with identical features: exactly zero.
        let z2 = delta_phi_hat(&t, &(), &0, &2);
        assert_eq!(z2.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn scaled_and_plus() {
        let w = WeightVector::new(vec![1.0, -2.0]).unwrap();
        assert_eq!(w.scaled(2.0).unwrap().as_slice(), &[2.0, -4.0]);
        assert!(w.scaled(f64::NAN).is_err());
        assert_eq!(w.plus(&[0.5, 0.5]).unwrap().as_slice(), &[1.5, -1.5]);
        assert!(w.plus(&[1.0]).is_err());
    }
}
