//! Multiclass classification as a structured task (Kesler construction).
//!
//! With K classes over inputs in R^p, the joint feature map places the input
//! in the block of its class: `phi(x, y) = (0, .., 0, x, 0, .., 0)` with `x`
//! occupying block `y` of a K*p weight vector. Decoding scans the per-class
//! block scores `w^y . x` and returns the smallest index among maximizers.

use crate::core::{FeatureVector, Task, WeightVector};
use crate::costs::{CostFunction, CostMatrix, ZeroOneCost};
use crate::error::{Error, Result};

/// Which cost the task folds into its own cost-augmented decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum MulticlassTrainingCost {
    ZeroOne,
    Matrix(CostMatrix),
}

impl MulticlassTrainingCost {
    fn cost(&self, target: usize, predicted: usize) -> f64 {
        match self {
            MulticlassTrainingCost::ZeroOne => ZeroOneCost.cost(&target, &predicted),
            MulticlassTrainingCost::Matrix(m) => m.get(target, predicted),
        }
    }
}

/// K-class linear classification over R^p; feature dimension d = K*p.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassTask {
    num_classes: usize,
    input_dim: usize,
    training_cost: MulticlassTrainingCost,
}

impl MulticlassTask {
    /// A task with the 0-1 cost for cost-augmented decoding.
    pub fn new(num_classes: usize, input_dim: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "multiclass task needs at least 2 classes, got {num_classes}"
            )));
        }
        if input_dim < 1 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        Ok(Self {
            num_classes,
            input_dim,
            training_cost: MulticlassTrainingCost::ZeroOne,
        })
    }

    /// Replaces the cost used by [`Task::cost_augmented_decode`].
    pub fn with_training_cost(mut self, cost: MulticlassTrainingCost) -> Result<Self> {
        if let MulticlassTrainingCost::Matrix(m) = &cost
            && m.num_classes() != self.num_classes
        {
            return Err(Error::DimMismatch {
                expected: self.num_classes,
                got: m.num_classes(),
            });
        }
        self.training_cost = cost;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn check_dims(&self, w: &WeightVector, x: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-class block score `w^y . x`; the same inner loop as the full
    /// joint-feature dot product, so both give bit-identical values.
    pub fn class_score(&self, w: &WeightVector, x: &[f64], class: usize) -> f64 {
        let p = self.input_dim;
        crate::core::dot(&w.as_slice()[class * p..(class + 1) * p], x)
    }

    /// `argmax_y w^y . x`, smallest index on ties.
    pub fn decode_class(&self, w: &WeightVector, x: &[f64]) -> Result<usize> {
        self.check_dims(w, x)?;
        let mut best = 0usize;
        let mut best_score = self.class_score(w, x, 0);
        for y in 1..self.num_classes {
            let s = self.class_score(w, x, y);
            if s > best_score {
                best = y;
                best_score = s;
            }
        }
        Ok(best)
    }

    /// `argmax_{y'} [w^{y'} . x + eps_scale * cost(y, y')]` under an explicit
    /// cost, smallest index on ties.
    pub fn cost_augmented_class<C: CostFunction<usize>>(
        &self,
        w: &WeightVector,
        x: &[f64],
        target: usize,
        eps_scale: f64,
        cost: &C,
    ) -> Result<usize> {
        self.check_dims(w, x)?;
        let mut best = 0usize;
        let mut best_score = self.class_score(w, x, 0) + eps_scale * cost.cost(&target, &0);
        for y in 1..self.num_classes {
            let s = self.class_score(w, x, y) + eps_scale * cost.cost(&target, &y);
            if s > best_score {
                best = y;
                best_score = s;
            }
        }
        Ok(best)
    }
}

impl Task for MulticlassTask {
    type Input = Vec<f64>;
    type Label = usize;

    fn dim(&self) -> usize {
        self.num_classes * self.input_dim
    }

    fn phi(&self, input: &Vec<f64>, label: &usize) -> FeatureVector {
        assert!(
            *label < self.num_classes,
            "class label {label} out of range for K = {}",
            self.num_classes
        );
        assert_eq!(input.len(), self.input_dim, "input dimension mismatch");
        let mut values = vec![0.0; self.dim()];
        values[label * self.input_dim..(label + 1) * self.input_dim].copy_from_slice(input);
        FeatureVector::new(values).expect("finite input yields finite features")
    }

    fn decode(&self, weights: &WeightVector, input: &Vec<f64>) -> Result<usize> {
        self.decode_class(weights, input)
    }

    fn cost_augmented_decode(
        &self,
        weights: &WeightVector,
        input: &Vec<f64>,
        target: &usize,
        eps_scale: f64,
    ) -> Result<usize> {
        let cost = self.training_cost.clone();
        struct Borrowed(MulticlassTrainingCost);
        impl CostFunction<usize> for Borrowed {
            fn cost(&self, target: &usize, predicted: &usize) -> f64 {
                self.0.cost(*target, *predicted)
            }
        }
        self.cost_augmented_class(weights, input, *target, eps_scale, &Borrowed(cost))
    }

    fn labels_equal(&self, a: &usize, b: &usize) -> bool {
        a == b
    }

    fn enumerate_labels(&self, _input: &Vec<f64>) -> Result<Vec<usize>> {
        Ok((0..self.num_classes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::score;

    #[test]
    fn decode_examples() {
        // K=2, w = ((1,0), (0,1)), x = (2,1): scores 2 vs 1 -> class 0.
        let task = MulticlassTask::new(2, 2).unwrap();
        let w = WeightVector::new(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = vec![2.0, 1.0];
        assert_eq!(task.decode_class(&w, &x).unwrap(), 0);

        // Zero weights: all tie, smallest index wins.
        let w0 = WeightVector::zeros(4);
        assert_eq!(task.decode_class(&w0, &x).unwrap(), 0);

        // Scaling w leaves the argmax unchanged.
        let w10 = w.scaled(10.0).unwrap();
        assert_eq!(
            task.decode_class(&w10, &x).unwrap(),
            task.decode_class(&w, &x).unwrap()
        );
    }

    #[test]
    fn dimension_errors() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let w = WeightVector::zeros(5);
        assert!(matches!(
            task.decode_class(&w, &[1.0, 2.0]),
            Err(Error::DimMismatch {
                expected: 6,
                got: 5
            })
        ));
        let w = WeightVector::zeros(6);
        assert!(task.decode_class(&w, &[1.0]).is_err());
    }

    #[test]
    fn cost_augmented_examples() {
        let task = MulticlassTask::new(3, 1).unwrap();
        let w0 = WeightVector::zeros(3);
        let x = vec![1.0];
        // Zero weights, 0-1 cost, target 0: wrong classes score 1, smallest
        // wrong class is 1.
        assert_eq!(
            task.cost_augmented_class(&w0, &x, 0, 1.0, &ZeroOneCost)
                .unwrap(),
            1
        );
        // eps_scale = 0 reduces to plain decoding.
        let w = WeightVector::new(vec![0.3, 0.9, -0.2]).unwrap();
        assert_eq!(
            task.cost_augmented_class(&w, &x, 0, 0.0, &ZeroOneCost)
                .unwrap(),
            task.decode_class(&w, &x).unwrap()
        );
    }

    #[test]
    fn cost_augmented_matches_enumeration() {
        let task = MulticlassTask::new(3, 2).unwrap();
        let w = WeightVector::new(vec![0.4, -0.1, 0.2, 0.7, -0.5, 0.3]).unwrap();
        let x = vec![0.8, -0.6];
        let target = 2usize;
        for eps in [-1.52, 0.0, 1.0, 1.1, 5.0] {
            let got = task
                .cost_augmented_class(&w, &x, target, eps, &ZeroOneCost)
                .unwrap();
            let mut best = (0usize, f64::NEG_INFINITY);
            for y in 0..3usize {
                let s = score(&w, &task.phi(&x, &y)).unwrap()
                    + eps * ZeroOneCost.cost(&target, &y);
                if s > best.1 {
                    best = (y, s);
                }
            }
            assert_eq!(got, best.0, "eps_scale {eps}");
        }
    }

    #[test]
    fn trait_enumeration_order_matches_tie_break() {
        let task = MulticlassTask::new(4, 1).unwrap();
        let labels = task.enumerate_labels(&vec![1.0]).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn matrix_cost_must_match_class_count() {
        let task = MulticlassTask::new(3, 1).unwrap();
        let m = CostMatrix::random(4, 0).unwrap();
        assert!(
            task.with_training_cost(MulticlassTrainingCost::Matrix(m))
                .is_err()
        );
    }
}
