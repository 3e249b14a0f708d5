//! Single-interval (vowel) segmentation.
//!
//! An input is a sequence of T acoustic frames; a label is one interval
//! `(t_b, t_e)` with `1 <= t_b < t_e <= T` (1-based, inclusive). The feature
//! map captures the energy signature of a vowel: a step up at onset, a step
//! down at offset, high energy inside, and a duration prior:
//!
//! 1. energy(t_b) - energy(t_b - 1)    (onset upstep; energy(0) = 0),
//! 2. energy(t_e) - energy(t_e + 1)    (offset downstep; energy(T+1) = 0),
//! 3. mean energy over [t_b, t_e],
//! 4. negated deviation of the duration from a prior mean, scaled by 1/T.
//!
//! The label space is O(T^2), so decoding scans all pairs exhaustively in
//! lexicographic order, keeping the first strict maximum; ties therefore
//! prefer the smallest (t_b, t_e).

use crate::core::{FeatureVector, Task, WeightVector, dot};
use crate::costs::{VowelCostConfig, vowel_cost};
use crate::error::{Error, Result};

/// Number of interval features.
pub const VOWEL_FEATURE_COUNT: usize = 4;

/// A frame sequence containing one vowel interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelInput {
    /// T frames, each of the task's frame dimension.
    pub frames: Vec<Vec<f64>>,
}

impl VowelInput {
    pub fn new(frames: Vec<Vec<f64>>) -> Self {
        Self { frames }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// One-interval segmentation over frames in R^frame_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelTask {
    frame_dim: usize,
    /// Prior mean interval duration for the duration feature.
    mean_duration: f64,
    /// Cost configuration folded into trait-level cost-augmented decoding.
    cost_config: VowelCostConfig,
}

impl VowelTask {
    pub fn new(frame_dim: usize, mean_duration: f64, cost_config: VowelCostConfig) -> Result<Self> {
        if frame_dim < 1 {
            return Err(Error::Config("frame dimension must be at least 1".into()));
        }
        if !mean_duration.is_finite() || mean_duration < 0.0 {
            return Err(Error::Config(format!(
                "mean duration must be finite and >= 0, got {mean_duration}"
            )));
        }
        Ok(Self {
            frame_dim,
            mean_duration,
            cost_config,
        })
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn cost_config(&self) -> VowelCostConfig {
        self.cost_config
    }

    fn validate_input(&self, x: &VowelInput) -> Result<()> {
        for frame in &x.frames {
            if frame.len() != self.frame_dim {
                return Err(Error::DimMismatch {
                    expected: self.frame_dim,
                    got: frame.len(),
                });
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("vowel frame"));
            }
        }
        Ok(())
    }

    /// Mean frame value at 1-based frame `s` (0 outside the signal).
    fn energy(&self, x: &VowelInput, s: usize) -> f64 {
        if s == 0 || s > x.frames.len() {
            return 0.0;
        }
        let frame = &x.frames[s - 1];
        frame.iter().sum::<f64>() / frame.len() as f64
    }

    /// The four interval features of a candidate label.
    pub fn interval_features(
        &self,
        x: &VowelInput,
        begin: usize,
        end: usize,
    ) -> [f64; VOWEL_FEATURE_COUNT] {
        debug_assert!(begin >= 1 && begin < end && end <= x.frames.len());
        let t_max = x.frames.len() as f64;
        let onset = self.energy(x, begin) - self.energy(x, begin - 1);
        let offset = self.energy(x, end) - self.energy(x, end + 1);
        let mut inside = 0.0;
        for s in begin..=end {
            inside += self.energy(x, s);
        }
        inside /= (end - begin + 1) as f64;
        let duration = (end - begin) as f64;
        let dur_dev = -(duration - self.mean_duration).abs() / t_max;
        [onset, offset, inside, dur_dev]
    }

    /// Exact decode over all pairs; returns the interval and its score.
    pub fn decode_interval(
        &self,
        w: &WeightVector,
        x: &VowelInput,
    ) -> Result<((usize, usize), f64)> {
        self.scan(w, x, None)
    }

    /// Exact cost-augmented decode under an explicit cost configuration.
    pub fn cost_augmented_interval(
        &self,
        w: &WeightVector,
        x: &VowelInput,
        target: (usize, usize),
        eps_scale: f64,
        config: VowelCostConfig,
    ) -> Result<((usize, usize), f64)> {
        self.scan(w, x, Some((target, eps_scale, config)))
    }

    fn scan(
        &self,
        w: &WeightVector,
        x: &VowelInput,
        augment: Option<((usize, usize), f64, VowelCostConfig)>,
    ) -> Result<((usize, usize), f64)> {
        if w.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        self.validate_input(x)?;
        let t_max = x.frames.len();
        if t_max < 2 {
            return Err(Error::Infeasible(format!(
                "need at least 2 frames for an interval, got {t_max}"
            )));
        }
        let mut best = ((0usize, 0usize), f64::NEG_INFINITY);
        for begin in 1..t_max {
            for end in (begin + 1)..=t_max {
                let mut s = dot(w.as_slice(), &self.interval_features(x, begin, end));
                if let Some((target, eps, cfg)) = augment {
                    let c = vowel_cost(target, (begin, end), cfg)?;
                    s += eps * c;
                }
                if s > best.1 {
                    best = ((begin, end), s);
                }
            }
        }
        Ok(best)
    }
}

impl Task for VowelTask {
    type Input = VowelInput;
    type Label = (usize, usize);

    fn dim(&self) -> usize {
        VOWEL_FEATURE_COUNT
    }

    fn phi(&self, input: &VowelInput, label: &(usize, usize)) -> FeatureVector {
        let (begin, end) = *label;
        assert!(
            begin >= 1 && begin < end && end <= input.frames.len(),
            "vowel label ({begin}, {end}) violates 1 <= t_b < t_e <= {}",
            input.frames.len()
        );
        FeatureVector::new(self.interval_features(input, begin, end).to_vec())
            .expect("finite frames yield finite features")
    }

    fn decode(&self, weights: &WeightVector, input: &VowelInput) -> Result<(usize, usize)> {
        Ok(self.decode_interval(weights, input)?.0)
    }

    fn cost_augmented_decode(
        &self,
        weights: &WeightVector,
        input: &VowelInput,
        target: &(usize, usize),
        eps_scale: f64,
    ) -> Result<(usize, usize)> {
        Ok(self
            .cost_augmented_interval(weights, input, *target, eps_scale, self.cost_config)?
            .0)
    }

    fn labels_equal(&self, a: &(usize, usize), b: &(usize, usize)) -> bool {
        a == b
    }

    /// All intervals in lexicographic (= tie-break) order.
    fn enumerate_labels(&self, input: &VowelInput) -> Result<Vec<(usize, usize)>> {
        let t_max = input.num_frames();
        if t_max < 2 {
            return Err(Error::Infeasible(format!(
                "need at least 2 frames for an interval, got {t_max}"
            )));
        }
        let count = (t_max as u128) * (t_max as u128 - 1) / 2;
        if count > 1_000_000 {
            return Err(Error::TooLarge(count));
        }
        let mut out = Vec::with_capacity(count as usize);
        for begin in 1..t_max {
            for end in (begin + 1)..=t_max {
                out.push((begin, end));
            }
        }
        Ok(out)
    }
}
