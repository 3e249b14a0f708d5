//! Monotone boundary alignment.
//!
//! An input is a sequence of T acoustic frames plus a segment count K; a
//! label is the K segment start frames `1 <= y_1 < y_2 < .. < y_K <= T`.
//! The feature map decomposes over consecutive boundary pairs, which is what
//! makes exact dynamic-programming decoding possible:
//!
//! ```text
//! phi(x, y) = sum_k psi(x, y_{k-1}, y_k),        y_0 = 0,
//! ```
//!
//! with four boundary-local features per transition (frame indices are
//! 1-based; frame 0 is virtual silence with zero energy):
//!
//! 1. mean frame value at the boundary frame (energy just after the cut),
//! 2. mean frame value at the preceding frame (energy just before the cut),
//! 3. magnitude of the frame-to-frame change at the cut, scaled by 1/sqrt(d),
//! 4. negated deviation of the segment duration from a prior mean, scaled
//!    by 1/T.
//!
//! Decoding runs a suffix recursion
//! `V_k(t_prev) = max_{t'} [score(t_prev, t') + V_{k+1}(t')]`, scanning
//! candidates in ascending frame order and keeping the first strict
//! maximum, so the decoded label is the lexicographically smallest
//! maximizer and the computed score reproduces, addition for addition, the
//! right-associated per-boundary sum over the winning label.
//! The tau-insensitive cost decomposes the same way (one hinge per
//! boundary), so cost-augmented decoding folds `eps_scale * hinge_k / K`
//! into the transition weight.

use crate::core::{FeatureVector, Task, WeightVector, dot};
use crate::costs::AlignmentCostConfig;
use crate::error::{Error, Result};

/// Number of boundary-local features.
pub const ALIGNMENT_FEATURE_COUNT: usize = 4;

/// A frame sequence to segment into `num_boundaries` parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentInput {
    /// T frames, each of the task's frame dimension.
    pub frames: Vec<Vec<f64>>,
    /// K, the number of segment start boundaries to place.
    pub num_boundaries: usize,
}

impl AlignmentInput {
    pub fn new(frames: Vec<Vec<f64>>, num_boundaries: usize) -> Self {
        Self {
            frames,
            num_boundaries,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Monotone alignment task over frames in R^frame_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTask {
    frame_dim: usize,
    /// Prior mean segment duration for the duration feature.
    mean_duration: f64,
    /// Cost configuration folded into trait-level cost-augmented decoding.
    cost_config: AlignmentCostConfig,
}

impl AlignmentTask {
    pub fn new(
        frame_dim: usize,
        mean_duration: f64,
        cost_config: AlignmentCostConfig,
    ) -> Result<Self> {
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

    pub fn cost_config(&self) -> AlignmentCostConfig {
        self.cost_config
    }

    fn validate_input(&self, x: &AlignmentInput) -> Result<()> {
        for frame in &x.frames {
            if frame.len() != self.frame_dim {
                return Err(Error::DimMismatch {
                    expected: self.frame_dim,
                    got: frame.len(),
                });
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("alignment frame"));
            }
        }
        Ok(())
    }

    /// Mean frame value at 1-based frame `s` (0 outside the signal).
    fn energy(&self, x: &AlignmentInput, s: usize) -> f64 {
        if s == 0 || s > x.frames.len() {
            return 0.0;
        }
        let frame = &x.frames[s - 1];
        frame.iter().sum::<f64>() / frame.len() as f64
    }

    /// The four transition features for a boundary at frame `t` (1-based)
    /// whose predecessor boundary sits at `t_prev` (0 for the first).
    pub fn boundary_features(
        &self,
        x: &AlignmentInput,
        t_prev: usize,
        t: usize,
    ) -> [f64; ALIGNMENT_FEATURE_COUNT] {
        debug_assert!(t >= 1 && t <= x.frames.len());
        debug_assert!(t_prev < t);
        let d = self.frame_dim as f64;
        let after = self.energy(x, t);
        let before = self.energy(x, t - 1);
        let delta = {
            let cur = &x.frames[t - 1];
            let mut sq = 0.0;
            if t >= 2 {
                let prev = &x.frames[t - 2];
                for i in 0..cur.len() {
                    let diff = cur[i] - prev[i];
                    sq += diff * diff;
                }
            } else {
                for v in cur {
                    sq += v * v;
                }
            }
            sq.sqrt() / d.sqrt()
        };
        let duration = (t - t_prev) as f64;
        let dur_dev = -(duration - self.mean_duration).abs() / x.frames.len() as f64;
        [after, before, delta, dur_dev]
    }

    /// `w . psi(x, t_prev, t)`: the transition score a boundary contributes.
    /// Decoding and any enumeration oracle must both score transitions
    /// through this function so tie comparisons see bit-identical values.
    pub fn boundary_score(
        &self,
        w: &WeightVector,
        x: &AlignmentInput,
        t_prev: usize,
        t: usize,
    ) -> f64 {
        dot(w.as_slice(), &self.boundary_features(x, t_prev, t))
    }

    /// Transition score with the per-boundary tau-insensitive hinge folded
    /// in: `boundary_score + eps_scale * (max(|t - target| - tau, 0) / K)`.
    #[allow(clippy::too_many_arguments)]
    pub fn boundary_score_augmented(
        &self,
        w: &WeightVector,
        x: &AlignmentInput,
        t_prev: usize,
        t: usize,
        target_frame: usize,
        eps_scale: f64,
        tau: f64,
        num_boundaries: usize,
    ) -> f64 {
        let base = self.boundary_score(w, x, t_prev, t);
        let gap = (t.abs_diff(target_frame) as f64 - tau).max(0.0);
        base + eps_scale * (gap / num_boundaries as f64)
    }

    /// Exact decode; returns the boundary sequence and its total score.
    pub fn decode_boundaries(
        &self,
        w: &WeightVector,
        x: &AlignmentInput,
    ) -> Result<(Vec<usize>, f64)> {
        self.run_dp(w, x, None)
    }

    /// Exact cost-augmented decode under an explicit tau configuration.
    pub fn cost_augmented_boundaries(
        &self,
        w: &WeightVector,
        x: &AlignmentInput,
        target: &[usize],
        eps_scale: f64,
        config: AlignmentCostConfig,
    ) -> Result<(Vec<usize>, f64)> {
        if target.len() != x.num_boundaries {
            return Err(Error::LengthMismatch {
                left: target.len(),
                right: x.num_boundaries,
            });
        }
        self.run_dp(w, x, Some((target, eps_scale, config.tau)))
    }

    /// Suffix DP over (boundary index k, previous boundary frame t_prev).
    // Explicit frame indices keep the recurrence aligned with its standard
    // textbook form; iterator rewrites obscure the (k, t_prev, t) structure.
    #[allow(clippy::needless_range_loop)]
    fn run_dp(
        &self,
        w: &WeightVector,
        x: &AlignmentInput,
        augment: Option<(&[usize], f64, f64)>,
    ) -> Result<(Vec<usize>, f64)> {
        if w.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        self.validate_input(x)?;
        let t_max = x.frames.len();
        let k_max = x.num_boundaries;
        if k_max == 0 || k_max > t_max {
            return Err(Error::Infeasible(format!(
                "cannot place {k_max} boundaries in {t_max} frames"
            )));
        }

        // value[k][t_prev]: best suffix score for boundaries k..K given the
        // previous boundary at t_prev. Level K+1 is the terminal 0.
        let mut value = vec![vec![f64::NEG_INFINITY; t_max + 1]; k_max + 2];
        for slot in value[k_max + 1].iter_mut() {
            *slot = 0.0;
        }
        let mut choice = vec![vec![0usize; t_max + 1]; k_max + 1];

        for k in (1..=k_max).rev() {
            // Frames still needed after boundary k.
            let remaining = k_max - k;
            // t_prev can be 0 (before the first boundary) or any feasible
            // frame for boundary k-1.
            let prev_lo = if k == 1 { 0 } else { k - 1 };
            let prev_hi = t_max - remaining - 1;
            for t_prev in prev_lo..=prev_hi {
                let mut best = f64::NEG_INFINITY;
                let mut best_t = 0usize;
                for t in (t_prev + 1)..=(t_max - remaining) {
                    let base = match augment {
                        None => self.boundary_score(w, x, t_prev, t),
                        Some((target, eps, tau)) => self.boundary_score_augmented(
                            w,
                            x,
                            t_prev,
                            t,
                            target[k - 1],
                            eps,
                            tau,
                            k_max,
                        ),
                    };
                    let cand = base + value[k + 1][t];
                    if cand > best {
                        best = cand;
                        best_t = t;
                    }
                }
                value[k][t_prev] = best;
                choice[k][t_prev] = best_t;
            }
        }

        let mut label = Vec::with_capacity(k_max);
        let mut t_prev = 0usize;
        for level in choice.iter().skip(1) {
            let t = level[t_prev];
            label.push(t);
            t_prev = t;
        }
        Ok((label, value[1][0]))
    }

    fn assert_valid_label(&self, x: &AlignmentInput, label: &[usize]) {
        assert_eq!(
            label.len(),
            x.num_boundaries,
            "alignment label has {} boundaries, input demands {}",
            label.len(),
            x.num_boundaries
        );
        let t_max = x.frames.len();
        let mut prev = 0usize;
        for &t in label {
            assert!(
                t > prev && t <= t_max,
                "alignment label {label:?} violates 1 <= y_1 < .. <= {t_max}"
            );
            prev = t;
        }
    }
}

impl Task for AlignmentTask {
    type Input = AlignmentInput;
    type Label = Vec<usize>;

    fn dim(&self) -> usize {
        ALIGNMENT_FEATURE_COUNT
    }

    fn phi(&self, input: &AlignmentInput, label: &Vec<usize>) -> FeatureVector {
        self.assert_valid_label(input, label);
        let mut values = [0.0; ALIGNMENT_FEATURE_COUNT];
        let mut t_prev = 0usize;
        for &t in label {
            let psi = self.boundary_features(input, t_prev, t);
            for (acc, v) in values.iter_mut().zip(psi.iter()) {
                *acc += v;
            }
            t_prev = t;
        }
        FeatureVector::new(values.to_vec()).expect("finite frames yield finite features")
    }

    fn decode(&self, weights: &WeightVector, input: &AlignmentInput) -> Result<Vec<usize>> {
        Ok(self.decode_boundaries(weights, input)?.0)
    }

    fn cost_augmented_decode(
        &self,
        weights: &WeightVector,
        input: &AlignmentInput,
        target: &Vec<usize>,
        eps_scale: f64,
    ) -> Result<Vec<usize>> {
        Ok(self
            .cost_augmented_boundaries(weights, input, target, eps_scale, self.cost_config)?
            .0)
    }

    fn labels_equal(&self, a: &Vec<usize>, b: &Vec<usize>) -> bool {
        a == b
    }

    /// All monotone boundary sequences in lexicographic (= tie-break) order.
    fn enumerate_labels(&self, input: &AlignmentInput) -> Result<Vec<Vec<usize>>> {
        let t_max = input.num_frames();
        let k_max = input.num_boundaries;
        if k_max == 0 || k_max > t_max {
            return Err(Error::Infeasible(format!(
                "cannot place {k_max} boundaries in {t_max} frames"
            )));
        }
        let count = binomial(t_max as u128, k_max as u128);
        if count > 1_000_000 {
            return Err(Error::TooLarge(count));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut cur: Vec<usize> = (1..=k_max).collect();
        loop {
            out.push(cur.clone());
            // Advance the rightmost index that can still grow.
            let mut i = k_max;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                let limit = t_max - (k_max - 1 - i);
                if cur[i] < limit {
                    cur[i] += 1;
                    for j in i + 1..k_max {
                        cur[j] = cur[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::score;
    use crate::rng::{seeded_rng, standard_normal_vec};
    use rand::Rng;

    fn task() -> AlignmentTask {
        AlignmentTask::new(3, 4.0, AlignmentCostConfig::new(1.0).unwrap()).unwrap()
    }

    fn random_input(seed: u64, t: usize, k: usize, d: usize) -> AlignmentInput {
        let frames = (0..t)
            .map(|i| standard_normal_vec(crate::rng::derive_seed(seed, i as u64), d))
            .collect();
        AlignmentInput::new(frames, k)
    }

    #[test]
    fn forced_alignment_when_k_equals_t() {
        let t = task();
        let x = random_input(1, 4, 4, 3);
        let w = WeightVector::new(standard_normal_vec(2, 4)).unwrap();
        assert_eq!(t.decode(&w, &x).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn zero_weights_tie_break_lexicographic() {
        let t = task();
        let x = random_input(3, 6, 3, 3);
        let w = WeightVector::zeros(4);
        assert_eq!(t.decode(&w, &x).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn infeasible_when_too_many_boundaries() {
        let t = task();
        let x = random_input(4, 3, 5, 3);
        let w = WeightVector::zeros(4);
        assert!(matches!(
            t.decode(&w, &x),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let t = task();
        let x = random_input(5, 5, 2, 3);
        let labels = t.enumerate_labels(&x).unwrap();
        assert_eq!(labels.len(), 10); // C(5, 2)
        assert_eq!(labels.first().unwrap(), &vec![1, 2]);
        assert_eq!(labels.last().unwrap(), &vec![4, 5]);
        for pair in labels.windows(2) {
            assert!(pair[0] < pair[1], "enumeration must be strictly lex-sorted");
        }
    }

    /// Enumeration oracle that mirrors the DP's float operations: the score
    /// of a label is the right-associated suffix sum of boundary scores, and
    /// ties prefer the lexicographically smallest label.
    // `acc = base + acc` (not `acc += base`) keeps the right-to-left
    // association visible; it must match the DP's float evaluation order.
    #[allow(clippy::assign_op_pattern)]
    fn oracle(
        t: &AlignmentTask,
        w: &WeightVector,
        x: &AlignmentInput,
        aug: Option<(&[usize], f64, f64)>,
    ) -> (Vec<usize>, f64) {
        let labels = t.enumerate_labels(x).unwrap();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for label in labels {
            let mut acc = 0.0;
            for k in (0..label.len()).rev() {
                let t_prev = if k == 0 { 0 } else { label[k - 1] };
                let base = match aug {
                    None => t.boundary_score(w, x, t_prev, label[k]),
                    Some((target, eps, tau)) => t.boundary_score_augmented(
                        w,
                        x,
                        t_prev,
                        label[k],
                        target[k],
                        eps,
                        tau,
                        label.len(),
                    ),
                };
                acc = base + acc;
            }
            match &best {
                Some((_, s)) if acc <= *s => {}
                _ => best = Some((label, acc)),
            }
        }
        best.unwrap()
    }

    #[test]
    fn dp_matches_enumeration_exactly() {
        let t = task();
        let mut rng = seeded_rng(77);
        for trial in 0..300u64 {
            let t_max = rng.random_range(2..=8);
            let k_max = rng.random_range(1..=t_max.min(4));
            let x = random_input(1000 + trial, t_max, k_max, 3);
            let w = WeightVector::new(standard_normal_vec(2000 + trial, 4)).unwrap();
            let (label, sc) = t.decode_boundaries(&w, &x).unwrap();
            let (olabel, osc) = oracle(&t, &w, &x, None);
            assert_eq!(label, olabel, "trial {trial}");
            assert_eq!(sc.to_bits(), osc.to_bits(), "trial {trial}: score mismatch");
            // The phi-based score agrees with the DP score up to rounding.
            assert!((score(&w, &t.phi(&x, &label)).unwrap() - sc).abs() < 1e-9);
        }
    }

    #[test]
    fn augmented_dp_matches_enumeration_exactly() {
        let t = task();
        let mut rng = seeded_rng(78);
        let cfg = AlignmentCostConfig::new(1.0).unwrap();
        for trial in 0..300u64 {
            let t_max = rng.random_range(2..=8);
            let k_max = rng.random_range(1..=t_max.min(4));
            let x = random_input(3000 + trial, t_max, k_max, 3);
            let w = WeightVector::new(standard_normal_vec(4000 + trial, 4)).unwrap();
            // A random feasible target.
            let target = {
                let all = t.enumerate_labels(&x).unwrap();
                all[rng.random_range(0..all.len())].clone()
            };
            let eps = [1.0, -1.52, 3.5][trial as usize % 3];
            let (label, sc) = t
                .cost_augmented_boundaries(&w, &x, &target, eps, cfg)
                .unwrap();
            let (olabel, osc) = oracle(&t, &w, &x, Some((&target, eps, cfg.tau)));
            assert_eq!(label, olabel, "trial {trial}");
            assert_eq!(sc.to_bits(), osc.to_bits(), "trial {trial}");
        }
    }

    #[test]
    fn augmented_with_zero_scale_equals_plain() {
        let t = task();
        let cfg = AlignmentCostConfig::new(0.0).unwrap();
        let x = random_input(11, 7, 3, 3);
        let w = WeightVector::new(standard_normal_vec(12, 4)).unwrap();
        let plain = t.decode(&w, &x).unwrap();
        let aug = t
            .cost_augmented_boundaries(&w, &x, &[1, 2, 3], 0.0, cfg)
            .unwrap()
            .0;
        assert_eq!(plain, aug);
    }

    #[test]
    fn large_positive_scale_maximizes_disagreement_on_zero_weights() {
        let t = task();
        let cfg = AlignmentCostConfig::new(0.0).unwrap();
        let x = random_input(13, 6, 2, 3);
        let w = WeightVector::zeros(4);
        let target = vec![1, 2];
        let (label, _) = t
            .cost_augmented_boundaries(&w, &x, &target, 1e6, cfg)
            .unwrap();
        // Farthest feasible boundaries from (1, 2) in 6 frames: (5, 6).
        assert_eq!(label, vec![5, 6]);
    }

    #[test]
    fn phi_panics_on_invalid_label() {
        let t = task();
        let x = random_input(14, 5, 2, 3);
        let result = std::panic::catch_unwind(|| t.phi(&x, &vec![3, 3]));
        assert!(result.is_err());
    }
}
