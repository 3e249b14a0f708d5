//! Seeded synthetic dataset generators.
//!
//! Each generator is deterministic in its seed: example `i` draws from the
//! derived stream `derive_seed(seed, i)`, so datasets are reproducible and
//! could be generated per-example in any order. Generators return the
//! examples plus a JSON parameter block for the dataset manifest.
//!
//! Constructions:
//!
//! * multiclass — class-conditional Gaussian clusters around axis-aligned
//!   centers `±2 e_j`, with the Gaussian offset norm-clamped to 2 so that
//!   any noise level below 0.7 keeps the classes linearly separable; inputs
//!   are finally rescaled so the largest norm is 1 (the scale factor is
//!   reported as the feature normalizer, keeping joint features inside the
//!   unit ball for the bound-check suites).
//! * alignment — frames of pure Gaussian noise with a constant bump planted
//!   in every component of each true boundary frame; at zero noise a weight
//!   vector selecting only the "energy after the cut" feature decodes every
//!   example exactly.
//! * vowel — Gaussian noise with a constant plateau planted inside the true
//!   interval; at zero noise a weight vector on the onset and offset step
//!   features decodes every interval exactly.

use rand::Rng;
use serde_json::json;

use crate::core::Example;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::tasks::{AlignmentInput, VowelInput};

/// Height of the planted signal in the alignment and vowel generators, and
/// distance of multiclass cluster centers from the origin.
const SIGNAL: f64 = 2.0;
/// Norm clamp on multiclass Gaussian offsets (guarantees separability).
const OFFSET_CLAMP: f64 = 2.0;

/// A generated dataset: examples plus manifest material.
#[derive(Debug, Clone)]
pub struct SynthDataset<X, Y> {
    pub examples: Vec<Example<X, Y>>,
    /// All generation parameters, for the dataset manifest.
    pub params: serde_json::Value,
    /// Scale factor applied to inputs (inputs were divided by this).
    pub feature_normalizer: Option<f64>,
}

fn check_positive(name: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn check_noise(noise: f64) -> Result<()> {
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::Config(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    Ok(())
}

/// Gaussian clusters around axis-aligned centers; requires `k <= 2p`.
pub fn synth_multiclass(
    num_classes: usize,
    input_dim: usize,
    noise: f64,
    n: usize,
    seed: u64,
) -> Result<SynthDataset<Vec<f64>, usize>> {
    if num_classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    check_positive("input_dim", input_dim)?;
    check_positive("n", n)?;
    check_noise(noise)?;
    if num_classes > 2 * input_dim {
        return Err(Error::Config(format!(
            "axis-aligned construction needs num_classes <= 2 * input_dim, got {num_classes} > {}",
            2 * input_dim
        )));
    }

    let center = |class: usize| -> (usize, f64) {
        if class < input_dim {
            (class, SIGNAL)
        } else {
            (class - input_dim, -SIGNAL)
        }
    };

    let mut examples = Vec::with_capacity(n);
    let mut max_norm: f64 = 0.0;
    for i in 0..n {
        let mut rng = seeded_rng(derive_seed(seed, i as u64));
        let class = rng.random_range(0..num_classes);
        let mut offset: Vec<f64> = (0..input_dim)
            .map(|_| rand::distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > OFFSET_CLAMP {
            let s = OFFSET_CLAMP / norm;
            for v in offset.iter_mut() {
                *v *= s;
            }
        }
        let (axis, sign) = center(class);
        let mut x = vec![0.0; input_dim];
        for (j, v) in x.iter_mut().enumerate() {
            *v = noise * offset[j];
            if j == axis {
                *v += sign;
            }
        }
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_norm = max_norm.max(xn);
        examples.push(Example::new(x, class));
    }

    // Rescale so the largest input norm is 1 (keeps joint features in the
    // unit ball); a pure scale change leaves class separability intact.
    let normalizer = max_norm.max(1.0);
    if normalizer > 1.0 {
        let inv = 1.0 / normalizer;
        for ex in examples.iter_mut() {
            for v in ex.input.iter_mut() {
                *v *= inv;
            }
        }
    }

    Ok(SynthDataset {
        examples,
        params: json!({
            "num_classes": num_classes,
            "input_dim": input_dim,
            "noise": noise,
            "n": n,
            "seed": seed,
            "center_scale": SIGNAL,
            "offset_clamp": OFFSET_CLAMP,
        }),
        feature_normalizer: Some(normalizer),
    })
}

/// Frame sequences with bumps planted at true boundary frames.
pub fn synth_alignment(
    frames_range: (usize, usize),
    boundaries_range: (usize, usize),
    frame_dim: usize,
    noise: f64,
    n: usize,
    seed: u64,
) -> Result<SynthDataset<AlignmentInput, Vec<usize>>> {
    let (t_lo, t_hi) = frames_range;
    let (k_lo, k_hi) = boundaries_range;
    check_positive("frame_dim", frame_dim)?;
    check_positive("n", n)?;
    check_noise(noise)?;
    if t_lo < 1 || t_lo > t_hi {
        return Err(Error::Config(format!(
            "invalid frame-count range ({t_lo}, {t_hi})"
        )));
    }
    if k_lo < 1 || k_lo > k_hi || k_hi > t_lo {
        return Err(Error::Config(format!(
            "invalid boundary-count range ({k_lo}, {k_hi}) for minimum {t_lo} frames"
        )));
    }

    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seeded_rng(derive_seed(seed, i as u64));
        let t_max = rng.random_range(t_lo..=t_hi);
        let k_max = rng.random_range(k_lo..=k_hi);
        let mut boundaries: Vec<usize> = rand::seq::index::sample(&mut rng, t_max, k_max)
            .into_iter()
            .map(|z| z + 1)
            .collect();
        boundaries.sort_unstable();
        let mut frames = Vec::with_capacity(t_max);
        for s in 1..=t_max {
            let planted = boundaries.binary_search(&s).is_ok();
            let frame: Vec<f64> = (0..frame_dim)
                .map(|_| {
                    let g: f64 = rand::distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    );
                    noise * g + if planted { SIGNAL } else { 0.0 }
                })
                .collect();
            frames.push(frame);
        }
        examples.push(Example::new(
            AlignmentInput::new(frames, k_max),
            boundaries,
        ));
    }

    Ok(SynthDataset {
        examples,
        params: json!({
            "frames_range": [t_lo, t_hi],
            "boundaries_range": [k_lo, k_hi],
            "frame_dim": frame_dim,
            "noise": noise,
            "n": n,
            "seed": seed,
            "signal": SIGNAL,
        }),
        feature_normalizer: None,
    })
}

/// Frame sequences with an energy plateau planted inside the true interval.
pub fn synth_vowel(
    frames_range: (usize, usize),
    frame_dim: usize,
    noise: f64,
    n: usize,
    seed: u64,
) -> Result<SynthDataset<VowelInput, (usize, usize)>> {
    let (t_lo, t_hi) = frames_range;
    check_positive("frame_dim", frame_dim)?;
    check_positive("n", n)?;
    check_noise(noise)?;
    if t_lo < 3 || t_lo > t_hi {
        return Err(Error::Config(format!(
            "invalid frame-count range ({t_lo}, {t_hi}); need at least 3 frames"
        )));
    }

    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seeded_rng(derive_seed(seed, i as u64));
        let t_max = rng.random_range(t_lo..=t_hi);
        let begin = rng.random_range(1..=t_max - 2);
        let end = rng.random_range(begin + 2..=t_max);
        let mut frames = Vec::with_capacity(t_max);
        for s in 1..=t_max {
            let inside = s >= begin && s <= end;
            let frame: Vec<f64> = (0..frame_dim)
                .map(|_| {
                    let g: f64 = rand::distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    );
                    noise * g + if inside { SIGNAL } else { 0.0 }
                })
                .collect();
            frames.push(frame);
        }
        examples.push(Example::new(VowelInput::new(frames), (begin, end)));
    }

    Ok(SynthDataset {
        examples,
        params: json!({
            "frames_range": [t_lo, t_hi],
            "frame_dim": frame_dim,
            "noise": noise,
            "n": n,
            "seed": seed,
            "signal": SIGNAL,
        }),
        feature_normalizer: None,
    })
}
