//! Structured prediction with the orbit surrogate loss.
//!
//! This crate trains linear structured predictors `y_hat(w, x) =
//! argmax_y w . phi(x, y)` to minimize a task cost directly, using the
//! orbit loss
//!
//! ```text
//! orbit(w; x, y) = Q(w . dphi_hat(y, y_hat_w)) * cost(y, y_hat_w),
//! ```
//!
//! where `Q` is the Gaussian upper-tail probability and `dphi_hat` the
//! normalized feature difference between the reference and decoded labels.
//! The orbit loss is a smooth surrogate whose value never exceeds the cost,
//! approaches it as the weights grow, and admits a one-decode analytic
//! gradient — making cost-aware online learning as cheap as the structured
//! perceptron.
//!
//! The crate provides:
//!
//! * [`losses`] — the orbit update, its simplified variant, and baseline
//!   update rules (perceptron, hinge, ramp, probit, direct loss) sharing
//!   one bit-deterministic stepping kernel;
//! * [`tasks`] — multiclass (Kesler construction), monotone sequence
//!   alignment, and single-interval (vowel) segmentation, plus seeded
//!   synthetic generators;
//! * [`gmm_hmm`] — discriminative updates for Gaussian-mixture HMM emission
//!   parameters under a frozen transition model;
//! * [`costs`] — zero-one, cost-matrix, tau-insensitive, and interval
//!   costs;
//! * [`trainer`] — a deterministic online SGD loop with per-epoch reports;
//! * [`verify`] — numerical checks of the analysis (gradient oracles,
//!   Monte-Carlo probit bounds, decoding oracles, scaling limits);
//! * [`mnist`] / [`data`] — IDX ingestion with PCA, and CSV/JSON
//!   persistence for datasets, models, and reports.
//!
//! Determinism is a crate-wide contract: every random quantity flows from
//! explicit seeds through splittable streams ([`rng`]), sums run in fixed
//! order, and repeated runs of any pipeline produce byte-identical
//! artifacts.

pub mod core;
pub mod costs;
pub mod data;
pub mod error;
pub mod gmm_hmm;
pub mod losses;
pub mod mnist;
pub mod rng;
pub mod tasks;
pub mod trainer;
pub mod verify;

pub use crate::core::{Example, FeatureVector, Task, WeightVector};
pub use crate::error::{Error, Result};
