//! Concrete structured-prediction tasks.
//!
//! Three task families, each with exact decoding and (where the cost
//! decomposes over the label structure) exact cost-augmented decoding:
//!
//! * [`MulticlassTask`] — flat classification via the Kesler construction:
//!   the weight vector is K stacked per-class blocks and decoding scans the
//!   per-class scores.
//! * [`AlignmentTask`] — monotone boundary alignment of a frame sequence
//!   into K segments, decoded by dynamic programming over (boundary index,
//!   start frame) states.
//! * [`VowelTask`] — a single (begin, end) interval, decoded exhaustively
//!   over all frame pairs.
//!
//! [`synth`] provides seeded synthetic generators for all three.

mod alignment;
mod multiclass;
pub mod synth;
mod vowel;

pub use alignment::{ALIGNMENT_FEATURE_COUNT, AlignmentInput, AlignmentTask};
pub use multiclass::{MulticlassTask, MulticlassTrainingCost};
pub use vowel::{VOWEL_FEATURE_COUNT, VowelInput, VowelTask};
