//! Desk-scale laboratory for multi-scenario sequential recommendation.
//!
//! The pipeline: interaction logs (real or synthetic) are turned into
//! fixed-length behavior sequences, a dilated-causal-convolution encoder
//! (with a GRU comparator) summarizes each history, twin attention-based
//! Q estimators trained by Double Q-learning score per-scenario behavior
//! confidence, and an intent head predicts the target item embedding under
//! a triplet loss whose weight is gated by the Q confidence of the target
//! scenario. Evaluation is full-ranking NDCG@K with leave-one-out splits.
//!
//! Training math is hand-rolled and generic over `f32`/`f64` so the same
//! code path that trains (fast, `f32`) can be verified against central
//! finite differences (exact, `f64`).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod intent;
pub mod layout;
pub mod loss;
pub mod math;
pub mod model;
pub mod qnet;
pub mod rng;
pub mod synth;
pub mod train;

pub use config::TrainConfig;
pub use data::{Behavior, Catalog, InteractionRecord, SequenceSample};
pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use model::Model;
pub use synth::SynthConfig;
