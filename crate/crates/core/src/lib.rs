//! Document-level event causality identification recast as multiple-choice
//! question answering.
//!
//! The pipeline runs corpus → [`mcq`] samples → [`prompts`] → [`emitter`]
//! SFT records for training, and test samples → model answers →
//! [`inference`] pairs → [`scorer`] metrics for evaluation. [`ecg`] builds
//! the linearized graph targets and [`stats`] predicts the label
//! distributions the construction produces.

pub mod corpus;
pub mod ecg;
pub mod emitter;
pub mod inference;
pub mod mcq;
pub mod prompts;
pub mod scorer;
pub mod seeds;
pub mod stats;
pub mod synth;

pub use corpus::{load_corpus, Document, MentionId};
pub use mcq::{BuilderConfig, McqSample, Mode};
pub use prompts::{EmissionMode, TaskKind, TemplateSet};
