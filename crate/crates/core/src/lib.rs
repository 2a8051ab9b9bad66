//! Prompt-based paragraph classification.
//!
//! Paragraphs are wrapped into cloze prompts ([`prompt`]), scored at the
//! mask slot by a masked language model ([`mlm`]), and mapped to labels by
//! averaging label-word probabilities ([`verbalizer`]). Models are
//! fine-tuned per fold with optional dropout-consistency regularization
//! ([`train`]), training data can be expanded with token-level edits
//! ([`augment`]), and per-fold models are combined by probability
//! averaging ([`ensemble`]). [`pipeline`] wires these into the
//! config-driven split, augment, train, predict and evaluate commands.

pub mod augment;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod mlm;
pub mod pipeline;
pub mod prompt;
pub mod train;
pub mod verbalizer;

pub use error::{Error, Result};
