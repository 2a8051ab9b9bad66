//! Mask scorers: anything that yields a probability distribution over its
//! vocabulary at the mask slot of a prompted text.
//!
//! [`TinyModel`] is the built-in trainable encoder (masked-LM head or CLS
//! head). External pre-trained scorers plug in through [`MaskScorer`]; the
//! verbalizer is then rebuilt against the scorer's own vocabulary.

mod checkpoint;
pub(crate) mod linalg;
mod model;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use linalg::{softmax, softmax_backward};
pub use model::{Encoded, ForwardCache, Head, Layout, ModelConfig, TinyModel};
pub use vocab::{
    split_words, TokenId, TokenVocab, Vocabulary, CLS_ID, CLS_TOKEN, MASK_ID, MASK_TOKEN, PAD_ID,
    PAD_TOKEN, UNK_ID, UNK_TOKEN,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::WrappedText;
use crate::verbalizer::{self, FrequencyTable, SynonymLexicon, Verbalizer};

/// Probability of each vocabulary token at the mask position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDistribution {
    probs: Vec<f64>,
}

impl MaskDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Data("empty distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Data("distribution has a negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Data(format!("distribution sums to {total}")));
        }
        Ok(MaskDistribution { probs })
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        MaskDistribution {
            probs: softmax(logits),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Eval-mode scorer contract. Implementations must be deterministic.
pub trait MaskScorer: Send + Sync {
    fn vocab(&self) -> &dyn TokenVocab;

    fn score_mask(&self, input: &WrappedText) -> Result<MaskDistribution>;

    fn mask_token(&self) -> String {
        self.vocab().mask_token().to_string()
    }
}

/// The scorer a pipeline runs on: an external adapter if one is registered,
/// otherwise the built-in model.
pub struct ScorerSlot<'a> {
    builtin: &'a TinyModel,
    adapter: Option<&'a dyn MaskScorer>,
}

impl<'a> ScorerSlot<'a> {
    pub fn new(builtin: &'a TinyModel) -> Self {
        ScorerSlot {
            builtin,
            adapter: None,
        }
    }

    pub fn register_adapter(&mut self, adapter: &'a dyn MaskScorer) {
        self.adapter = Some(adapter);
    }

    pub fn active(&self) -> &'a dyn MaskScorer {
        match self.adapter {
            Some(a) => a,
            None => self.builtin,
        }
    }

    /// Builds the verbalizer against whichever vocabulary is active.
    pub fn build_verbalizer(
        &self,
        seed_words: &[(String, Vec<String>)],
        lexicon: &SynonymLexicon,
        freq: &FrequencyTable,
        k: usize,
    ) -> Result<Verbalizer> {
        verbalizer::build(seed_words, lexicon, freq, k, self.active().vocab())
    }
}
