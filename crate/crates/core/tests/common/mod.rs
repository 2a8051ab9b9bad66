#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcl_prompt::corpus::{BinaryLabel, Dataset, ParagraphRecord, Schema};
use pcl_prompt::mlm::{ModelConfig, Vocabulary};
use pcl_prompt::prompt::{PromptTemplate, TaskPromptSet};
use pcl_prompt::train::TrainConfig;
use pcl_prompt::verbalizer::{self, binary_seed_words, FrequencyTable, SynonymLexicon, Verbalizer};

pub const POSITIVE_WORDS: [&str; 10] = [
    "poor", "helpless", "needy", "vulnerable", "pity", "charity", "rescue", "suffering", "unfortunate", "struggling",
];
pub const NEGATIVE_WORDS: [&str; 10] = [
    "council", "budget", "report", "market", "weather", "election", "transport", "schedule", "policy", "stadium",
];
pub const FILLER: [&str; 10] = ["the", "a", "of", "and", "in", "today", "people", "local", "new", "said"];

/// `n` paragraphs, half positive. Class words come from the record's own
/// pool with probability `purity`; labels are flipped with probability
/// `noise`.
pub fn synthetic_records(n: usize, purity: f64, noise: f64, seed: u64, prefix: &str) -> Vec<ParagraphRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..3 {
                let own = rng.gen::<f64>() < purity;
                let pool = if own == positive { &POSITIVE_WORDS } else { &NEGATIVE_WORDS };
                words.push(pool[rng.gen_range(0..pool.len())]);
            }
            for _ in 0..3 {
                words.push(FILLER[rng.gen_range(0..FILLER.len())]);
            }
            words.shuffle(&mut rng);
            let flipped = rng.gen::<f64>() < noise;
            let label = if positive != flipped {
                BinaryLabel::Positive
            } else {
                BinaryLabel::Negative
            };
            ParagraphRecord::new(format!("{prefix}{i:04}"), words.join(" ")).with_label(label)
        })
        .collect()
}

pub fn dataset(records: Vec<ParagraphRecord>) -> Dataset {
    Dataset::new(records, Vec::new(), Schema::default()).unwrap()
}

pub fn vocabulary() -> Vocabulary {
    let template = PromptTemplate::binary_default().pattern.replace("{text}", "").replace("{mask}", "");
    let mut extra: Vec<&str> = POSITIVE_WORDS.iter().chain(&NEGATIVE_WORDS).chain(&FILLER).copied().collect();
    extra.extend(["yes", "no", template.as_str()]);
    Vocabulary::build(std::iter::empty::<&str>(), &extra, 1)
}

pub fn binary_prompts() -> TaskPromptSet {
    TaskPromptSet::Binary(PromptTemplate::binary_default())
}

pub fn binary_verbalizer(vocab: &Vocabulary) -> Verbalizer {
    verbalizer::build(
        &binary_seed_words(),
        &SynonymLexicon::default(),
        &FrequencyTable::default(),
        1,
        vocab,
    )
    .unwrap()
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        max_seq_len: 32,
        dropout: 0.1,
    }
}

pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 30,
        batch_size: 8,
        max_seq_len: 32,
        early_stop_patience: 8,
        ..TrainConfig::default()
    }
}
