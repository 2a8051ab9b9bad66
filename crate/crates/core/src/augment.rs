//! EDA: synonym replacement, random insertion, random swap, random deletion.
//!
//! Operates on whitespace tokens of the raw paragraph, independent of any
//! model tokenizer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, ParagraphRecord};
use crate::error::{Error, Result};
use crate::verbalizer::SynonymLexicon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub alpha_sr: f64,
    pub alpha_ri: f64,
    pub alpha_rs: f64,
    pub p_rd: f64,
    pub n_aug: usize,
    pub seed: u64,
    /// Only augment records whose binary label is positive.
    pub positive_only: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            alpha_sr: 0.1,
            alpha_ri: 0.1,
            alpha_rs: 0.1,
            p_rd: 0.1,
            n_aug: 4,
            seed: 42,
            positive_only: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_sr", self.alpha_sr),
            ("alpha_ri", self.alpha_ri),
            ("alpha_rs", self.alpha_rs),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::out_of_range(name, v, "[0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.p_rd) {
            return Err(Error::out_of_range("p_rd", self.p_rd, "[0, 1)"));
        }
        Ok(())
    }
}

fn synonyms_of<'a>(lexicon: &'a SynonymLexicon, word: &str) -> Vec<&'a String> {
    lexicon.synonyms(word).iter().filter(|s| s.as_str() != word).collect()
}

/// Replaces up to `n` distinct positions that have synonyms.
pub fn synonym_replace<R: Rng>(tokens: &[String], n: usize, lexicon: &SynonymLexicon, rng: &mut R) -> Vec<String> {
    let mut out = tokens.to_vec();
    let mut positions: Vec<usize> = (0..tokens.len())
        .filter(|&i| !synonyms_of(lexicon, &tokens[i]).is_empty())
        .collect();
    positions.shuffle(rng);
    for &i in positions.iter().take(n) {
        let syns = synonyms_of(lexicon, &tokens[i]);
        out[i] = syns[rng.gen_range(0..syns.len())].clone();
    }
    out
}

/// `n` times: insert a synonym of a random input token at a random position.
pub fn random_insert<R: Rng>(tokens: &[String], n: usize, lexicon: &SynonymLexicon, rng: &mut R) -> Vec<String> {
    let mut out = tokens.to_vec();
    let sources: Vec<Vec<&String>> = tokens
        .iter()
        .map(|t| synonyms_of(lexicon, t))
        .filter(|s| !s.is_empty())
        .collect();
    if sources.is_empty() {
        return out;
    }
    for _ in 0..n {
        let syns = &sources[rng.gen_range(0..sources.len())];
        let word = syns[rng.gen_range(0..syns.len())].clone();
        let at = rng.gen_range(0..=out.len());
        out.insert(at, word);
    }
    out
}

/// `n` swaps of two distinct random positions.
pub fn random_swap<R: Rng>(tokens: &[String], n: usize, rng: &mut R) -> Vec<String> {
    let mut out = tokens.to_vec();
    if out.len() < 2 {
        return out;
    }
    for _ in 0..n {
        let i = rng.gen_range(0..out.len());
        let mut j = rng.gen_range(0..out.len() - 1);
        if j >= i {
            j += 1;
        }
        out.swap(i, j);
    }
    out
}

/// Drops each token with probability `p`; never returns an empty list for
/// non-empty input.
pub fn random_delete<R: Rng>(tokens: &[String], p: f64, rng: &mut R) -> Vec<String> {
    if p <= 0.0 || tokens.is_empty() {
        return tokens.to_vec();
    }
    let out: Vec<String> = tokens.iter().filter(|_| rng.gen::<f64>() >= p).cloned().collect();
    if out.is_empty() {
        return vec![tokens[rng.gen_range(0..tokens.len())].clone()];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdaOp {
    SynonymReplace,
    RandomInsert,
    RandomSwap,
    RandomDelete,
}

const OPS: [EdaOp; 4] = [
    EdaOp::SynonymReplace,
    EdaOp::RandomInsert,
    EdaOp::RandomSwap,
    EdaOp::RandomDelete,
];

fn edit_count(alpha: f64, len: usize) -> usize {
    ((alpha * len as f64).round() as usize).max(1)
}

/// `n_aug` augmented copies of `text`, each from one uniformly chosen op.
pub fn eda_with_rng<R: Rng>(text: &str, config: &AugmentConfig, lexicon: &SynonymLexicon, rng: &mut R) -> Vec<String> {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    let len = tokens.len();
    (0..config.n_aug)
        .map(|_| {
            let op = OPS[rng.gen_range(0..OPS.len())];
            let out = match op {
                EdaOp::SynonymReplace => synonym_replace(&tokens, edit_count(config.alpha_sr, len), lexicon, rng),
                EdaOp::RandomInsert => random_insert(&tokens, edit_count(config.alpha_ri, len), lexicon, rng),
                EdaOp::RandomSwap => random_swap(&tokens, edit_count(config.alpha_rs, len), rng),
                EdaOp::RandomDelete => random_delete(&tokens, config.p_rd, rng),
            };
            out.join(" ")
        })
        .collect()
}

/// [`eda_with_rng`] seeded from `config.seed`.
pub fn eda(text: &str, config: &AugmentConfig, lexicon: &SynonymLexicon) -> Result<Vec<String>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(eda_with_rng(text, config, lexicon, &mut rng))
}

fn record_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Augmented copies of `records` with ids `<id>#aug<j>` and inherited
/// labels. Each record gets its own seed derived from `config.seed` and
/// its id, so output does not depend on record order.
pub fn augment_records<'a, I>(records: I, config: &AugmentConfig, lexicon: &SynonymLexicon) -> Result<Vec<ParagraphRecord>>
where
    I: IntoIterator<Item = &'a ParagraphRecord>,
{
    config.validate()?;
    let mut out = Vec::new();
    for r in records {
        if config.positive_only && r.binary_label != Some(BinaryLabel::Positive) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(record_seed(config.seed, &r.id));
        for (j, text) in eda_with_rng(&r.text, config, lexicon, &mut rng).into_iter().enumerate() {
            out.push(ParagraphRecord {
                id: format!("{}#aug{j}", r.id),
                text,
                binary_label: r.binary_label,
                categories: r.categories.clone(),
            });
        }
    }
    Ok(out)
}
