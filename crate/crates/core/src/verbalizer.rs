//! Label-word sets and mean aggregation of mask probabilities into label scores.
//!
//! Candidate label words are the seed words of each label plus their
//! lexicon synonyms. Candidates that are not a single vocabulary token are
//! dropped, a word claimed by several labels stays with the label that lists
//! it earliest, and the `k` most frequent survivors become the label's
//! word set. A label's score is the mean mask probability of its words.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::{MaskDistribution, TokenId, TokenVocab};

pub const NEGATIVE_LABEL: &str = "NO";
pub const POSITIVE_LABEL: &str = "YES";

/// `word<TAB>syn1,syn2,...` per line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymLexicon {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn from_pairs<I, W, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (W, Vec<S>)>,
        W: Into<String>,
        S: Into<String>,
    {
        SynonymLexicon {
            entries: pairs
                .into_iter()
                .map(|(w, s)| (w.into(), s.into_iter().map(Into::into).collect()))
                .collect(),
        }
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn parse(raw: &str, path: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected `word<TAB>syn1,syn2,...`".into(),
            })?;
            let list = entries.entry(word.trim().to_string()).or_default();
            for s in syns.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                if !list.iter().any(|x| x == s) {
                    list.push(s.to_string());
                }
            }
        }
        Ok(SynonymLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, path)
    }
}

/// `word<TAB>count` per line; absent words count zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn from_pairs<I, W>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (W, u64)>,
        W: Into<String>,
    {
        FrequencyTable {
            counts: pairs.into_iter().map(|(w, c)| (w.into(), c)).collect(),
        }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts
            .get(word)
            .or_else(|| self.counts.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    pub fn parse(raw: &str, path: &Path) -> Result<Self> {
        let mut counts = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(w, c)| Some((w.trim().to_string(), c.trim().parse::<u64>().ok()?)));
            let (w, c) = parsed.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected `word<TAB>count`".into(),
            })?;
            counts.insert(w, c);
        }
        Ok(FrequencyTable { counts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw, path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelWord {
    pub word: String,
    pub token_id: TokenId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbalizer {
    label_order: Vec<String>,
    label_words: Vec<Vec<LabelWord>>,
    vocab_size: usize,
    vocab_fingerprint: u64,
}

impl Verbalizer {
    /// Direct construction from token ids, checked against `vocab`.
    pub fn from_token_ids(
        label_order: Vec<String>,
        label_words: Vec<Vec<TokenId>>,
        vocab: &dyn TokenVocab,
    ) -> Result<Self> {
        if label_order.is_empty() || label_order.len() != label_words.len() {
            return Err(Error::Config("one non-empty word set per label required".into()));
        }
        let mut owner: HashMap<TokenId, usize> = HashMap::new();
        let mut words = Vec::with_capacity(label_words.len());
        for (li, ids) in label_words.into_iter().enumerate() {
            if ids.is_empty() {
                return Err(Error::Config(format!("label `{}` has no words", label_order[li])));
            }
            let mut set = Vec::with_capacity(ids.len());
            for id in ids {
                let word = vocab
                    .token(id)
                    .ok_or_else(|| Error::Vocabulary(format!("token id {id} outside vocabulary")))?;
                if let Some(prev) = owner.insert(id, li) {
                    if prev != li {
                        return Err(Error::Config(format!("token `{word}` used by two labels")));
                    }
                    continue;
                }
                set.push(LabelWord {
                    word: word.to_string(),
                    token_id: id,
                });
            }
            words.push(set);
        }
        Ok(Verbalizer {
            label_order,
            label_words: words,
            vocab_size: vocab.size(),
            vocab_fingerprint: vocab.fingerprint(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.label_order
    }

    pub fn num_labels(&self) -> usize {
        self.label_order.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_order.iter().position(|l| l == label)
    }

    pub fn words(&self, label_index: usize) -> &[LabelWord] {
        &self.label_words[label_index]
    }

    pub fn token_sets(&self) -> impl Iterator<Item = impl Iterator<Item = TokenId> + '_> + '_ {
        self.label_words.iter().map(|ws| ws.iter().map(|w| w.token_id))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Errors if `vocab` is not the vocabulary this verbalizer was built on.
    pub fn check_vocab(&self, vocab: &dyn TokenVocab) -> Result<()> {
        if vocab.size() != self.vocab_size || vocab.fingerprint() != self.vocab_fingerprint {
            return Err(Error::Vocabulary(format!(
                "verbalizer built for a {}-token vocabulary, scorer has {}",
                self.vocab_size,
                vocab.size()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            label: &'a str,
            words: &'a [LabelWord],
        }
        #[derive(Serialize)]
        struct Export<'a> {
            vocab_size: usize,
            labels: Vec<Entry<'a>>,
        }
        let export = Export {
            vocab_size: self.vocab_size,
            labels: self
                .label_order
                .iter()
                .zip(&self.label_words)
                .map(|(label, words)| Entry { label, words })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&export)?)
    }
}

/// Seed words for the binary task: `NO → no`, `YES → yes`, negative first.
pub fn binary_seed_words() -> Vec<(String, Vec<String>)> {
    vec![
        (NEGATIVE_LABEL.into(), vec!["no".into()]),
        (POSITIVE_LABEL.into(), vec!["yes".into()]),
    ]
}

/// Builds label-word sets. `seed_words` fixes the label order.
pub fn build(
    seed_words: &[(String, Vec<String>)],
    lexicon: &SynonymLexicon,
    freq: &FrequencyTable,
    k: usize,
    vocab: &dyn TokenVocab,
) -> Result<Verbalizer> {
    if k == 0 {
        return Err(Error::out_of_range("verbalizer k", 0, ">= 1"));
    }
    if seed_words.is_empty() {
        return Err(Error::Config("no labels given".into()));
    }

    // Candidate lists in seed-rank order: seed, its synonyms, next seed, ...
    let mut candidates: Vec<Vec<String>> = Vec::with_capacity(seed_words.len());
    for (label, seeds) in seed_words {
        if seeds.is_empty() {
            return Err(Error::Config(format!("label `{label}` has no seed words")));
        }
        let mut list: Vec<String> = Vec::new();
        for seed in seeds {
            for w in std::iter::once(seed).chain(lexicon.synonyms(seed)) {
                let w = w.trim().to_string();
                if !w.is_empty() && !list.contains(&w) {
                    list.push(w);
                }
            }
        }
        candidates.push(list);
    }

    // A token claimed by several labels goes to the lowest rank, then earliest label.
    let mut best: HashMap<TokenId, (usize, usize)> = HashMap::new();
    let mut resolved: Vec<Vec<(String, TokenId)>> = vec![Vec::new(); seed_words.len()];
    for (li, list) in candidates.iter().enumerate() {
        for (rank, w) in list.iter().enumerate() {
            match vocab.single_token_id(w) {
                Some(id) => {
                    let e = best.entry(id).or_insert((rank, li));
                    if (rank, li) < *e {
                        *e = (rank, li);
                    }
                    resolved[li].push((w.clone(), id));
                }
                None => log::info!(
                    "verbalizer: dropping `{w}` for label `{}` (not a single vocabulary token)",
                    seed_words[li].0
                ),
            }
        }
    }

    let mut label_words = Vec::with_capacity(seed_words.len());
    for (li, words) in resolved.into_iter().enumerate() {
        let mut kept: Vec<(String, TokenId)> = Vec::new();
        for (w, id) in words {
            if best[&id].1 != li {
                log::info!("verbalizer: `{w}` assigned to label `{}` instead", seed_words[best[&id].1].0);
                continue;
            }
            if kept.iter().any(|(_, k)| *k == id) {
                continue;
            }
            kept.push((w, id));
        }
        kept.sort_by(|a, b| freq.count(&b.0).cmp(&freq.count(&a.0)).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(k);
        if kept.is_empty() {
            return Err(Error::Vocabulary(format!(
                "every candidate word for label `{}` is out of vocabulary",
                seed_words[li].0
            )));
        }
        label_words.push(
            kept.into_iter()
                .map(|(word, token_id)| LabelWord { word, token_id })
                .collect(),
        );
    }

    Ok(Verbalizer {
        label_order: seed_words.iter().map(|(l, _)| l.clone()).collect(),
        label_words,
        vocab_size: vocab.size(),
        vocab_fingerprint: vocab.fingerprint(),
    })
}

/// Per-label scores in the verbalizer's label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
}

impl LabelScores {
    pub fn new(labels: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: scores.len(),
            });
        }
        Ok(LabelScores { labels, scores })
    }

    pub fn score(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.scores[i])
    }

    pub fn argmax(&self) -> usize {
        argmax_first(&self.scores)
    }

    /// Scores normalized to sum to one (uniform if they sum to zero).
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.scores.iter().sum();
        if total > 0.0 {
            self.scores.iter().map(|s| s / total).collect()
        } else {
            vec![1.0 / self.scores.len() as f64; self.scores.len()]
        }
    }
}

/// Index of the maximum; the earliest index wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean label-word probability per label.
pub fn aggregate(dist: &MaskDistribution, verbalizer: &Verbalizer) -> Result<LabelScores> {
    aggregate_probs(dist.probs(), verbalizer)
}

pub fn aggregate_probs(probs: &[f64], verbalizer: &Verbalizer) -> Result<LabelScores> {
    if probs.len() != verbalizer.vocab_size {
        return Err(Error::Vocabulary(format!(
            "distribution over {} tokens, verbalizer expects {}",
            probs.len(),
            verbalizer.vocab_size
        )));
    }
    let scores = verbalizer
        .label_words
        .iter()
        .map(|ws| ws.iter().map(|w| probs[w.token_id]).sum::<f64>() / ws.len() as f64)
        .collect();
    Ok(LabelScores {
        labels: verbalizer.label_order.clone(),
        scores,
    })
}

/// Label with the highest score; ties go to the label earliest in order.
pub fn predict(scores: &LabelScores) -> &str {
    &scores.labels[scores.argmax()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::Vocabulary;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["yes yeah indeed no nope never maybe"], &[], 1)
    }

    fn yes_no_inputs() -> (SynonymLexicon, FrequencyTable) {
        let lex = SynonymLexicon::from_pairs([
            ("yes", vec!["yeah", "indeed"]),
            ("no", vec!["nope", "never"]),
        ]);
        let freq = FrequencyTable::from_pairs([
            ("yes", 100),
            ("indeed", 50),
            ("yeah", 10),
            ("no", 100),
            ("never", 40),
            ("nope", 5),
        ]);
        (lex, freq)
    }

    fn words(v: &Verbalizer, i: usize) -> Vec<&str> {
        v.words(i).iter().map(|w| w.word.as_str()).collect()
    }

    #[test]
    fn builds_top_k_by_frequency() {
        let (lex, freq) = yes_no_inputs();
        let v = build(&binary_seed_words(), &lex, &freq, 3, &vocab()).unwrap();
        assert_eq!(v.labels(), &["NO", "YES"]);
        assert_eq!(words(&v, 0), vec!["no", "never", "nope"]);
        assert_eq!(words(&v, 1), vec!["yes", "indeed", "yeah"]);

        let v2 = build(&binary_seed_words(), &lex, &freq, 2, &vocab()).unwrap();
        assert_eq!(words(&v2, 1), vec!["yes", "indeed"]);
    }

    #[test]
    fn k1_without_synonyms_is_seed() {
        let v = build(
            &binary_seed_words(),
            &SynonymLexicon::default(),
            &FrequencyTable::default(),
            1,
            &vocab(),
        )
        .unwrap();
        assert_eq!(words(&v, 1), vec!["yes"]);
        assert_eq!(words(&v, 0), vec!["no"]);
    }

    #[test]
    fn frequency_ties_are_lexicographic() {
        let lex = SynonymLexicon::from_pairs([("yes", vec!["yeah", "indeed"])]);
        let seeds = vec![("YES".to_string(), vec!["yes".to_string()])];
        let v = build(&seeds, &lex, &FrequencyTable::default(), 3, &vocab()).unwrap();
        assert_eq!(words(&v, 0), vec!["indeed", "yeah", "yes"]);
    }

    #[test]
    fn out_of_vocab_candidates() {
        let lex = SynonymLexicon::from_pairs([("yes", vec!["absolutely", "sure thing"])]);
        let seeds = vec![("YES".to_string(), vec!["yes".to_string()])];
        let v = build(&seeds, &lex, &FrequencyTable::default(), 5, &vocab()).unwrap();
        assert_eq!(words(&v, 0), vec!["yes"]);

        let seeds = vec![("YES".to_string(), vec!["certainly".to_string()])];
        assert!(matches!(
            build(&seeds, &lex, &FrequencyTable::default(), 5, &vocab()),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn shared_candidate_goes_to_earliest_rank() {
        // `maybe` is rank 1 for NO and rank 2 for YES.
        let lex = SynonymLexicon::from_pairs([("no", vec!["maybe"]), ("yes", vec!["yeah", "maybe"])]);
        let v = build(&binary_seed_words(), &lex, &FrequencyTable::default(), 5, &vocab()).unwrap();
        assert!(words(&v, 0).contains(&"maybe"));
        assert!(!words(&v, 1).contains(&"maybe"));
    }

    #[test]
    fn aggregate_means() {
        let vocab = vocab();
        let a = vocab.id("yes").unwrap();
        let b = vocab.id("yeah").unwrap();
        let c = vocab.id("no").unwrap();
        let v = Verbalizer::from_token_ids(
            vec!["NO".into(), "YES".into()],
            vec![vec![c], vec![a, b]],
            &vocab,
        )
        .unwrap();
        let mut probs = vec![0.0; vocab.len()];
        probs[a] = 0.3;
        probs[b] = 0.5;
        probs[c] = 0.1;
        let s = aggregate_probs(&probs, &v).unwrap();
        assert!((s.score("YES").unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(s.score("NO").unwrap(), 0.1);
        assert_eq!(predict(&s), "YES");
        assert!(aggregate_probs(&probs[1..], &v).is_err());
    }

    #[test]
    fn predict_ties_to_first_label() {
        let s = LabelScores::new(vec!["NO".into(), "YES".into()], vec![0.25, 0.25]).unwrap();
        assert_eq!(predict(&s), "NO");
        let s = LabelScores::new(vec!["NO".into(), "YES".into()], vec![0.1, 0.4]).unwrap();
        assert_eq!(predict(&s), "YES");
        let scaled = LabelScores::new(s.labels.clone(), s.scores.iter().map(|x| x * 7.5).collect()).unwrap();
        assert_eq!(predict(&scaled), "YES");
    }

    #[test]
    fn file_formats() {
        let p = Path::new("mem");
        let lex = SynonymLexicon::parse("yes\tyeah, indeed\n# c\nno\tnope\n", p).unwrap();
        assert_eq!(lex.synonyms("yes"), &["yeah", "indeed"]);
        assert!(SynonymLexicon::parse("broken line\n", p).is_err());
        let f = FrequencyTable::parse("yes\t100\nno\t7\n", p).unwrap();
        assert_eq!(f.count("no"), 7);
        assert_eq!(f.count("zzz"), 0);
        assert!(FrequencyTable::parse("yes\tmany\n", p).is_err());
    }

    #[test]
    fn vocab_check_and_export() {
        let (lex, freq) = yes_no_inputs();
        let v = build(&binary_seed_words(), &lex, &freq, 3, &vocab()).unwrap();
        v.check_vocab(&vocab()).unwrap();
        let other = Vocabulary::build(["yes no"], &[], 1);
        assert!(v.check_vocab(&other).is_err());
        let json = v.to_json().unwrap();
        assert!(json.contains("\"indeed\"") && json.contains("token_id"));
    }
}
