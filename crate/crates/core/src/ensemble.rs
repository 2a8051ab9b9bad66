//! Probability-averaging ensembles, label decisions and task metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, ParagraphRecord};
use crate::error::{Error, Result};
use crate::mlm::{MaskScorer, TinyModel};
use crate::prompt::{wrap_record, TaskKind, TaskPromptSet, WrappedText};
use crate::verbalizer::{self, LabelScores, Verbalizer, NEGATIVE_LABEL, POSITIVE_LABEL};

/// Per-label mean of every model's aggregated label scores.
pub fn ensemble_scores(
    models: &[&dyn MaskScorer],
    input: &WrappedText,
    verbalizer: &Verbalizer,
) -> Result<LabelScores> {
    Ok(ensemble_predict(models, input, verbalizer)?.averaged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub source_id: String,
    pub per_model: Vec<LabelScores>,
    pub averaged: LabelScores,
    pub decided: String,
}

pub fn ensemble_predict(
    models: &[&dyn MaskScorer],
    input: &WrappedText,
    verbalizer: &Verbalizer,
) -> Result<EnsemblePrediction> {
    if models.is_empty() {
        return Err(Error::Config("ensemble needs at least one model".into()));
    }
    let per_model = models
        .iter()
        .map(|m| {
            verbalizer.check_vocab(m.vocab())?;
            verbalizer::aggregate(&m.score_mask(input)?, verbalizer)
        })
        .collect::<Result<Vec<_>>>()?;
    let averaged = average_scores(&per_model)?;
    let decided = verbalizer::predict(&averaged).to_string();
    Ok(EnsemblePrediction {
        source_id: input.source_id.clone(),
        per_model,
        averaged,
        decided,
    })
}

/// Element-wise mean of label scores sharing one label order.
///
/// Each label's values are sorted and folded with a running mean, so the
/// result is bitwise independent of model order and equals `x` exactly
/// when every model reports `x`.
pub fn average_scores(all: &[LabelScores]) -> Result<LabelScores> {
    let first = all
        .first()
        .ok_or_else(|| Error::Config("nothing to average".into()))?;
    if all.iter().any(|s| s.labels != first.labels) {
        return Err(Error::Data("label orders differ between models".into()));
    }
    let means = (0..first.scores.len())
        .map(|j| {
            let mut column: Vec<f64> = all.iter().map(|s| s.scores[j]).collect();
            column.sort_by(f64::total_cmp);
            column
                .iter()
                .enumerate()
                .fold(0.0, |m, (i, &x)| m + (x - m) / (i + 1) as f64)
        })
        .collect();
    LabelScores::new(first.labels.clone(), means)
}

pub fn decide_binary(scores: &LabelScores) -> BinaryLabel {
    if verbalizer::predict(scores) == POSITIVE_LABEL {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

/// Categories whose YES score strictly beats their NO score.
pub fn decide_multilabel(
    per_category: &BTreeMap<String, LabelScores>,
    categories: &[String],
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for c in categories {
        let s = per_category
            .get(c)
            .ok_or_else(|| Error::Data(format!("no scores for category `{c}`")))?;
        let yes = s.score(POSITIVE_LABEL);
        let no = s.score(NEGATIVE_LABEL);
        match (yes, no) {
            (Some(y), Some(n)) if y > n => out.push(c.clone()),
            (Some(_), Some(_)) => {}
            _ => return Err(Error::Data(format!("category `{c}` scores lack YES/NO labels"))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    /// (precision, recall, F1) with 0 for any zero denominator.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

/// Positive-class P/R/F1, or for multilabel the unweighted means of the
/// per-category values (so `f1` is macro-F1, the mean of category F1s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_category: Vec<CategoryMetrics>,
}

impl MetricReport {
    /// JSON with every real rounded to 4 decimal places.
    pub fn to_json(&self) -> Result<String> {
        let r4 = |x: f64| (x * 1e4).round() / 1e4;
        let mut rounded = self.clone();
        rounded.precision = r4(rounded.precision);
        rounded.recall = r4(rounded.recall);
        rounded.f1 = r4(rounded.f1);
        for c in &mut rounded.per_category {
            c.precision = r4(c.precision);
            c.recall = r4(c.recall);
            c.f1 = r4(c.f1);
        }
        Ok(serde_json::to_string_pretty(&rounded)?)
    }
}

pub fn f1_positive(preds: &[BinaryLabel], golds: &[BinaryLabel]) -> Result<MetricReport> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    let mut counts = Counts::default();
    for (p, g) in preds.iter().zip(golds) {
        counts.add(p.is_positive(), g.is_positive());
    }
    let (precision, recall, f1) = counts.prf();
    Ok(MetricReport {
        precision,
        recall,
        f1,
        counts,
        per_category: Vec::new(),
    })
}

pub fn macro_f1(preds: &[Vec<String>], golds: &[Vec<String>], categories: &[String]) -> Result<MetricReport> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if categories.is_empty() {
        return Err(Error::Config("macro-F1 needs at least one category".into()));
    }
    let mut per_category = Vec::with_capacity(categories.len());
    let mut total = Counts::default();
    for c in categories {
        let mut counts = Counts::default();
        for (p, g) in preds.iter().zip(golds) {
            counts.add(p.contains(c), g.contains(c));
        }
        total.tp += counts.tp;
        total.fp += counts.fp;
        total.fn_ += counts.fn_;
        let (precision, recall, f1) = counts.prf();
        per_category.push(CategoryMetrics {
            category: c.clone(),
            precision,
            recall,
            f1,
            counts,
        });
    }
    let n = categories.len() as f64;
    let mean = |f: fn(&CategoryMetrics) -> f64| per_category.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        counts: total,
        per_category,
    })
}

/// A decided prediction for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Binary {
        id: String,
        scores: LabelScores,
        label: BinaryLabel,
    },
    Multilabel {
        id: String,
        per_category: BTreeMap<String, LabelScores>,
        categories: Vec<String>,
    },
}

impl Prediction {
    pub fn id(&self) -> &str {
        match self {
            Prediction::Binary { id, .. } | Prediction::Multilabel { id, .. } => id,
        }
    }

    /// The predictions-file line: `id<TAB>label` or `id<TAB>cat1,cat2`.
    pub fn to_line(&self) -> String {
        match self {
            Prediction::Binary { id, label, .. } => format!("{id}\t{label}"),
            Prediction::Multilabel { id, categories, .. } => format!("{id}\t{}", categories.join(",")),
        }
    }
}

/// The models an ensemble averages over, with what they need to score.
pub enum Ensemble<'a> {
    Prompt {
        scorers: Vec<&'a dyn MaskScorer>,
        prompts: &'a TaskPromptSet,
        verbalizer: &'a Verbalizer,
    },
    Cls {
        models: Vec<&'a TinyModel>,
        task: TaskKind,
        categories: &'a [String],
    },
}

fn binary_labels() -> Vec<String> {
    vec![NEGATIVE_LABEL.to_string(), POSITIVE_LABEL.to_string()]
}

impl<'a> Ensemble<'a> {
    pub fn task(&self) -> TaskKind {
        match self {
            Ensemble::Prompt { prompts, .. } => prompts.task_kind(),
            Ensemble::Cls { task, .. } => *task,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Ensemble::Prompt { scorers, .. } => scorers.len(),
            Ensemble::Cls { models, .. } => models.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn predict(&self, record: &ParagraphRecord) -> Result<Prediction> {
        if self.is_empty() {
            return Err(Error::Config("ensemble needs at least one model".into()));
        }
        match self {
            Ensemble::Prompt {
                scorers,
                prompts,
                verbalizer,
            } => {
                let mask = scorers[0].mask_token();
                match prompts {
                    TaskPromptSet::Binary(t) => {
                        let w = wrap_record(record, t, &mask)?;
                        let scores = ensemble_scores(scorers, &w, verbalizer)?;
                        let label = decide_binary(&scores);
                        Ok(Prediction::Binary {
                            id: record.id.clone(),
                            scores,
                            label,
                        })
                    }
                    TaskPromptSet::Multilabel(m) => {
                        let mut per_category = BTreeMap::new();
                        for (c, t) in m {
                            let w = wrap_record(record, t, &mask)?;
                            per_category.insert(c.clone(), ensemble_scores(scorers, &w, verbalizer)?);
                        }
                        let cats: Vec<String> = m.iter().map(|(c, _)| c.clone()).collect();
                        let categories = decide_multilabel(&per_category, &cats)?;
                        Ok(Prediction::Multilabel {
                            id: record.id.clone(),
                            per_category,
                            categories,
                        })
                    }
                }
            }
            Ensemble::Cls {
                models,
                task,
                categories,
            } => {
                let per_model = models
                    .iter()
                    .map(|m| m.cls_forward(&record.text))
                    .collect::<Result<Vec<_>>>()?;
                let groups = per_model[0].len();
                let mut averaged = Vec::with_capacity(groups);
                for g in 0..groups {
                    let scores = per_model
                        .iter()
                        .map(|pm| LabelScores::new(binary_labels(), pm[g].clone()))
                        .collect::<Result<Vec<_>>>()?;
                    averaged.push(average_scores(&scores)?);
                }
                match task {
                    TaskKind::Binary => {
                        let scores = averaged.swap_remove(0);
                        let label = decide_binary(&scores);
                        Ok(Prediction::Binary {
                            id: record.id.clone(),
                            scores,
                            label,
                        })
                    }
                    TaskKind::Multilabel => {
                        if groups != categories.len() {
                            return Err(Error::Config(format!(
                                "CLS head has {groups} groups for {} categories",
                                categories.len()
                            )));
                        }
                        let per_category: BTreeMap<String, LabelScores> =
                            categories.iter().cloned().zip(averaged).collect();
                        let decided = decide_multilabel(&per_category, categories)?;
                        Ok(Prediction::Multilabel {
                            id: record.id.clone(),
                            per_category,
                            categories: decided,
                        })
                    }
                }
            }
        }
    }

    pub fn predict_all<'r, I>(&self, records: I) -> Result<Vec<Prediction>>
    where
        I: IntoIterator<Item = &'r ParagraphRecord>,
    {
        records.into_iter().map(|r| self.predict(r)).collect()
    }
}

/// Metric of `preds` against the golds carried by `records` (same order).
pub fn score_predictions(
    preds: &[Prediction],
    records: &[&ParagraphRecord],
    task: TaskKind,
    categories: &[String],
) -> Result<MetricReport> {
    if preds.len() != records.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: records.len(),
        });
    }
    match task {
        TaskKind::Binary => {
            let mut p = Vec::with_capacity(preds.len());
            let mut g = Vec::with_capacity(preds.len());
            for (pred, rec) in preds.iter().zip(records) {
                let Prediction::Binary { label, .. } = pred else {
                    return Err(Error::Data("expected binary predictions".into()));
                };
                let gold = rec
                    .binary_label
                    .ok_or_else(|| Error::Data(format!("record `{}` has no binary label", rec.id)))?;
                p.push(*label);
                g.push(gold);
            }
            f1_positive(&p, &g)
        }
        TaskKind::Multilabel => {
            let mut p = Vec::with_capacity(preds.len());
            for pred in preds {
                let Prediction::Multilabel { categories, .. } = pred else {
                    return Err(Error::Data("expected multilabel predictions".into()));
                };
                p.push(categories.clone());
            }
            let g: Vec<Vec<String>> = records.iter().map(|r| r.categories.clone()).collect();
            macro_f1(&p, &g, categories)
        }
    }
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&p.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A predictions (or gold) file: `id<TAB>label` or `id<TAB>cat1,cat2,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelFile {
    Binary(Vec<(String, BinaryLabel)>),
    Multilabel(Vec<(String, Vec<String>)>),
}

pub fn read_label_file(path: &Path, task: TaskKind) -> Result<LabelFile> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = BTreeSet::new();
    let mut binary = Vec::new();
    let mut multi = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = line.split_once('\t').unwrap_or((line, ""));
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(err(i + 1, format!("duplicate id `{id}`")));
        }
        match task {
            TaskKind::Binary => {
                let l = BinaryLabel::parse(value)
                    .ok_or_else(|| err(i + 1, format!("bad binary label `{value}`")))?;
                binary.push((id, l));
            }
            TaskKind::Multilabel => {
                let cats = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                multi.push((id, cats));
            }
        }
    }
    Ok(match task {
        TaskKind::Binary => LabelFile::Binary(binary),
        TaskKind::Multilabel => LabelFile::Multilabel(multi),
    })
}

/// Matches predictions to golds by id and scores them.
pub fn evaluate_files(pred: &LabelFile, gold: &LabelFile, categories: &[String]) -> Result<MetricReport> {
    fn align<'a, T>(pred: &'a [(String, T)], gold: &'a [(String, T)]) -> Result<(Vec<&'a T>, Vec<&'a T>)> {
        let gmap: BTreeMap<&str, &T> = gold.iter().map(|(i, v)| (i.as_str(), v)).collect();
        if pred.len() != gold.len() {
            return Err(Error::Data(format!(
                "{} predictions for {} gold rows",
                pred.len(),
                gold.len()
            )));
        }
        let mut p = Vec::with_capacity(pred.len());
        let mut g = Vec::with_capacity(pred.len());
        for (id, v) in pred {
            let gv = gmap
                .get(id.as_str())
                .ok_or_else(|| Error::Data(format!("prediction id `{id}` not in gold file")))?;
            p.push(v);
            g.push(*gv);
        }
        Ok((p, g))
    }
    match (pred, gold) {
        (LabelFile::Binary(p), LabelFile::Binary(g)) => {
            let (p, g) = align(p, g)?;
            f1_positive(
                &p.into_iter().copied().collect::<Vec<_>>(),
                &g.into_iter().copied().collect::<Vec<_>>(),
            )
        }
        (LabelFile::Multilabel(p), LabelFile::Multilabel(g)) => {
            let (p, g) = align(p, g)?;
            let cats: Vec<String> = if categories.is_empty() {
                let all: BTreeSet<&String> = p.iter().chain(&g).flat_map(|v| v.iter()).collect();
                all.into_iter().cloned().collect()
            } else {
                categories.to_vec()
            };
            macro_f1(
                &p.into_iter().cloned().collect::<Vec<_>>(),
                &g.into_iter().cloned().collect::<Vec<_>>(),
                &cats,
            )
        }
        _ => Err(Error::Data("prediction and gold files are of different task kinds".into())),
    }
}
