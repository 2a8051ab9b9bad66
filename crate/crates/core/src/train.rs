//! Fine-tuning: label-level cross-entropy, R-Drop consistency, AdamW,
//! per-epoch validation with early stopping and best-checkpoint selection.
//!
//! Both heads are trained through the same label distribution `q` over Y:
//! for the prompt model `q` is the verbalizer's label means renormalized to
//! sum to one; for the CLS baseline it is the head's softmax. The loss of
//! one example is `-ln q[gold]`, or with R-Drop two dropout-sampled passes
//! `½(CE₁ + CE₂) + α · ½(KL(q₁‖q₂) + KL(q₂‖q₁))`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, DatasetView, ParagraphRecord};
use crate::ensemble::{score_predictions, Ensemble};
use crate::error::{Error, Result};
use crate::mlm::{save_checkpoint, softmax, softmax_backward, Encoded, Head, MaskDistribution, MaskScorer, TinyModel};
use crate::prompt::{wrap_record, TaskKind, TaskPromptSet};
use crate::verbalizer::{self, Verbalizer, NEGATIVE_LABEL, POSITIVE_LABEL};

/// Clamp for every log and KL denominator.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// 0 disables R-Drop (one forward pass per example).
    pub rdrop_alpha: f64,
    pub dropout_rate: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            max_epochs: 10,
            batch_size: 16,
            max_seq_len: 256,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            rdrop_alpha: 1.0,
            dropout_rate: 0.1,
            early_stop_patience: 3,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::out_of_range("learning_rate", self.learning_rate, ">= 0"));
        }
        if self.max_epochs == 0 {
            return Err(Error::out_of_range("max_epochs", 0, ">= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::out_of_range("batch_size", 0, ">= 1"));
        }
        if self.max_seq_len < 2 {
            return Err(Error::out_of_range("max_seq_len", self.max_seq_len, ">= 2"));
        }
        if !(self.rdrop_alpha >= 0.0) {
            return Err(Error::out_of_range("rdrop_alpha", self.rdrop_alpha, ">= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::out_of_range("dropout_rate", self.dropout_rate, "[0, 1)"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::out_of_range("early_stop_patience", 0, ">= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("AdamW betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Cross-entropy of normalized label scores against the gold label.
pub fn label_ce_loss(dist: &MaskDistribution, gold: &str, verbalizer: &Verbalizer) -> Result<f64> {
    let gi = verbalizer
        .label_index(gold)
        .ok_or_else(|| Error::Data(format!("gold label `{gold}` not in verbalizer")))?;
    let scores = verbalizer::aggregate(dist, verbalizer)?;
    let total: f64 = scores.scores.iter().sum();
    let q = if total > 0.0 { scores.scores[gi] / total } else { 0.0 };
    Ok(ce(q))
}

fn ce(q_gold: f64) -> f64 {
    if q_gold < EPS {
        log::warn!("label cross-entropy: gold probability {q_gold:e} clamped to {EPS:e}");
    }
    -q_gold.max(EPS).ln()
}

/// One coordinate of `KL(p‖q) + KL(q‖p)`. Written as `(a-b)(ln a - ln b)`
/// so every term is non-negative and swapping arguments is exact; a zero
/// coordinate leaves only the other side's term, with its denominator
/// clamped at [`EPS`].
fn sym_kl_term(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (true, true) => (a - b) * (a.ln() - b.ln()),
        (true, false) => a * (a.ln() - EPS.ln()),
        (false, true) => b * (b.ln() - EPS.ln()),
        (false, false) => 0.0,
    }
}

/// `½ (KL(p‖q) + KL(q‖p))`; zero-mass terms vanish, zero denominators clamp at [`EPS`].
pub fn bidirectional_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(&a, &b)| sym_kl_term(a, b)).sum::<f64>())
}

/// Gradient of the bidirectional KL with respect to `p` (swap args for `q`).
fn bkl_grad(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let (pi, qi) = (pi.max(EPS), qi.max(EPS));
            0.5 * (pi.ln() - qi.ln() + 1.0 - qi / pi)
        })
        .collect()
}

/// How head logits become label distributions.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    /// Mask-position vocabulary softmax aggregated by the verbalizer.
    Prompt(&'a Verbalizer),
    /// One softmax per group of `classes` logits.
    Cls { classes: usize },
}

impl Objective<'_> {
    /// Label distribution of each group, plus what backward needs.
    fn forward(&self, logits: &[f64]) -> Vec<GroupOut> {
        match self {
            Objective::Prompt(v) => {
                let probs = softmax(logits);
                let sums: Vec<f64> = v
                    .token_sets()
                    .map(|ids| {
                        let ids: Vec<_> = ids.collect();
                        ids.iter().map(|&i| probs[i]).sum::<f64>() / ids.len() as f64
                    })
                    .collect();
                let total: f64 = sums.iter().sum::<f64>().max(EPS);
                let q = sums.iter().map(|s| s / total).collect();
                vec![GroupOut { q, probs, total }]
            }
            Objective::Cls { classes } => logits
                .chunks(*classes)
                .map(|z| {
                    let q = softmax(z);
                    GroupOut {
                        probs: q.clone(),
                        q,
                        total: 1.0,
                    }
                })
                .collect(),
        }
    }

    fn backward(&self, outs: &[GroupOut], dq: &[Vec<f64>]) -> Vec<f64> {
        match self {
            Objective::Prompt(v) => {
                let o = &outs[0];
                let dot: f64 = dq[0].iter().zip(&o.q).map(|(a, b)| a * b).sum();
                let mut dprobs = vec![0.0; o.probs.len()];
                for (y, ids) in v.token_sets().enumerate() {
                    let ids: Vec<_> = ids.collect();
                    let ds = (dq[0][y] - dot) / o.total / ids.len() as f64;
                    for i in ids {
                        dprobs[i] += ds;
                    }
                }
                softmax_backward(&o.probs, &dprobs)
            }
            Objective::Cls { .. } => outs
                .iter()
                .zip(dq)
                .flat_map(|(o, d)| softmax_backward(&o.q, d))
                .collect(),
        }
    }
}

struct GroupOut {
    q: Vec<f64>,
    probs: Vec<f64>,
    total: f64,
}

/// One training input: encoded tokens and the gold label of each head group.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub encoded: Encoded,
    pub golds: Vec<usize>,
}

fn ce_terms(outs: &[GroupOut], golds: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let n = golds.len() as f64;
    let mut loss = 0.0;
    let mut dq = Vec::with_capacity(outs.len());
    for (o, &g) in outs.iter().zip(golds) {
        loss += ce(o.q[g]) / n;
        let mut d = vec![0.0; o.q.len()];
        d[g] = -1.0 / o.q[g].max(EPS) / n;
        dq.push(d);
    }
    (loss, dq)
}

/// Loss of one example, accumulating `scale ×` its gradient into `grads`.
fn example_loss(
    model: &TinyModel,
    objective: Objective<'_>,
    ex: &Example,
    alpha: f64,
    rng: &mut ChaCha8Rng,
    grads: Option<(&mut [f64], f64)>,
) -> f64 {
    let two_pass = alpha > 0.0;
    let (z1, c1) = model.forward(&ex.encoded, Some(rng));
    let o1 = objective.forward(&z1);
    if !two_pass {
        let (loss, dq) = ce_terms(&o1, &ex.golds);
        if let Some((g, scale)) = grads {
            let dz = scaled(objective.backward(&o1, &dq), scale);
            model.backward(&c1, &dz, g);
        }
        return loss;
    }
    let (z2, c2) = model.forward(&ex.encoded, Some(rng));
    let o2 = objective.forward(&z2);
    let (ce1, mut dq1) = ce_terms(&o1, &ex.golds);
    let (ce2, mut dq2) = ce_terms(&o2, &ex.golds);
    let n = ex.golds.len() as f64;
    let mut kl_sum = 0.0;
    for (gi, (a, b)) in o1.iter().zip(&o2).enumerate() {
        kl_sum += bidirectional_kl(&a.q, &b.q).expect("same label count") / n;
        if grads.is_some() {
            let ga = bkl_grad(&a.q, &b.q);
            let gb = bkl_grad(&b.q, &a.q);
            for y in 0..a.q.len() {
                dq1[gi][y] = 0.5 * dq1[gi][y] + alpha * ga[y] / n;
                dq2[gi][y] = 0.5 * dq2[gi][y] + alpha * gb[y] / n;
            }
        }
    }
    if let Some((g, scale)) = grads {
        let dz1 = scaled(objective.backward(&o1, &dq1), scale);
        model.backward(&c1, &dz1, g);
        let dz2 = scaled(objective.backward(&o2, &dq2), scale);
        model.backward(&c2, &dz2, g);
    }
    0.5 * (ce1 + ce2) + alpha * kl_sum
}

fn scaled(mut v: Vec<f64>, s: f64) -> Vec<f64> {
    for x in &mut v {
        *x *= s;
    }
    v
}

/// Mean over the batch of the (R-Drop) loss, with dropout drawn from `rng`.
/// The model's own dropout rate is used; a rate of 0 collapses both passes.
pub fn rdrop_step_loss(
    batch: &[Example],
    model: &TinyModel,
    objective: Objective<'_>,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::out_of_range("rdrop alpha", alpha, ">= 0"));
    }
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let total: f64 = batch
        .iter()
        .map(|ex| example_loss(model, objective, ex, alpha, rng, None))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean R-Drop loss and its gradient over a batch.
pub fn batch_loss_and_grad(
    batch: &[Example],
    model: &TinyModel,
    objective: Objective<'_>,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; model.num_params()];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        loss += example_loss(model, objective, ex, alpha, rng, Some((&mut grads, scale))) * scale;
    }
    (loss, grads)
}

/// Loss with dropout disabled, and no gradient.
pub fn eval_loss(examples: &[Example], model: &TinyModel, objective: Objective<'_>) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let total: f64 = examples
        .iter()
        .map(|ex| {
            let (z, _) = model.forward(&ex.encoded, None);
            ce_terms(&objective.forward(&z), &ex.golds).0
        })
        .sum();
    total / examples.len() as f64
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        AdamW {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Which model family is trained and how its examples are built.
#[derive(Clone, Copy)]
pub enum TaskSetup<'a> {
    Prompt {
        prompts: &'a TaskPromptSet,
        verbalizer: &'a Verbalizer,
    },
    Cls {
        task: TaskKind,
        categories: &'a [String],
    },
}

impl<'a> TaskSetup<'a> {
    pub fn task(&self) -> TaskKind {
        match self {
            TaskSetup::Prompt { prompts, .. } => prompts.task_kind(),
            TaskSetup::Cls { task, .. } => *task,
        }
    }

    pub fn objective(&self) -> Objective<'a> {
        match self {
            TaskSetup::Prompt { verbalizer, .. } => Objective::Prompt(verbalizer),
            TaskSetup::Cls { .. } => Objective::Cls { classes: 2 },
        }
    }

    fn categories(&self) -> Vec<String> {
        match self {
            TaskSetup::Prompt { prompts, .. } => match prompts {
                TaskPromptSet::Binary(_) => Vec::new(),
                TaskPromptSet::Multilabel(m) => m.iter().map(|(c, _)| c.clone()).collect(),
            },
            TaskSetup::Cls { categories, .. } => categories.to_vec(),
        }
    }

    pub fn ensemble<'m>(&self, models: &'m [TinyModel]) -> Ensemble<'m>
    where
        'a: 'm,
    {
        match *self {
            TaskSetup::Prompt { prompts, verbalizer } => Ensemble::Prompt {
                scorers: models.iter().map(|m| m as &dyn MaskScorer).collect(),
                prompts,
                verbalizer,
            },
            TaskSetup::Cls { task, categories } => Ensemble::Cls {
                models: models.iter().collect(),
                task,
                categories,
            },
        }
    }

    fn check_model(&self, model: &TinyModel) -> Result<()> {
        match (self, model.head()) {
            (TaskSetup::Prompt { verbalizer, .. }, Head::Mlm) => verbalizer.check_vocab(model.vocabulary()),
            (TaskSetup::Cls { task, categories }, Head::Cls { groups, classes }) => {
                let want = match task {
                    TaskKind::Binary => 1,
                    TaskKind::Multilabel => categories.len(),
                };
                if groups != want || classes != 2 {
                    return Err(Error::Config(format!(
                        "CLS head has {groups}x{classes} outputs, task needs {want}x2"
                    )));
                }
                Ok(())
            }
            _ => Err(Error::Config("model head does not match the training strategy".into())),
        }
    }

    /// Builds training examples; records without the needed gold are skipped.
    pub fn examples<'r, I>(&self, model: &TinyModel, records: I) -> Result<Vec<Example>>
    where
        I: IntoIterator<Item = &'r ParagraphRecord>,
    {
        let mut out = Vec::new();
        match self {
            TaskSetup::Prompt { prompts, verbalizer } => {
                let yes = label_idx(verbalizer, POSITIVE_LABEL)?;
                let no = label_idx(verbalizer, NEGATIVE_LABEL)?;
                let mask = model.vocabulary().tokens()[crate::mlm::MASK_ID].clone();
                for r in records {
                    match prompts {
                        TaskPromptSet::Binary(t) => {
                            let Some(l) = r.binary_label else { continue };
                            let w = wrap_record(r, t, &mask)?;
                            out.push(Example {
                                encoded: model.encode_wrapped(&w)?,
                                golds: vec![if l.is_positive() { yes } else { no }],
                            });
                        }
                        TaskPromptSet::Multilabel(m) => {
                            for (c, t) in m {
                                let w = wrap_record(r, t, &mask)?;
                                out.push(Example {
                                    encoded: model.encode_wrapped(&w)?,
                                    golds: vec![if r.categories.contains(c) { yes } else { no }],
                                });
                            }
                        }
                    }
                }
            }
            TaskSetup::Cls { task, categories } => {
                for r in records {
                    let golds = match task {
                        TaskKind::Binary => match r.binary_label {
                            Some(l) => vec![l.index()],
                            None => continue,
                        },
                        TaskKind::Multilabel => categories
                            .iter()
                            .map(|c| usize::from(r.categories.contains(c)))
                            .collect(),
                    };
                    out.push(Example {
                        encoded: model.encode_plain(&r.text)?,
                        golds,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn label_idx(v: &Verbalizer, label: &str) -> Result<usize> {
    v.label_index(label)
        .ok_or_else(|| Error::Config(format!("verbalizer lacks the `{label}` label")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    F1,
    MacroF1,
    /// Negated validation loss, used when no validation gold is positive.
    NegValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub metric: MetricKind,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// One JSON object per epoch, then a `{"summary": ...}` line.
    pub fn to_jsonl(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            metric: MetricKind,
            best_epoch: usize,
            best_metric: f64,
            epochs_run: usize,
            checkpoint: &'a Option<PathBuf>,
        }
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        let summary = Summary {
            metric: self.metric,
            best_epoch: self.best_epoch,
            best_metric: self.best_metric,
            epochs_run: self.epochs.len(),
            checkpoint: &self.checkpoint,
        };
        out.push_str(&serde_json::to_string(&serde_json::json!({ "summary": summary }))?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_jsonl(raw: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Summary {
            metric: MetricKind,
            best_epoch: usize,
            best_metric: f64,
            checkpoint: Option<PathBuf>,
        }
        #[derive(Deserialize)]
        struct Wrapped {
            summary: Summary,
        }
        let mut epochs = Vec::new();
        let mut summary = None;
        for line in raw.lines().filter(|l| !l.trim().is_empty()) {
            if line.starts_with("{\"summary\"") {
                summary = Some(serde_json::from_str::<Wrapped>(line)?.summary);
            } else {
                epochs.push(serde_json::from_str(line)?);
            }
        }
        let s = summary.ok_or_else(|| Error::Data("train report lacks a summary line".into()))?;
        Ok(TrainReport {
            epochs,
            metric: s.metric,
            best_epoch: s.best_epoch,
            best_metric: s.best_metric,
            checkpoint: s.checkpoint,
        })
    }
}

/// Validation metric of a model on `records` (F1 or macro-F1).
pub fn validation_metric(
    setup: &TaskSetup<'_>,
    model: &TinyModel,
    records: &[&ParagraphRecord],
) -> Result<f64> {
    let models = std::slice::from_ref(model);
    let ens = setup.ensemble(models);
    let preds = ens.predict_all(records.iter().copied())?;
    Ok(score_predictions(&preds, records, setup.task(), &setup.categories())?.f1)
}

fn has_positive_gold(setup: &TaskSetup<'_>, records: &[&ParagraphRecord]) -> bool {
    match setup.task() {
        TaskKind::Binary => records.iter().any(|r| r.binary_label == Some(BinaryLabel::Positive)),
        TaskKind::Multilabel => records.iter().any(|r| !r.categories.is_empty()),
    }
}

/// Trains `model` on `train`, validating on `val` after every epoch. The
/// parameters of the best epoch are restored into the returned model and,
/// when `checkpoint` is given, saved there.
pub fn train_fold(
    train: &DatasetView<'_>,
    val: &DatasetView<'_>,
    setup: &TaskSetup<'_>,
    model: TinyModel,
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(TrainReport, TinyModel)> {
    config.validate()?;
    let mut model = model;
    setup.check_model(&model)?;
    model.set_dropout_rate(config.dropout_rate)?;
    if model.config().max_seq_len > config.max_seq_len {
        return Err(Error::Config(format!(
            "model max length {} exceeds configured max_seq_len {}",
            model.config().max_seq_len,
            config.max_seq_len
        )));
    }
    let train_ids: std::collections::HashSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
    if let Some(r) = val.iter().find(|r| train_ids.contains(r.id.as_str())) {
        return Err(Error::Data(format!("record `{}` is in both train and validation", r.id)));
    }

    let train_examples = setup.examples(&model, train.iter())?;
    if train_examples.is_empty() {
        return Err(Error::Training("training view has no labeled examples".into()));
    }
    let val_records: Vec<&ParagraphRecord> = val
        .iter()
        .filter(|r| setup.task() == TaskKind::Multilabel || r.binary_label.is_some())
        .collect();
    let val_examples = setup.examples(&model, val_records.iter().copied())?;
    let metric_kind = if !has_positive_gold(setup, &val_records) {
        log::warn!("validation split has no positive gold; early stopping on validation loss");
        MetricKind::NegValLoss
    } else if setup.task() == TaskKind::Binary {
        MetricKind::F1
    } else {
        MetricKind::MacroF1
    };

    let objective = setup.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(model.num_params(), config);
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_examples[i].clone()).collect();
            let (loss, grads) = batch_loss_and_grad(&batch, &model, objective, config.rdrop_alpha, &mut rng);
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            opt.step(model.params_mut(), &grads);
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_examples.len() as f64;
        let val_loss = eval_loss(&val_examples, &model, objective);
        let val_metric = match metric_kind {
            MetricKind::NegValLoss => -val_loss,
            _ => validation_metric(setup, &model, &val_records)?,
        };
        log::debug!("epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} metric {val_metric:.4}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric,
        });
        match &best {
            Some((_, m, _)) if val_metric <= *m => {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, val_metric, model.params().to_vec()));
                since_best = 0;
            }
        }
    }

    let (best_epoch, best_metric, params) = best.expect("at least one epoch ran");
    model.params_mut().copy_from_slice(&params);
    if let Some(path) = checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("best_epoch".to_string(), best_epoch.to_string());
        meta.insert("best_metric".to_string(), format!("{best_metric:?}"));
        meta.insert("metric".to_string(), serde_json::to_string(&metric_kind)?);
        save_checkpoint(path, &model, &meta)?;
    }
    Ok((
        TrainReport {
            epochs,
            metric: metric_kind,
            best_epoch,
            best_metric,
            checkpoint: checkpoint.map(Path::to_path_buf),
        },
        model,
    ))
}

/// [`train_fold`] for the CLS-head baseline.
pub fn train_cls_fold(
    train: &DatasetView<'_>,
    val: &DatasetView<'_>,
    task: TaskKind,
    model: TinyModel,
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(TrainReport, TinyModel)> {
    let categories = train.category_list;
    let setup = TaskSetup::Cls { task, categories };
    train_fold(train, val, &setup, model, config, checkpoint)
}

pub fn write_report(path: &Path, report: &TrainReport) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(report.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
}
