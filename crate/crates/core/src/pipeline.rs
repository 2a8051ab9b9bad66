//! Config-driven runs: split, augment, train, predict, evaluate.
//!
//! A [`RunConfig`] is resolved from defaults, then a flat `key = value`
//! file, then `PCLP_<KEY>` environment variables, then explicit overrides.
//! Every command writes the resolved config to `<out>/config.resolved`.
//!
//! Output layout:
//!
//! ```text
//! <out>/folds.tsv              fold manifest
//! <out>/augmented.tsv          dataset plus EDA copies
//! <out>/verbalizer.json        label words (prompt strategy)
//! <out>/fold<i>/best.ckpt      best checkpoint of fold i
//! <out>/fold<i>/report.jsonl   per-epoch log of fold i
//! <out>/train_summary.json
//! <out>/predictions.tsv
//! <out>/metrics.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::augment::{augment_records, AugmentConfig};
use crate::corpus::{fold_view, load_dataset, split_folds_with, Dataset, DatasetView, FoldAssignment, Schema};
use crate::ensemble::{evaluate_files, read_label_file, write_predictions, LabelFile, MetricReport};
use crate::error::{Error, Result};
use crate::mlm::{load_checkpoint, Head, ModelConfig, TinyModel, TokenVocab, Vocabulary};
use crate::prompt::{TaskKind, TaskPromptSet, MASK_PLACEHOLDER, TEXT_PLACEHOLDER};
use crate::train::{train_fold, write_report, TaskSetup, TrainConfig, TrainReport};
use crate::verbalizer::{self, binary_seed_words, FrequencyTable, SynonymLexicon, Verbalizer};

pub const ENV_PREFIX: &str = "PCLP_";
pub const RESOLVED_CONFIG: &str = "config.resolved";
pub const MANIFEST: &str = "folds.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cls,
    Prompt,
}

/// One row of the strategy ladder: a model family plus optional extras.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub family: Family,
    pub ensemble: bool,
    pub rdrop: bool,
    pub eda: bool,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy {
            family: Family::Prompt,
            ensemble: true,
            rdrop: true,
            eda: true,
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// `cls|prompt[,ensemble][,rdrop][,eda]`
    fn from_str(s: &str) -> Result<Self> {
        let mut family = None;
        let mut out = Strategy {
            family: Family::Prompt,
            ensemble: false,
            rdrop: false,
            eda: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let f = match part.to_ascii_lowercase().as_str() {
                "cls" | "cls_baseline" => Some(Family::Cls),
                "prompt" => Some(Family::Prompt),
                "ensemble" => {
                    out.ensemble = true;
                    None
                }
                "rdrop" | "r-drop" => {
                    out.rdrop = true;
                    None
                }
                "eda" => {
                    out.eda = true;
                    None
                }
                other => return Err(Error::Config(format!("unknown strategy component `{other}`"))),
            };
            if let Some(f) = f {
                if family.replace(f).is_some_and(|prev| prev != f) {
                    return Err(Error::Config("strategy names both cls and prompt".into()));
                }
            }
        }
        out.family = family.ok_or_else(|| Error::Config(format!("strategy `{s}` names neither cls nor prompt")))?;
        Ok(out)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.family {
            Family::Cls => "cls",
            Family::Prompt => "prompt",
        })?;
        for (on, name) in [(self.ensemble, "ensemble"), (self.rdrop, "rdrop"), (self.eda, "eda")] {
            if on {
                write!(f, ",{name}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Schema,
    pub task: TaskKind,
    pub categories: Vec<String>,
    pub templates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub frequency: Option<PathBuf>,
    pub verbalizer_k: usize,
    pub model: ModelConfig,
    pub vocab_min_count: usize,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub folds: usize,
    pub stratified: bool,
    pub strategy: Strategy,
    pub out: PathBuf,
    /// Drives fold splitting, initialization, shuffling, dropout and EDA.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            schema: Schema::default(),
            task: TaskKind::Binary,
            categories: Vec::new(),
            templates: None,
            lexicon: None,
            frequency: None,
            verbalizer_k: 3,
            model: ModelConfig::default(),
            vocab_min_count: 1,
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            folds: 10,
            stratified: false,
            strategy: Strategy::default(),
            out: PathBuf::from("runs"),
            seed: 42,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn opt_string(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| v.to_string())
}

fn show_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn show_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

fn parse_delimiter(value: &str) -> Result<char> {
    match value {
        "tab" | "\\t" => Ok('\t'),
        "comma" => Ok(','),
        v if v.chars().count() == 1 => Ok(v.chars().next().expect("one char")),
        v => Err(Error::Config(format!("bad delimiter `{v}` (use tab, comma or one character)"))),
    }
}

fn show_delimiter(c: char) -> String {
    match c {
        '\t' => "tab".into(),
        ',' => "comma".into(),
        c => c.to_string(),
    }
}

const PATH_KEYS: [&str; 5] = ["dataset", "templates", "lexicon", "frequency", "out"];

impl RunConfig {
    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || opt_string(v).map(PathBuf::from);
        match key {
            "dataset" => self.dataset = path(),
            "delimiter" => self.schema.delimiter = parse_delimiter(v)?,
            "id_column" => self.schema.id_column = v.to_string(),
            "text_column" => self.schema.text_column = v.to_string(),
            "label_column" => self.schema.label_column = opt_string(v),
            "categories_column" => self.schema.categories_column = opt_string(v),
            "task" => self.task = v.parse()?,
            "categories" => {
                self.categories = v
                    .split(',')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(String::from)
                    .collect()
            }
            "templates" => self.templates = path(),
            "lexicon" => self.lexicon = path(),
            "frequency" => self.frequency = path(),
            "verbalizer_k" => self.verbalizer_k = parse(key, v)?,
            "d_model" => self.model.d_model = parse(key, v)?,
            "n_heads" => self.model.n_heads = parse(key, v)?,
            "n_layers" => self.model.n_layers = parse(key, v)?,
            "d_ff" => self.model.d_ff = parse(key, v)?,
            "vocab_min_count" => self.vocab_min_count = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "max_seq_len" => self.train.max_seq_len = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "beta1" => self.train.beta1 = parse(key, v)?,
            "beta2" => self.train.beta2 = parse(key, v)?,
            "adam_eps" => self.train.adam_eps = parse(key, v)?,
            "rdrop_alpha" => self.train.rdrop_alpha = parse(key, v)?,
            "dropout_rate" => self.train.dropout_rate = parse(key, v)?,
            "early_stop_patience" => self.train.early_stop_patience = parse(key, v)?,
            "alpha_sr" => self.augment.alpha_sr = parse(key, v)?,
            "alpha_ri" => self.augment.alpha_ri = parse(key, v)?,
            "alpha_rs" => self.augment.alpha_rs = parse(key, v)?,
            "p_rd" => self.augment.p_rd = parse(key, v)?,
            "n_aug" => self.augment.n_aug = parse(key, v)?,
            "augment_positive_only" => self.augment.positive_only = parse_bool(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "stratified" => self.stratified = parse_bool(key, v)?,
            "strategy" => self.strategy = v.parse()?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", show_path(&self.dataset)),
            ("delimiter", show_delimiter(self.schema.delimiter)),
            ("id_column", self.schema.id_column.clone()),
            ("text_column", self.schema.text_column.clone()),
            ("label_column", show_opt(&self.schema.label_column)),
            ("categories_column", show_opt(&self.schema.categories_column)),
            ("task", self.task.to_string()),
            ("categories", self.categories.join(",")),
            ("templates", show_path(&self.templates)),
            ("lexicon", show_path(&self.lexicon)),
            ("frequency", show_path(&self.frequency)),
            ("verbalizer_k", self.verbalizer_k.to_string()),
            ("d_model", self.model.d_model.to_string()),
            ("n_heads", self.model.n_heads.to_string()),
            ("n_layers", self.model.n_layers.to_string()),
            ("d_ff", self.model.d_ff.to_string()),
            ("vocab_min_count", self.vocab_min_count.to_string()),
            ("learning_rate", format!("{:?}", self.train.learning_rate)),
            ("max_epochs", self.train.max_epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("max_seq_len", self.train.max_seq_len.to_string()),
            ("weight_decay", format!("{:?}", self.train.weight_decay)),
            ("beta1", format!("{:?}", self.train.beta1)),
            ("beta2", format!("{:?}", self.train.beta2)),
            ("adam_eps", format!("{:?}", self.train.adam_eps)),
            ("rdrop_alpha", format!("{:?}", self.train.rdrop_alpha)),
            ("dropout_rate", format!("{:?}", self.train.dropout_rate)),
            ("early_stop_patience", self.train.early_stop_patience.to_string()),
            ("alpha_sr", format!("{:?}", self.augment.alpha_sr)),
            ("alpha_ri", format!("{:?}", self.augment.alpha_ri)),
            ("alpha_rs", format!("{:?}", self.augment.alpha_rs)),
            ("p_rd", format!("{:?}", self.augment.p_rd)),
            ("n_aug", self.augment.n_aug.to_string()),
            ("augment_positive_only", self.augment.positive_only.to_string()),
            ("folds", self.folds.to_string()),
            ("stratified", self.stratified.to_string()),
            ("strategy", self.strategy.to_string()),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Applies a `key = value` text; `#` starts a comment. Relative paths
    /// are resolved against `base`.
    pub fn apply_text(&mut self, raw: &str, origin: &Path, base: Option<&Path>) -> Result<()> {
        for (i, line) in raw.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let value = match base {
                Some(b) if PATH_KEYS.contains(&key) && opt_string(value).is_some() && Path::new(value).is_relative() => {
                    b.join(value).display().to_string()
                }
                _ => value.to_string(),
            };
            self.set(key, &value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies `PCLP_<KEY>` variables, e.g. `PCLP_LEARNING_RATE=1e-4`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut sorted: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in vars {
            if let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) {
                sorted.insert(key.to_ascii_lowercase(), v.as_ref().to_string());
            }
        }
        for (k, v) in sorted {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then the environment.
    pub fn resolve<I, K, V>(file: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&raw, path, path.parent())?;
        }
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Checks values and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::out_of_range("folds", self.folds, ">= 2"));
        }
        if self.verbalizer_k == 0 {
            return Err(Error::out_of_range("verbalizer_k", 0, ">= 1"));
        }
        self.train.validate()?;
        self.augment.validate()?;
        self.model_config().validate()?;
        let dataset = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset configured".into()))?;
        for p in std::iter::once(dataset).chain(&self.templates).chain(&self.lexicon).chain(&self.frequency) {
            if !p.is_file() {
                return Err(Error::Config(format!("configured file {} does not exist", p.display())));
            }
        }
        match self.task {
            TaskKind::Binary => {
                if self.schema.label_column.is_none() {
                    return Err(Error::Config("binary task needs label_column".into()));
                }
            }
            TaskKind::Multilabel => {
                if self.categories.is_empty() || self.schema.categories_column.is_none() {
                    return Err(Error::Config("multilabel task needs categories and categories_column".into()));
                }
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            max_seq_len: self.train.max_seq_len,
            dropout: self.train.dropout_rate,
            ..self.model.clone()
        }
    }

    /// Training config of fold `i`, with R-Drop off unless the strategy
    /// asks for it.
    pub fn train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            rdrop_alpha: if self.strategy.rdrop { self.train.rdrop_alpha } else { 0.0 },
            seed: self.seed.wrapping_add(fold as u64),
            ..self.train.clone()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            seed: self.seed,
            ..self.augment.clone()
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join(MANIFEST)
    }

    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.out.join(format!("fold{fold}"))
    }

    pub fn checkpoint_path(&self, fold: usize) -> PathBuf {
        self.fold_dir(fold).join("best.ckpt")
    }

    pub fn report_path(&self, fold: usize) -> PathBuf {
        self.fold_dir(fold).join("report.jsonl")
    }

    /// Folds that get a model: all of them with the ensemble, else fold 0.
    pub fn active_folds(&self, k: usize) -> Vec<usize> {
        if self.strategy.ensemble {
            (0..k).collect()
        } else {
            vec![0]
        }
    }
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

/// Writes the resolved config to `<out>/config.resolved`.
pub fn echo_config(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_out(cfg)?;
    let path = cfg.out.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn load_with(path: &Path, schema: &Schema, categories: &[String]) -> Result<Dataset> {
    let loaded = load_dataset(path, schema, categories)?;
    for d in &loaded.rejected {
        log::warn!("{}: rejected row {d}", path.display());
    }
    if loaded.dataset.is_empty() {
        return Err(Error::Data(format!("{} has no valid records", path.display())));
    }
    Ok(loaded.dataset)
}

/// Loads the configured dataset; rejected rows are logged.
pub fn load_configured(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("no dataset configured".into()))?;
    load_with(path, &cfg.schema, &cfg.categories)
}

pub fn cmd_split(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    echo_config(cfg)?;
    let ds = load_configured(cfg)?;
    let folds = split_folds_with(&ds, cfg.folds, cfg.seed, cfg.stratified)?;
    let path = cfg.manifest_path();
    folds.write_manifest(&path)?;
    log::info!("wrote {} folds of sizes {:?} to {}", folds.k, folds.fold_sizes(), path.display());
    Ok(path)
}

fn load_lexicon(cfg: &RunConfig) -> Result<SynonymLexicon> {
    cfg.lexicon.as_deref().map_or_else(|| Ok(SynonymLexicon::default()), SynonymLexicon::load)
}

fn load_frequency(cfg: &RunConfig) -> Result<FrequencyTable> {
    cfg.frequency.as_deref().map_or_else(|| Ok(FrequencyTable::default()), FrequencyTable::load)
}

/// Writes the dataset followed by `n_aug` EDA copies of each eligible
/// record to `<out>/augmented.tsv`.
pub fn cmd_augment(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    echo_config(cfg)?;
    let ds = load_configured(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let extra = augment_records(&ds.records, &cfg.augment_config(), &lexicon)?;
    log::info!("added {} augmented rows to {} records", extra.len(), ds.len());
    let mut records = ds.records.clone();
    records.extend(extra);
    let out = Dataset::new(records, ds.category_list.clone(), ds.schema.clone())?;
    let path = cfg.out.join("augmented.tsv");
    out.write(&path)?;
    Ok(path)
}

/// The prompts of the configured task.
pub fn prompt_set(cfg: &RunConfig) -> Result<TaskPromptSet> {
    match (&cfg.templates, cfg.task) {
        (Some(p), task) => TaskPromptSet::load(p, task, &cfg.categories),
        (None, TaskKind::Binary) => Ok(TaskPromptSet::Binary(crate::prompt::PromptTemplate::binary_default())),
        (None, TaskKind::Multilabel) => Ok(TaskPromptSet::default_multilabel(&cfg.categories, &BTreeMap::new())),
    }
}

/// Vocabulary from the dataset, the template words, the label-word
/// candidates and, with EDA, every synonym EDA could introduce.
pub fn build_vocabulary(
    cfg: &RunConfig,
    dataset: &Dataset,
    prompts: &TaskPromptSet,
    lexicon: &SynonymLexicon,
) -> Vocabulary {
    let mut extra: BTreeSet<String> = BTreeSet::new();
    for t in prompts.templates() {
        let body = t.pattern.replace(TEXT_PLACEHOLDER, " ").replace(MASK_PLACEHOLDER, " ");
        extra.extend(body.split_whitespace().map(str::to_lowercase));
    }
    for (_, seeds) in binary_seed_words() {
        for s in seeds {
            extra.extend(lexicon.synonyms(&s).iter().cloned());
            extra.insert(s);
        }
    }
    if cfg.strategy.eda {
        for r in &dataset.records {
            for w in r.text.split_whitespace() {
                extra.extend(lexicon.synonyms(w).iter().cloned());
            }
        }
    }
    let extra: Vec<&str> = extra.iter().map(String::as_str).collect();
    Vocabulary::build(dataset.records.iter().map(|r| r.text.as_str()), &extra, cfg.vocab_min_count)
}

pub fn build_verbalizer(cfg: &RunConfig, vocab: &dyn TokenVocab) -> Result<Verbalizer> {
    verbalizer::build(
        &binary_seed_words(),
        &load_lexicon(cfg)?,
        &load_frequency(cfg)?,
        cfg.verbalizer_k,
        vocab,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub strategy: String,
    pub folds: Vec<FoldSummary>,
    pub mean_best_metric: f64,
}

fn read_manifest(cfg: &RunConfig, dataset: &Dataset) -> Result<FoldAssignment> {
    let path = cfg.manifest_path();
    if !path.is_file() {
        return Err(Error::Data(format!("fold manifest {} is missing; run split first", path.display())));
    }
    let folds = FoldAssignment::read_manifest(&path)?;
    folds.check_covers(dataset)?;
    Ok(folds)
}

/// Trains every active fold. Folds whose checkpoint and report both exist
/// are skipped, so an interrupted run can be resumed.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    echo_config(cfg)?;
    let ds = load_configured(cfg)?;
    let folds = read_manifest(cfg, &ds)?;
    let prompts = prompt_set(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let vocab = build_vocabulary(cfg, &ds, &prompts, &lexicon);
    log::info!("vocabulary of {} tokens", vocab.len());
    let verbalizer = match cfg.strategy.family {
        Family::Prompt => {
            let v = build_verbalizer(cfg, &vocab)?;
            let path = cfg.out.join("verbalizer.json");
            fs::write(&path, v.to_json()?).map_err(|e| Error::io(&path, e))?;
            Some(v)
        }
        Family::Cls => None,
    };

    let mut summaries = Vec::new();
    for i in cfg.active_folds(folds.k) {
        let (ckpt, report_path) = (cfg.checkpoint_path(i), cfg.report_path(i));
        let report = if ckpt.is_file() && report_path.is_file() {
            log::info!("fold {i}: already trained, skipping");
            let raw = fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
            TrainReport::from_jsonl(&raw)?
        } else {
            log::info!("fold {i}: training");
            let r = train_one(cfg, &ds, &folds, i, &vocab, &prompts, verbalizer.as_ref(), &lexicon)
                .map_err(|e| Error::Training(format!("fold {i}: {e}")))?;
            write_report(&report_path, &r)?;
            r
        };
        summaries.push(FoldSummary {
            fold: i,
            best_epoch: report.best_epoch,
            best_metric: report.best_metric,
            epochs_run: report.epochs.len(),
        });
    }
    let mean = summaries.iter().map(|s| s.best_metric).sum::<f64>() / summaries.len() as f64;
    let summary = TrainSummary {
        strategy: cfg.strategy.to_string(),
        folds: summaries,
        mean_best_metric: mean,
    };
    let path = cfg.out.join("train_summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn train_one(
    cfg: &RunConfig,
    ds: &Dataset,
    folds: &FoldAssignment,
    i: usize,
    vocab: &Vocabulary,
    prompts: &TaskPromptSet,
    verbalizer: Option<&Verbalizer>,
    lexicon: &SynonymLexicon,
) -> Result<TrainReport> {
    let (train, val) = fold_view(ds, folds, i)?;
    let augmented = if cfg.strategy.eda {
        augment_records(train.iter(), &cfg.augment_config(), lexicon)?
    } else {
        Vec::new()
    };
    let train = DatasetView {
        records: train.records.iter().copied().chain(&augmented).collect(),
        category_list: train.category_list,
    };
    let seed = cfg.seed.wrapping_add(i as u64);
    let (setup, model) = match (cfg.strategy.family, verbalizer) {
        (Family::Prompt, Some(verbalizer)) => (
            TaskSetup::Prompt { prompts, verbalizer },
            TinyModel::new_mlm(vocab.clone(), cfg.model_config(), seed)?,
        ),
        _ => {
            let groups = match cfg.task {
                TaskKind::Binary => 1,
                TaskKind::Multilabel => cfg.categories.len(),
            };
            (
                TaskSetup::Cls {
                    task: cfg.task,
                    categories: &ds.category_list,
                },
                TinyModel::new_cls(vocab.clone(), cfg.model_config(), groups, 2, seed)?,
            )
        }
    };
    fs::create_dir_all(cfg.fold_dir(i)).map_err(|e| Error::io(cfg.fold_dir(i), e))?;
    let ckpt = cfg.checkpoint_path(i);
    let (report, _) = train_fold(&train, &val, &setup, model, &cfg.train_config(i), Some(&ckpt))?;
    Ok(report)
}

/// Loads the checkpoints of every active fold.
pub fn load_fold_models(cfg: &RunConfig) -> Result<Vec<TinyModel>> {
    let k = match FoldAssignment::read_manifest(&cfg.manifest_path()) {
        Ok(f) => f.k,
        Err(_) => cfg.folds,
    };
    let mut models = Vec::new();
    for i in cfg.active_folds(k) {
        let path = cfg.checkpoint_path(i);
        if !path.is_file() {
            return Err(Error::Checkpoint(format!("checkpoint {} is missing; run train first", path.display())));
        }
        models.push(load_checkpoint(&path)?.model);
    }
    let fp = models[0].vocabulary().fingerprint();
    if models.iter().any(|m| m.vocabulary().fingerprint() != fp) {
        return Err(Error::Checkpoint("fold checkpoints disagree on vocabulary".into()));
    }
    let want_mlm = cfg.strategy.family == Family::Prompt;
    if models.iter().any(|m| (m.head() == Head::Mlm) != want_mlm) {
        return Err(Error::Checkpoint(format!(
            "checkpoint heads do not match strategy `{}`",
            cfg.strategy
        )));
    }
    Ok(models)
}

/// Predicts every record of `input` (default: the configured dataset) with
/// the fold ensemble; writes `id<TAB>label` lines to `output` (default:
/// `<out>/predictions.tsv`).
pub fn cmd_predict(cfg: &RunConfig, input: Option<&Path>, output: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    echo_config(cfg)?;
    let models = load_fold_models(cfg)?;
    let schema = Schema {
        label_column: None,
        categories_column: None,
        ..cfg.schema.clone()
    };
    let input = input.or(cfg.dataset.as_deref()).expect("validated");
    let ds = load_with(input, &schema, &cfg.categories)?;
    let prompts = prompt_set(cfg)?;
    let verbalizer = match cfg.strategy.family {
        Family::Prompt => Some(build_verbalizer(cfg, models[0].vocabulary())?),
        Family::Cls => None,
    };
    let setup = match &verbalizer {
        Some(verbalizer) => TaskSetup::Prompt {
            prompts: &prompts,
            verbalizer,
        },
        None => TaskSetup::Cls {
            task: cfg.task,
            categories: &cfg.categories,
        },
    };
    let preds = setup.ensemble(&models).predict_all(&ds.records)?;
    let path = output.map_or_else(|| cfg.out.join("predictions.tsv"), Path::to_path_buf);
    write_predictions(&path, &preds)?;
    log::info!("wrote {} predictions from {} model(s) to {}", preds.len(), models.len(), path.display());
    Ok(path)
}

/// Gold labels of a dataset in predictions-file form.
pub fn gold_labels(dataset: &Dataset, task: TaskKind) -> Result<LabelFile> {
    match task {
        TaskKind::Binary => dataset
            .records
            .iter()
            .map(|r| {
                r.binary_label
                    .map(|l| (r.id.clone(), l))
                    .ok_or_else(|| Error::Data(format!("record `{}` has no binary label", r.id)))
            })
            .collect::<Result<_>>()
            .map(LabelFile::Binary),
        TaskKind::Multilabel => Ok(LabelFile::Multilabel(
            dataset.records.iter().map(|r| (r.id.clone(), r.categories.clone())).collect(),
        )),
    }
}

/// Scores a predictions file against `gold` (a label file) or, without
/// one, against the configured dataset. Writes `<out>/metrics.json`.
pub fn cmd_evaluate(cfg: &RunConfig, predictions: &Path, gold: Option<&Path>) -> Result<MetricReport> {
    echo_config(cfg)?;
    let pred = read_label_file(predictions, cfg.task)?;
    let gold = match gold {
        Some(g) => read_label_file(g, cfg.task)?,
        None => gold_labels(&load_configured(cfg)?, cfg.task)?,
    };
    let report = evaluate_files(&pred, &gold, &cfg.categories)?;
    let path = cfg.out.join("metrics.json");
    fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_round_trips() {
        for s in ["cls", "prompt", "prompt,ensemble", "prompt,ensemble,rdrop,eda", "cls,rdrop"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert_eq!("eda,prompt".parse::<Strategy>().unwrap().to_string(), "prompt,eda");
        assert!("ensemble".parse::<Strategy>().is_err());
        assert!("cls,prompt".parse::<Strategy>().is_err());
        assert!("prompt,bagging".parse::<Strategy>().is_err());
    }

    #[test]
    fn resolved_text_reparses_to_same_config() {
        let mut cfg = RunConfig::default();
        cfg.set("learning_rate", "0.003").unwrap();
        cfg.set("categories", "a, b").unwrap();
        cfg.set("lexicon", "lex.tsv").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("x"), None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn env_overrides_file() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 1\nfolds = 5 # five\n", Path::new("c"), Some(Path::new("/base")))
            .unwrap();
        cfg.apply_env([("PCLP_SEED", "9"), ("HOME", "/root"), ("PCLP_OUT", "o")]).unwrap();
        assert_eq!((cfg.seed, cfg.folds, cfg.out.clone()), (9, 5, PathBuf::from("o")));
        cfg.apply_text("out = runs\n", Path::new("c"), Some(Path::new("/base"))).unwrap();
        assert_eq!(cfg.out, PathBuf::from("/base/runs"));
    }

    #[test]
    fn bad_lines_report_position() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply_text("seed = 1\nnonsense\n", Path::new("c"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = cfg.apply_text("colour = red\n", Path::new("c"), None).unwrap_err();
        assert!(e.to_string().contains("colour"));
    }

    #[test]
    fn rdrop_toggle_controls_alpha() {
        let mut cfg = RunConfig::default();
        cfg.set("strategy", "prompt").unwrap();
        assert_eq!(cfg.train_config(3).rdrop_alpha, 0.0);
        assert_eq!(cfg.train_config(3).seed, 45);
        cfg.set("strategy", "prompt,rdrop").unwrap();
        assert_eq!(cfg.train_config(0).rdrop_alpha, 1.0);
        assert_eq!(cfg.active_folds(10), vec![0]);
    }

    #[test]
    fn validation_requires_existing_files() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_err());
        cfg.set("dataset", "/nonexistent/data.tsv").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.folds = 1;
        assert!(cfg.validate().is_err());
    }
}
