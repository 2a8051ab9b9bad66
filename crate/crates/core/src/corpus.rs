//! Labeled paragraph datasets, delimiter-separated loading, and hold-one-out folds.
//!
//! A dataset file is UTF-8 text with a header row. The [`Schema`] names which
//! header columns carry the id, the paragraph text, the binary label and the
//! (optional) comma-separated category list. Rows that break a record
//! invariant are rejected with a line-numbered [`RowDiagnostic`]; problems
//! with the file as a whole (missing file, missing columns, duplicate ids)
//! are hard errors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    /// Accepts `1/0`, `positive/negative`, `pos/neg`, `yes/no`, `true/false`.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "1" | "positive" | "pos" | "yes" | "true" => Some(BinaryLabel::Positive),
            "0" | "negative" | "neg" | "no" | "false" => Some(BinaryLabel::Negative),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }

    /// Index in the binary label order `[negative, positive]`.
    pub fn index(self) -> usize {
        match self {
            BinaryLabel::Negative => 0,
            BinaryLabel::Positive => 1,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index == 1 {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryLabel::Negative => "0",
            BinaryLabel::Positive => "1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub id: String,
    pub text: String,
    pub binary_label: Option<BinaryLabel>,
    /// Subset of the dataset's category list, kept in category-list order.
    pub categories: Vec<String>,
}

impl ParagraphRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ParagraphRecord {
            id: id.into(),
            text: text.into(),
            binary_label: None,
            categories: Vec::new(),
        }
    }

    pub fn with_label(mut self, label: BinaryLabel) -> Self {
        self.binary_label = Some(label);
        self
    }

    pub fn with_categories<I, S>(mut self, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.categories = categories.into_iter().map(Into::into).collect();
        self
    }

    /// Checks the record invariants against a category list.
    pub fn validate(&self, category_list: &[String]) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        for cat in &self.categories {
            if !category_list.iter().any(|c| c == cat) {
                return Err(format!("unknown category identifier `{cat}`"));
            }
        }
        if !self.categories.is_empty() && self.binary_label != Some(BinaryLabel::Positive) {
            return Err("categories present on a record that is not labeled positive".into());
        }
        Ok(())
    }
}

/// Column mapping for a delimiter-separated dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub delimiter: char,
    pub id_column: String,
    pub text_column: String,
    pub label_column: Option<String>,
    pub categories_column: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: '\t',
            id_column: "id".into(),
            text_column: "text".into(),
            label_column: Some("label".into()),
            categories_column: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<ParagraphRecord>,
    pub category_list: Vec<String>,
    pub schema: Schema,
}

impl Dataset {
    /// Builds a dataset from in-memory records, enforcing every invariant.
    pub fn new(
        records: Vec<ParagraphRecord>,
        category_list: Vec<String>,
        schema: Schema,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            r.validate(&category_list)
                .map_err(|m| Error::Data(format!("record `{}`: {m}", r.id)))?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate record id `{}`", r.id)));
            }
        }
        let mut ds = Dataset {
            records,
            category_list,
            schema,
        };
        ds.normalize_category_order();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            records: self.records.iter().collect(),
            category_list: &self.category_list,
        }
    }

    fn normalize_category_order(&mut self) {
        let order: BTreeMap<&str, usize> = self
            .category_list
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        for r in &mut self.records {
            r.categories.sort_by_key(|c| order.get(c.as_str()).copied());
            r.categories.dedup();
        }
    }

    /// Writes the dataset back out in its own schema.
    pub fn write(&self, path: &Path) -> Result<()> {
        let s = &self.schema;
        let d = s.delimiter.to_string();
        let mut header = vec![s.id_column.clone(), s.text_column.clone()];
        header.extend(s.label_column.clone());
        header.extend(s.categories_column.clone());
        let mut out = header.join(&d);
        out.push('\n');
        for r in &self.records {
            let mut row = vec![r.id.clone(), r.text.clone()];
            if s.label_column.is_some() {
                row.push(r.binary_label.map(|l| l.to_string()).unwrap_or_default());
            }
            if s.categories_column.is_some() {
                row.push(r.categories.join(","));
            }
            out.push_str(&row.join(&d));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Borrowed subset of a dataset (a fold's train or validation side).
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub records: Vec<&'a ParagraphRecord>,
    pub category_list: &'a [String],
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a ParagraphRecord> + '_ {
        self.records.iter().copied()
    }
}

/// A row that was skipped while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub rejected: Vec<RowDiagnostic>,
}

pub fn load_dataset(path: &Path, schema: &Schema, category_list: &[String]) -> Result<LoadedDataset> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&raw, path, schema, category_list)
}

pub(crate) fn parse_dataset(
    raw: &str,
    path: &Path,
    schema: &Schema,
    category_list: &[String],
) -> Result<LoadedDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut lines = raw.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "missing header row".into()))?;
    let columns: Vec<&str> = header.split(schema.delimiter).map(str::trim).collect();
    let column = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| parse_err(1, format!("header lacks column `{name}`")))
    };
    let id_col = column(&schema.id_column)?;
    let text_col = column(&schema.text_column)?;
    let label_col = schema.label_column.as_deref().map(column).transpose()?;
    let cat_col = schema.categories_column.as_deref().map(column).transpose()?;

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(schema.delimiter).collect();
        if fields.len() != columns.len() {
            rejected.push(RowDiagnostic {
                line,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
            continue;
        }
        let id = fields[id_col].trim().to_string();
        let mut record = ParagraphRecord::new(id.clone(), fields[text_col].to_string());
        if let Some(c) = label_col {
            let raw_label = fields[c].trim();
            if !raw_label.is_empty() {
                match BinaryLabel::parse(raw_label) {
                    Some(l) => record.binary_label = Some(l),
                    None => {
                        rejected.push(RowDiagnostic {
                            line,
                            message: format!("unparseable binary label `{raw_label}`"),
                        });
                        continue;
                    }
                }
            }
        }
        if let Some(c) = cat_col {
            record.categories = fields[c]
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        if let Err(message) = record.validate(category_list) {
            rejected.push(RowDiagnostic { line, message });
            continue;
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(parse_err(line, format!("duplicate id `{id}` (first seen on line {first})")));
        }
        records.push(record);
    }
    for d in &rejected {
        log::warn!("{}: rejected {d}", path.display());
    }
    let dataset = Dataset::new(records, category_list.to_vec(), schema.clone())?;
    Ok(LoadedDataset { dataset, rejected })
}

/// Partition of record ids into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `id<TAB>fold_index`, one line per record, sorted by id.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for (id, fold) in &self.assignment {
            out.push_str(id);
            out.push('\t');
            out.push_str(&fold.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "# k={} seed={}", self.k, self.seed).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_manifest().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut k = None;
        let mut seed = 0;
        let mut assignment = BTreeMap::new();
        for (i, line) in raw.lines().enumerate() {
            let line_no = i + 1;
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("k", v)) => k = v.parse().ok(),
                        Some(("seed", v)) => seed = v.parse().unwrap_or(0),
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (id, fold) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(line_no, "expected `id<TAB>fold`".into()))?;
            let fold: usize = fold
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad fold index `{fold}`")))?;
            if assignment.insert(id.to_string(), fold).is_some() {
                return Err(parse_err(line_no, format!("duplicate id `{id}`")));
            }
        }
        let k = k.unwrap_or_else(|| assignment.values().max().map_or(0, |m| m + 1));
        if assignment.values().any(|&f| f >= k) {
            return Err(Error::Data(format!("{}: fold index >= k={k}", path.display())));
        }
        Ok(FoldAssignment { k, seed, assignment })
    }

    /// Checks that this assignment covers exactly the dataset's ids.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        if self.assignment.len() != dataset.len() {
            return Err(Error::Data(format!(
                "fold manifest has {} ids, dataset has {}",
                self.assignment.len(),
                dataset.len()
            )));
        }
        for id in dataset.ids() {
            if !self.assignment.contains_key(id) {
                return Err(Error::Data(format!("id `{id}` missing from fold manifest")));
            }
        }
        Ok(())
    }
}

/// Uniform random partition into `k` folds whose sizes differ by at most one.
///
/// Ids are sorted before shuffling, so the result depends only on the id set,
/// `k` and `seed`, not on record order.
pub fn split_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    split_folds_with(dataset, k, seed, false)
}

/// Like [`split_folds`]; with `stratified`, ids are dealt round-robin per
/// binary label group so each fold gets a near-equal share of each class.
pub fn split_folds_with(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    stratified: bool,
) -> Result<FoldAssignment> {
    let n = dataset.len();
    if k < 2 || k > n {
        return Err(Error::out_of_range("fold count k", k, format!("2..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<Option<BinaryLabel>, Vec<&str>> = BTreeMap::new();
    for r in &dataset.records {
        let key = if stratified { r.binary_label } else { None };
        groups.entry(key).or_default().push(r.id.as_str());
    }
    let mut assignment = BTreeMap::new();
    let mut slot = 0usize;
    for ids in groups.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            assignment.insert(id.to_string(), slot % k);
            slot += 1;
        }
    }
    Ok(FoldAssignment { k, seed, assignment })
}

/// Hold-one-out view: fold `i` is validation, the rest is training.
pub fn fold_view<'a>(
    dataset: &'a Dataset,
    folds: &FoldAssignment,
    i: usize,
) -> Result<(DatasetView<'a>, DatasetView<'a>)> {
    if i >= folds.k {
        return Err(Error::out_of_range("fold index", i, format!("0..{}", folds.k)));
    }
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for r in &dataset.records {
        match folds.fold_of(&r.id) {
            Some(f) if f == i => validation.push(r),
            Some(_) => train.push(r),
            None => {
                return Err(Error::Data(format!("record `{}` has no fold assignment", r.id)));
            }
        }
    }
    let view = |records| DatasetView {
        records,
        category_list: &dataset.category_list,
    };
    Ok((view(train), view(validation)))
}
