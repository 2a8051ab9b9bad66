//! Cloze templates: wrap a paragraph into a prompted string with one mask slot.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};

pub const TEXT_PLACEHOLDER: &str = "{text}";
pub const MASK_PLACEHOLDER: &str = "{mask}";

/// The binary detection template.
pub const DEFAULT_BINARY_PATTERN: &str = "{text} Is it patronizing or condescending? {mask}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub pattern: String,
}

impl PromptTemplate {
    /// Builds a template, rejecting patterns that fail [`validate_template`].
    pub fn new(name: impl Into<String>, pattern: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            name: name.into(),
            pattern: pattern.into(),
        };
        let report = validate_template(&t);
        if report.is_valid() {
            Ok(t)
        } else {
            Err(Error::Template {
                name: t.name,
                violations: report.violations.iter().map(ToString::to_string).collect(),
            })
        }
    }

    pub fn binary_default() -> Self {
        PromptTemplate {
            name: "binary".into(),
            pattern: DEFAULT_BINARY_PATTERN.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateViolation {
    EmptyPattern,
    MissingText,
    MultipleText(usize),
    MissingMask,
    MultipleMask(usize),
}

impl std::fmt::Display for TemplateViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TemplateViolation::EmptyPattern => write!(f, "pattern is empty"),
            TemplateViolation::MissingText => write!(f, "missing {TEXT_PLACEHOLDER} placeholder"),
            TemplateViolation::MultipleText(n) => write!(f, "{n} {TEXT_PLACEHOLDER} placeholders"),
            TemplateViolation::MissingMask => write!(f, "missing mask placeholder"),
            TemplateViolation::MultipleMask(n) => write!(f, "multiple masks ({n})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<TemplateViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_template(template: &PromptTemplate) -> ValidationReport {
    let mut violations = Vec::new();
    if template.pattern.is_empty() {
        violations.push(TemplateViolation::EmptyPattern);
    }
    match template.pattern.matches(TEXT_PLACEHOLDER).count() {
        0 => violations.push(TemplateViolation::MissingText),
        1 => {}
        n => violations.push(TemplateViolation::MultipleText(n)),
    }
    match template.pattern.matches(MASK_PLACEHOLDER).count() {
        0 => violations.push(TemplateViolation::MissingMask),
        1 => {}
        n => violations.push(TemplateViolation::MultipleMask(n)),
    }
    ValidationReport { violations }
}

/// A prompted paragraph. Spans are `[start, end)` offsets in characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedText {
    pub text: String,
    pub mask_char_span: (usize, usize),
    pub text_char_span: (usize, usize),
    pub source_id: String,
    pub template_name: String,
}

impl WrappedText {
    fn char_slice(&self, span: (usize, usize)) -> String {
        self.text.chars().skip(span.0).take(span.1 - span.0).collect()
    }

    pub fn mask_str(&self) -> String {
        self.char_slice(self.mask_char_span)
    }

    /// The paragraph portion, recoverable exactly.
    pub fn paragraph(&self) -> String {
        self.char_slice(self.text_char_span)
    }

    /// Text before the paragraph, the paragraph itself, and text after it.
    pub fn segments(&self) -> (String, String, String) {
        let n = self.text.chars().count();
        (
            self.char_slice((0, self.text_char_span.0)),
            self.paragraph(),
            self.char_slice((self.text_char_span.1, n)),
        )
    }
}

pub fn wrap(text: &str, template: &PromptTemplate, mask_token: &str) -> Result<WrappedText> {
    wrap_with_id(text, template, mask_token, "")
}

pub fn wrap_record(
    record: &ParagraphRecord,
    template: &PromptTemplate,
    mask_token: &str,
) -> Result<WrappedText> {
    wrap_with_id(&record.text, template, mask_token, &record.id)
}

fn wrap_with_id(
    text: &str,
    template: &PromptTemplate,
    mask_token: &str,
    source_id: &str,
) -> Result<WrappedText> {
    let report = validate_template(template);
    if !report.is_valid() {
        return Err(Error::Template {
            name: template.name.clone(),
            violations: report.violations.iter().map(ToString::to_string).collect(),
        });
    }
    if text.trim().is_empty() {
        return Err(Error::Data("cannot wrap empty text".into()));
    }
    if mask_token.is_empty() {
        return Err(Error::Data("empty mask token".into()));
    }

    let p = &template.pattern;
    let ti = p.find(TEXT_PLACEHOLDER).expect("validated");
    let mi = p.find(MASK_PLACEHOLDER).expect("validated");
    let mut out = String::with_capacity(p.len() + text.len() + mask_token.len());
    let mut mask_span = (0, 0);
    let mut text_span = (0, 0);
    let chars = |s: &str| s.chars().count();

    let (first_at, first_len, second_at, second_len, text_first) = if ti < mi {
        (ti, TEXT_PLACEHOLDER.len(), mi, MASK_PLACEHOLDER.len(), true)
    } else {
        (mi, MASK_PLACEHOLDER.len(), ti, TEXT_PLACEHOLDER.len(), false)
    };
    let mut put = |out: &mut String, is_text: bool| {
        let start = chars(out);
        if is_text {
            out.push_str(text);
            text_span = (start, start + chars(text));
        } else {
            out.push_str(mask_token);
            mask_span = (start, start + chars(mask_token));
        }
    };
    out.push_str(&p[..first_at]);
    put(&mut out, text_first);
    out.push_str(&p[first_at + first_len..second_at]);
    put(&mut out, !text_first);
    out.push_str(&p[second_at + second_len..]);

    if out.matches(mask_token).count() != 1 {
        return Err(Error::Data(format!(
            "mask token `{mask_token}` occurs more than once after wrapping"
        )));
    }
    Ok(WrappedText {
        text: out,
        mask_char_span: mask_span,
        text_char_span: text_span,
        source_id: source_id.to_string(),
        template_name: template.name.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Multilabel,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(TaskKind::Binary),
            "multilabel" | "multi-label" | "multi_label" => Ok(TaskKind::Multilabel),
            other => Err(Error::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Binary => "binary",
            TaskKind::Multilabel => "multilabel",
        })
    }
}

/// Templates for one task: a single binary template, or one per category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskPromptSet {
    Binary(PromptTemplate),
    /// Entries are in category-list order.
    Multilabel(Vec<(String, PromptTemplate)>),
}

impl TaskPromptSet {
    pub fn task_kind(&self) -> TaskKind {
        match self {
            TaskPromptSet::Binary(_) => TaskKind::Binary,
            TaskPromptSet::Multilabel(_) => TaskKind::Multilabel,
        }
    }

    /// Builds a multilabel set whose keys must equal `categories` exactly.
    pub fn multilabel(
        categories: &[String],
        mut templates: BTreeMap<String, PromptTemplate>,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(categories.len());
        for c in categories {
            let t = templates
                .remove(c)
                .ok_or_else(|| Error::Config(format!("no template for category `{c}`")))?;
            out.push((c.clone(), t));
        }
        if let Some(extra) = templates.keys().next() {
            return Err(Error::Config(format!("template for unknown category `{extra}`")));
        }
        Ok(TaskPromptSet::Multilabel(out))
    }

    /// `"{text} Does it show <description>? {mask}"` per category.
    pub fn default_multilabel(categories: &[String], descriptions: &BTreeMap<String, String>) -> Self {
        TaskPromptSet::Multilabel(
            categories
                .iter()
                .map(|c| {
                    let desc = descriptions
                        .get(c)
                        .cloned()
                        .unwrap_or_else(|| c.replace('_', " "));
                    let t = PromptTemplate {
                        name: c.clone(),
                        pattern: format!("{TEXT_PLACEHOLDER} Does it show {desc}? {MASK_PLACEHOLDER}"),
                    };
                    (c.clone(), t)
                })
                .collect(),
        )
    }

    pub fn templates(&self) -> Vec<&PromptTemplate> {
        match self {
            TaskPromptSet::Binary(t) => vec![t],
            TaskPromptSet::Multilabel(m) => m.iter().map(|(_, t)| t).collect(),
        }
    }

    /// Loads `name<TAB>task_kind<TAB>pattern` lines; `#` starts a comment.
    /// For multilabel entries the name is the category identifier.
    pub fn load(path: &Path, task: TaskKind, categories: &[String]) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut binary = None;
        let mut multi = BTreeMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(name), Some(kind), Some(pattern)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `name<TAB>task_kind<TAB>pattern`".into(),
                });
            };
            let template = PromptTemplate::new(name.trim(), pattern)?;
            match kind.parse::<TaskKind>()? {
                TaskKind::Binary => binary = Some(template),
                TaskKind::Multilabel => {
                    multi.insert(name.trim().to_string(), template);
                }
            }
        }
        match task {
            TaskKind::Binary => binary.map(TaskPromptSet::Binary).ok_or_else(|| {
                Error::Config(format!("{}: no binary template", path.display()))
            }),
            TaskKind::Multilabel => TaskPromptSet::multilabel(categories, multi),
        }
    }
}

/// One wrapped text per category, in category order.
pub fn wrap_multilabel(
    record: &ParagraphRecord,
    prompts: &TaskPromptSet,
    mask_token: &str,
) -> Result<Vec<(String, WrappedText)>> {
    match prompts {
        TaskPromptSet::Binary(_) => Err(Error::Config(
            "wrap_multilabel requires a multilabel prompt set".into(),
        )),
        TaskPromptSet::Multilabel(m) => m
            .iter()
            .map(|(c, t)| Ok((c.clone(), wrap_record(record, t, mask_token)?)))
            .collect(),
    }
}
