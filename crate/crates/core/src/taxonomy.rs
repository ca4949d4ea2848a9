//! Emotion labels, the categorized physical-signal vocabulary, and label
//! normalization for free-form model completions.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{hash_text, BackendError, CompletionBackend, CompletionRequest};
use crate::jsonl;

const DEFAULT_LEXICON: &str = include_str!("../lexicon/default.json");

/// Canonical emotion label name, e.g. `Pain/Suffering (emotional)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionLabel(String);

impl EmotionLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EmotionLabel {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// The six body-part groupings of the signal vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Eyes,
    Mouth,
    Facial,
    Body,
    Hands,
    Feet,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Eyes,
        Category::Mouth,
        Category::Facial,
        Category::Body,
        Category::Hands,
        Category::Feet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Eyes => "Eyes",
            Category::Mouth => "Mouth",
            Category::Facial => "Facial",
            Category::Body => "Body",
            Category::Hands => "Hands",
            Category::Feet => "Feet",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| LexiconError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("unknown signal category `{0}`")]
    UnknownCategory(String),
    #[error("category `{0}` listed more than once")]
    DuplicateCategory(String),
    #[error("duplicate signal `{signal}` in category {category}")]
    DuplicateSignal { category: Category, signal: String },
    #[error("empty signal phrase in category {0}")]
    EmptySignal(Category),
    #[error("empty canonical label name")]
    EmptyLabel,
    #[error("label or alias `{name}` collides with label `{existing}`")]
    LabelCollision { name: String, existing: String },
    #[error("cannot write lexicon: {0}")]
    Write(#[from] jsonl::JsonlError),
}

/// One canonical label and the spellings that map onto it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub canonical: EmotionLabel,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalCategory {
    pub name: Category,
    /// Phrases exactly as printed, first word capitalized.
    pub signals: Vec<String>,
}

/// On-disk lexicon document.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconDocument {
    version: String,
    labels: Vec<LabelEntry>,
    categories: Vec<CategoryDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryDocument {
    name: String,
    signals: Vec<String>,
}

/// Validated, immutable label set and signal vocabulary.
#[derive(Clone, Debug)]
pub struct SignalLexicon {
    version: String,
    labels: Vec<LabelEntry>,
    categories: Vec<SignalCategory>,
    label_index: HashMap<String, usize>,
    signal_index: HashMap<(Category, String), usize>,
}

impl PartialEq for SignalLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.labels == other.labels
            && self.categories == other.categories
    }
}

/// Lowercases and collapses internal whitespace.
pub(crate) fn fold(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Match key for labels: trims everything that is not alphanumeric from both
/// ends, then folds case and whitespace.
fn label_key(s: &str) -> String {
    fold(s.trim_matches(|c: char| !c.is_alphanumeric()))
}

impl SignalLexicon {
    /// The built-in lexicon: 13 negative emotion labels and 153 signals.
    pub fn default_lexicon() -> Self {
        Self::from_json_str(DEFAULT_LEXICON).expect("built-in lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, LexiconError> {
        let doc: LexiconDocument = serde_json::from_str(text)?;
        let mut categories = Vec::with_capacity(doc.categories.len());
        for c in doc.categories {
            let name: Category = c.name.parse()?;
            categories.push(SignalCategory {
                name,
                signals: c.signals,
            });
        }
        Self::new(doc.version, doc.labels, categories)
    }

    pub fn new(
        version: impl Into<String>,
        labels: Vec<LabelEntry>,
        categories: Vec<SignalCategory>,
    ) -> Result<Self, LexiconError> {
        let mut label_index: HashMap<String, usize> = HashMap::new();
        for (i, entry) in labels.iter().enumerate() {
            if label_key(entry.canonical.as_str()).is_empty() {
                return Err(LexiconError::EmptyLabel);
            }
            let names = std::iter::once(entry.canonical.as_str())
                .chain(entry.aliases.iter().map(String::as_str));
            for name in names {
                let key = label_key(name);
                if let Some(&j) = label_index.get(&key) {
                    // an alias repeating its own canonical spelling is harmless
                    if j != i {
                        return Err(LexiconError::LabelCollision {
                            name: name.to_string(),
                            existing: labels[j].canonical.to_string(),
                        });
                    }
                }
                label_index.insert(key, i);
            }
        }

        let mut seen_categories = HashSet::new();
        let mut signal_index = HashMap::new();
        for cat in &categories {
            if !seen_categories.insert(cat.name) {
                return Err(LexiconError::DuplicateCategory(cat.name.to_string()));
            }
            for (i, signal) in cat.signals.iter().enumerate() {
                let key = fold(signal);
                if key.is_empty() {
                    return Err(LexiconError::EmptySignal(cat.name));
                }
                if signal_index.insert((cat.name, key), i).is_some() {
                    return Err(LexiconError::DuplicateSignal {
                        category: cat.name,
                        signal: signal.clone(),
                    });
                }
            }
        }

        Ok(Self {
            version: version.into(),
            labels,
            categories,
            label_index,
            signal_index,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn label_entries(&self) -> &[LabelEntry] {
        &self.labels
    }

    /// Canonical labels in lexicon order.
    pub fn labels(&self) -> Vec<EmotionLabel> {
        self.labels.iter().map(|e| e.canonical.clone()).collect()
    }

    pub fn is_canonical(&self, label: &EmotionLabel) -> bool {
        self.labels.iter().any(|e| &e.canonical == label)
    }

    pub fn categories(&self) -> &[SignalCategory] {
        &self.categories
    }

    pub fn category(&self, name: Category) -> Option<&SignalCategory> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn signal_count(&self) -> usize {
        self.categories.iter().map(|c| c.signals.len()).sum()
    }

    /// Looks up a signal phrase within a category, ignoring case and spacing.
    /// Returns the phrase as stored in the lexicon.
    pub fn find_signal(&self, category: Category, phrase: &str) -> Option<&str> {
        let idx = *self.signal_index.get(&(category, fold(phrase)))?;
        self.category(category).map(|c| c.signals[idx].as_str())
    }

    /// Every category whose vocabulary contains `phrase`.
    pub fn categories_listing(&self, phrase: &str) -> Vec<Category> {
        let key = fold(phrase);
        Category::ALL
            .into_iter()
            .filter(|c| self.signal_index.contains_key(&(*c, key.clone())))
            .collect()
    }

    /// Maps raw completion text onto a canonical label, or out-of-list.
    pub fn normalize(&self, raw: &str) -> NormalizedLabel {
        let key = label_key(raw);
        match self.label_index.get(&key) {
            Some(&i) if !key.is_empty() => NormalizedLabel::Canonical(self.labels[i].canonical.clone()),
            _ => NormalizedLabel::OutOfList(capitalize(&key)),
        }
    }

    pub fn to_json_string(&self) -> String {
        let doc = LexiconDocument {
            version: self.version.clone(),
            labels: self.labels.clone(),
            categories: self
                .categories
                .iter()
                .map(|c| CategoryDocument {
                    name: c.name.to_string(),
                    signals: c.signals.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("lexicon serializes");
        text.push('\n');
        text
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_json_string()).expect("lexicon serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), LexiconError> {
        jsonl::write_bytes_atomic(path, self.to_json_string().as_bytes())?;
        Ok(())
    }
}

/// Uppercases the first character when that maps to a single character, so
/// the result folds back to the same key.
fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    let Some(first) = chars.next() else {
        return String::new();
    };
    let mut upper = first.to_uppercase();
    match (upper.next(), upper.next()) {
        (Some(u), None) => std::iter::once(u).chain(chars).collect(),
        _ => s.to_string(),
    }
}

/// Result of normalizing a completion.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizedLabel {
    Canonical(EmotionLabel),
    OutOfList(String),
}

impl NormalizedLabel {
    pub fn canonical(&self) -> Option<&EmotionLabel> {
        match self {
            NormalizedLabel::Canonical(l) => Some(l),
            NormalizedLabel::OutOfList(_) => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            NormalizedLabel::Canonical(l) => l.as_str(),
            NormalizedLabel::OutOfList(s) => s,
        }
    }
}

impl fmt::Display for NormalizedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn normalize_label(raw: &str, lexicon: &SignalLexicon) -> NormalizedLabel {
    lexicon.normalize(raw)
}

/// The two prompt forms used to brainstorm physical signals for a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateTemplate {
    /// "List physical cues/physical expressions ..."
    Cues,
    /// "Give a list of facial expressions/physical descriptions ..."
    Descriptions,
}

impl CandidateTemplate {
    pub fn render(self, emotion: &EmotionLabel) -> String {
        let name = emotion.as_str().to_lowercase();
        match self {
            CandidateTemplate::Cues => format!(
                "List physical cues/physical expressions that would indicate the emotion of '{name}' in an image."
            ),
            CandidateTemplate::Descriptions => format!(
                "Give a list of facial expressions/physical descriptions/physical movements that might indicate that a person is feeling '{name}'."
            ),
        }
    }
}

impl FromStr for CandidateTemplate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "cues" | "template-1" => Ok(Self::Cues),
            "2" | "descriptions" | "template-2" => Ok(Self::Descriptions),
            other => Err(format!("unknown candidate template `{other}`")),
        }
    }
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '•', '–']).trim_start();
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    line
}

/// Splits a list-style completion into distinct phrases, one per item.
pub fn parse_candidate_list(completion: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in completion.lines() {
        let item = strip_list_marker(line).trim_end_matches('.').trim();
        if item.is_empty() {
            continue;
        }
        if seen.insert(fold(item)) {
            out.push(item.to_string());
        }
    }
    out
}

/// Asks a backend to brainstorm physical signals for one emotion. The result
/// is a candidate list for human curation and is never merged into a lexicon.
pub fn generate_signal_candidates(
    emotion: &EmotionLabel,
    template: CandidateTemplate,
    backend: &dyn CompletionBackend,
) -> Result<Vec<String>, BackendError> {
    let prompt = template.render(emotion);
    let request = CompletionRequest {
        prompt_hash: hash_text(&prompt),
        prompt,
        repeat_index: 0,
    };
    let completion = backend.complete(&request)?;
    Ok(parse_candidate_list(&completion))
}
