//! The emotion-prediction prompt.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::caption::Caption;
use crate::taxonomy::EmotionLabel;

pub const TEMPLATE_VERSION: &str = "emotion-v1";

/// What to print where the prompt names the emotion being asked about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaceholderMode {
    /// The literal token `{placeholder}`.
    #[default]
    Literal,
    /// Nothing: `... a high level of?`
    Blank,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub caption_text: String,
    pub subject_name: String,
    pub label_list: Vec<EmotionLabel>,
    pub template_version: String,
    #[serde(default)]
    pub placeholder: PlaceholderMode,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("caption text is empty")]
    EmptyCaption,
    #[error("caption has no display name for its subject")]
    MissingSubjectName,
    #[error("label list is empty")]
    EmptyLabelList,
}

/// `A`, `A and B`, `A, B, and C`.
fn join_labels(labels: &[EmotionLabel]) -> String {
    match labels {
        [] => String::new(),
        [one] => one.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(EmotionLabel::as_str).collect();
            format!("{}, and {last}", head.join(", "))
        }
    }
}

impl PromptSpec {
    pub fn with_placeholder(mut self, mode: PlaceholderMode) -> Self {
        self.placeholder = mode;
        self.template_version = match mode {
            PlaceholderMode::Literal => TEMPLATE_VERSION.to_string(),
            PlaceholderMode::Blank => format!("{TEMPLATE_VERSION}-blank"),
        };
        self
    }

    pub fn render(&self) -> String {
        let asked = match self.placeholder {
            PlaceholderMode::Literal => " {placeholder}",
            PlaceholderMode::Blank => "",
        };
        format!(
            "{} {} is likely feeling a high level of{asked}? Choose one emotion from the list: {}.",
            self.caption_text,
            self.subject_name,
            join_labels(&self.label_list)
        )
    }

    /// Stable hex digest of everything that determines a completion.
    pub fn hash(&self, model_name: &str, temperature: f64) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            template_version: &'a str,
            caption_text: &'a str,
            label_list: &'a [EmotionLabel],
            model_name: &'a str,
            temperature: f64,
        }
        let key = Key {
            template_version: &self.template_version,
            caption_text: &self.caption_text,
            label_list: &self.label_list,
            model_name,
            temperature,
        };
        hash_text(&serde_json::to_string(&key).expect("prompt key serializes"))
    }
}

pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn build_prompt(caption: &Caption, labels: &[EmotionLabel]) -> Result<PromptSpec, PromptError> {
    if caption.text.trim().is_empty() {
        return Err(PromptError::EmptyCaption);
    }
    let subject_name = caption
        .subject_name()
        .filter(|n| !n.trim().is_empty())
        .ok_or(PromptError::MissingSubjectName)?;
    if labels.is_empty() {
        return Err(PromptError::EmptyLabelList);
    }
    Ok(PromptSpec {
        caption_text: caption.text.clone(),
        subject_name: subject_name.to_string(),
        label_list: labels.to_vec(),
        template_version: TEMPLATE_VERSION.to_string(),
        placeholder: PlaceholderMode::Literal,
    })
}
