//! Deterministic stand-in backend driven by a transcript table.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, CompletionRequest};

/// What to answer for prompts missing from the transcript table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockFallback {
    /// Fail the request.
    #[default]
    Error,
    Constant { text: String },
    /// Pick uniformly from `choices`, seeded by (seed, prompt hash, repeat).
    Seeded { seed: u64, choices: Vec<String> },
}

/// prompt hash -> responses, indexed by repeat (cycled when shorter).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTranscript {
    #[serde(default)]
    pub entries: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub fallback: MockFallback,
}

impl MockTranscript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("bad mock transcript {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Default)]
pub struct MockBackend {
    transcript: MockTranscript,
}

impl MockBackend {
    pub fn new(transcript: MockTranscript) -> Self {
        Self { transcript }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        Self::new(MockTranscript {
            entries: BTreeMap::new(),
            fallback: MockFallback::Constant { text: text.into() },
        })
    }

    pub fn seeded(seed: u64, choices: Vec<String>) -> Self {
        Self::new(MockTranscript {
            entries: BTreeMap::new(),
            fallback: MockFallback::Seeded { seed, choices },
        })
    }

    pub fn transcript(&self) -> &MockTranscript {
        &self.transcript
    }
}

fn seeded_index(seed: u64, prompt_hash: &str, repeat: u32, len: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt_hash.as_bytes());
    h.update(repeat.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.random_range(0..len)
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if let Some(responses) = self.transcript.entries.get(&request.prompt_hash) {
            if responses.is_empty() {
                return Ok(String::new());
            }
            return Ok(responses[request.repeat_index as usize % responses.len()].clone());
        }
        match &self.transcript.fallback {
            MockFallback::Error => Err(BackendError::Protocol(format!(
                "no mock transcript for prompt {}",
                request.prompt_hash
            ))),
            MockFallback::Constant { text } => Ok(text.clone()),
            MockFallback::Seeded { choices, .. } if choices.is_empty() => {
                Err(BackendError::Config("seeded mock has no choices".into()))
            }
            MockFallback::Seeded { seed, choices } => {
                let i = seeded_index(*seed, &request.prompt_hash, request.repeat_index, choices.len());
                Ok(choices[i].clone())
            }
        }
    }
}
