//! Deterministic in-process backend.
//!
//! A [`MockScript`] is a pure function of the prompt text. The helpers here
//! read the text back out of the prompt (the `Source:`, `Translation:`,
//! `Bad translation:` or `Sentence:` line) so that scripts can act on "the
//! translation being refined".

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{sanitize_response, BackendFailure, CacheKey, ChatBackend, ChatExchange, ChatRequest};
use crate::prompts::RenderedPrompt;
use crate::rng::SeededRng;

#[derive(Clone)]
pub struct MockScript(Arc<dyn Fn(&str) -> String + Send + Sync>);

const TEXT_LABELS: [&str; 3] = ["Bad translation: ", "Translation: ", "Sentence: "];

/// The translation embedded in a prompt, or the source line for a plain
/// translation request.
pub fn embedded_text(prompt: &str) -> &str {
    for label in TEXT_LABELS {
        if let Some(line) = prompt.lines().find(|l| l.starts_with(label)) {
            return &line[label.len()..];
        }
    }
    prompt
        .lines()
        .find_map(|l| l.strip_prefix("Source: "))
        .unwrap_or("")
}

impl MockScript {
    pub fn new(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        MockScript(Arc::new(f))
    }

    pub fn apply(&self, prompt: &str) -> String {
        (self.0)(prompt)
    }

    /// Echoes the embedded translation (the source, for translate prompts).
    pub fn identity() -> Self {
        Self::new(|p| embedded_text(p).to_string())
    }

    /// Answers from a prompt→response table; unknown prompts get an empty
    /// completion.
    pub fn fixed(table: BTreeMap<String, String>) -> Self {
        Self::new(move |p| table.get(p).cloned().unwrap_or_default())
    }

    /// Shuffles the words of the embedded text with a generator seeded by
    /// `seed` and the prompt digest.
    pub fn word_shuffle(seed: u64) -> Self {
        Self::new(move |p| {
            let digest = Sha256::digest(p.as_bytes());
            let mut bytes = [0u8; 8];
            bytes.copy_from_slice(&digest[..8]);
            let mut rng = SeededRng::new(seed ^ u64::from_le_bytes(bytes));
            let mut words: Vec<&str> = embedded_text(p).split(' ').collect();
            rng.shuffle(&mut words);
            words.join(" ")
        })
    }

    /// Appends `marker` to the embedded text on every refinement or
    /// paraphrase call, so a candidate after `t` rounds carries `t` markers.
    /// Translate prompts are answered with the source unchanged.
    pub fn drift(marker: &str) -> Self {
        let marker = marker.to_string();
        Self::new(move |p| {
            let text = embedded_text(p);
            if p.starts_with("Source: ") && p.lines().count() == 2 {
                text.to_string()
            } else {
                format!("{text} {marker}")
            }
        })
    }

    pub fn by_name(name: &str, seed: u64) -> Option<Self> {
        match name {
            "identity" => Some(Self::identity()),
            "shuffle" => Some(Self::word_shuffle(seed)),
            "drift" => Some(Self::drift("+")),
            _ => None,
        }
    }
}

/// Backend answering through a [`MockScript`] and logging every prompt.
pub struct MockBackend {
    script: MockScript,
    log: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("mock log poisoned").len()
    }

    /// Prompt texts in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let text = match request.messages.as_slice() {
            [only] => only.content.as_str(),
            _ => {
                return Err(BackendFailure::Protocol(format!(
                    "expected exactly one message, got {}",
                    request.messages.len()
                )))
            }
        };
        self.log.lock().expect("mock log poisoned").push(text.to_string());
        Ok(self.script.apply(text))
    }
}

/// Runs `script` directly on a prompt, outside any gateway.
pub fn mock_complete(prompt: &RenderedPrompt, script: &MockScript) -> ChatExchange {
    let config = super::BackendConfig {
        endpoint: "mock://".into(),
        model: "mock".into(),
        ..super::BackendConfig::default()
    };
    let raw = script.apply(&prompt.text);
    ChatExchange {
        kind: prompt.kind,
        prompt: prompt.text.clone(),
        cache_key: CacheKey::new(&config, &prompt.text),
        model: config.model,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        sanitized_response: sanitize_response(&raw),
        raw_response: raw,
        latency_ms: 0,
        from_cache: false,
        timestamp_ms: 0,
    }
}
