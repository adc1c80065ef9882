//! Oracle backends and the wrappers layered around them.
//!
//! A backend turns a [`PromptPair`] into a reply string. `MockBackend` and
//! `ReplayBackend` are pure functions of the prompt; `RemoteBackend` talks
//! to a chat-completion endpoint. `Retrying` adds rate limiting and
//! transport-only retries, and `Cached` memoizes replies by prompt hash and
//! can dump them as a replay transcript.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::prompts::{classification_antecedent, highlighted_abstract, PromptPair, QueryKind, START_MARKER};
use super::remote::RemoteBackend;
use crate::jsonl::{self, WriteError};
use crate::lexicon::Lexicon;
use crate::model::Validate;
use crate::text::{tokenize, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network-level or server-side failure; worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend refused or cannot answer this prompt; retrying is pointless.
    #[error("rejected: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait OracleBackend: Send + Sync {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

impl<B: OracleBackend + ?Sized> OracleBackend for Box<B> {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: OracleBackend + ?Sized> OracleBackend for &B {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

// ---------------------------------------------------------------------------
// mock

/// A scripted reply. `context` must occur verbatim in the prompt's user
/// content (typically a few words around the `[START]…[END]` highlight).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antecedent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Validate for MockEntry {
    fn validate(&self) -> Result<(), String> {
        if self.context.is_empty() {
            return Err("mock entry has empty context".into());
        }
        Ok(())
    }
}

const DETERMINERS: &[&str] = &["the", "a", "an", "any", "each", "every", "this", "that", "our", "your", "one"];
const TITLES: &[&str] = &["Dr", "Mr", "Mrs", "Ms", "Prof"];
const PATIENT_WORDS: &[&str] = &[
    "patient", "patients", "participant", "participants", "subject", "subjects", "volunteer",
    "volunteers", "woman", "man", "boy", "girl", "mother", "child", "infant", "case",
];

/// Deterministic stand-in for the remote oracle.
///
/// Scripted entries win; otherwise a heuristic answers: the nearest
/// occupational term before the pronoun (with its determiner), else the
/// nearest non-sentence-initial capitalized name, else `"unknown"`.
/// Classification maps occupational antecedents to `occupation`, capitalized
/// ones to `named individual`, patient words to `patient`, the rest to
/// `other`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: Vec<MockEntry>,
    occupations: Lexicon,
}

impl MockBackend {
    pub fn new(occupations: Lexicon) -> Self {
        MockBackend { script: Vec::new(), occupations }
    }

    pub fn with_script(mut self, script: Vec<MockEntry>) -> Self {
        self.script = script;
        self
    }

    pub fn load_script(path: impl AsRef<Path>) -> std::io::Result<Vec<MockEntry>> {
        let out = jsonl::read_records_file::<MockEntry>(path)?;
        if let Some(e) = out.errors.first() {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()));
        }
        Ok(out.records)
    }

    fn heuristic_antecedent(&self, highlighted: &str) -> String {
        let before = highlighted.split(START_MARKER).next().unwrap_or("");
        if let Some(m) = self.occupations.match_terms(before).last() {
            let toks = tokenize(before);
            let det = toks
                .iter()
                .rev()
                .find(|t| t.end <= m.start)
                .filter(|t| DETERMINERS.contains(&t.text.to_lowercase().as_str()));
            return match det {
                Some(d) => format!("{} {}", d.text, m.surface),
                None => m.surface.clone(),
            };
        }
        let toks = tokenize(before);
        for (i, t) in toks.iter().enumerate().rev() {
            let capitalized = t.kind == TokenKind::Word && t.text.chars().next().is_some_and(char::is_uppercase);
            if !capitalized {
                continue;
            }
            // a preceding title such as "Dr." belongs to the name
            if i >= 2 && toks[i - 1].text == "." && TITLES.contains(&toks[i - 2].text.as_str()) {
                return format!("{}. {}", toks[i - 2].text, t.text);
            }
            let sentence_initial = i == 0 || matches!(toks[i - 1].text.as_str(), "." | "?" | "!");
            if !sentence_initial {
                return t.text.clone();
            }
        }
        "unknown".to_string()
    }

    fn heuristic_label(&self, antecedent: &str) -> &'static str {
        if self.occupations.contains_term(antecedent) {
            return "occupation";
        }
        let toks = tokenize(antecedent);
        if toks.iter().any(|t| t.kind == TokenKind::Word && t.text.chars().next().is_some_and(char::is_uppercase)) {
            return "named individual";
        }
        if toks.iter().any(|t| PATIENT_WORDS.contains(&t.text.to_lowercase().as_str())) {
            return "patient";
        }
        "other"
    }
}

impl OracleBackend for MockBackend {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let kind = prompt
            .kind()
            .ok_or_else(|| BackendError::Rejected("mock backend only answers the built-in queries".into()))?;
        let scripted = self.script.iter().find(|e| prompt.user_content.contains(&e.context));
        let reply = match kind {
            QueryKind::Resolution => match scripted.and_then(|e| e.antecedent.clone()) {
                Some(a) => a,
                None => self.heuristic_antecedent(highlighted_abstract(prompt).unwrap_or("")),
            },
            QueryKind::Classification => match scripted.and_then(|e| e.label.clone()) {
                Some(l) => l,
                None => self.heuristic_label(classification_antecedent(prompt).unwrap_or("")).to_string(),
            },
        };
        Ok(reply)
    }

    fn name(&self) -> &str {
        "mock"
    }
}

// ---------------------------------------------------------------------------
// transcripts / replay

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_hash: String,
    pub reply: String,
}

impl Validate for TranscriptEntry {
    fn validate(&self) -> Result<(), String> {
        if self.prompt_hash.is_empty() {
            return Err("empty prompt_hash".into());
        }
        Ok(())
    }
}

pub fn load_transcript(path: impl AsRef<Path>) -> std::io::Result<HashMap<String, String>> {
    let out = jsonl::read_records_file::<TranscriptEntry>(path)?;
    if let Some(e) = out.errors.first() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()));
    }
    Ok(out.records.into_iter().map(|e| (e.prompt_hash, e.reply)).collect())
}

/// Writes entries sorted by hash so transcripts are byte-stable.
pub fn save_transcript(
    entries: &BTreeMap<String, String>,
    path: impl AsRef<Path>,
) -> Result<usize, WriteError> {
    let rows: Vec<TranscriptEntry> = entries
        .iter()
        .map(|(h, r)| TranscriptEntry { prompt_hash: h.clone(), reply: r.clone() })
        .collect();
    jsonl::write_records_file(&rows, path)
}

/// Answers only from a recorded transcript.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    replies: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn new(replies: HashMap<String, String>) -> Self {
        ReplayBackend { replies }
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(ReplayBackend::new(load_transcript(path)?))
    }
}

impl OracleBackend for ReplayBackend {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let h = prompt.hash();
        self.replies
            .get(&h)
            .cloned()
            .ok_or_else(|| BackendError::Rejected(format!("prompt {h} not in transcript")))
    }

    fn name(&self) -> &str {
        "replay"
    }
}

// ---------------------------------------------------------------------------
// cache

/// Memoizes successful replies by prompt hash. Safe for concurrent use.
pub struct Cached<B> {
    inner: B,
    entries: Mutex<BTreeMap<String, String>>,
}

impl<B: OracleBackend> Cached<B> {
    pub fn new(inner: B) -> Self {
        Cached { inner, entries: Mutex::new(BTreeMap::new()) }
    }

    pub fn with_entries(inner: B, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Cached { inner, entries: Mutex::new(entries.into_iter().collect()) }
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries.lock().expect("cache lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<B: OracleBackend> OracleBackend for Cached<B> {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let h = prompt.hash();
        if let Some(r) = self.entries.lock().expect("cache lock").get(&h) {
            return Ok(r.clone());
        }
        let reply = self.inner.complete(prompt)?;
        self.entries.lock().expect("cache lock").insert(h, reply.clone());
        Ok(reply)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

// ---------------------------------------------------------------------------
// rate limiting and retries

/// Client-side limiter spacing requests evenly at `per_minute`.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        let per_minute = per_minute.max(1);
        RateLimiter {
            interval: Duration::from_secs(60) / per_minute,
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks until the caller may send one request.
    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().expect("limiter lock");
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + self.interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Retries transport errors with exponential backoff. Wrong-but-well-formed
/// replies pass straight through.
pub struct Retrying<B> {
    inner: B,
    max_retries: u32,
    base_delay: Duration,
    limiter: Option<RateLimiter>,
}

impl<B: OracleBackend> Retrying<B> {
    pub fn new(inner: B, max_retries: u32) -> Self {
        Retrying { inner, max_retries, base_delay: Duration::from_millis(500), limiter: None }
    }

    pub fn with_base_delay(mut self, d: Duration) -> Self {
        self.base_delay = d;
        self
    }

    pub fn with_rate_limit(mut self, per_minute: u32) -> Self {
        self.limiter = Some(RateLimiter::per_minute(per_minute));
        self
    }
}

impl<B: OracleBackend> OracleBackend for Retrying<B> {
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.inner.complete(prompt) {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt);
                    log::warn!("{}: {e}; retry {} in {:?}", self.inner.name(), attempt + 1, delay);
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Mock,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend kind {other:?} (expected remote, mock or replay)")),
        }
    }
}

/// Environment variable holding the remote API key. Keys are never taken
/// from flags or config files.
pub const API_KEY_ENV: &str = "OCCUPRONOUN_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleBackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
    pub transcript: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
}

impl Default for OracleBackendConfig {
    fn default() -> Self {
        OracleBackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: None,
            max_retries: 3,
            requests_per_minute: 60,
            timeout_secs: 120,
            transcript: None,
            mock_script: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("remote backend requires {0}")]
    MissingRemoteField(&'static str),
    #[error("replay backend requires a transcript file")]
    MissingTranscript,
    #[error("requests_per_minute must be positive")]
    ZeroRate,
    #[error("cannot load {path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl OracleBackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.requests_per_minute == 0 {
            return Err(ConfigError::ZeroRate);
        }
        match self.kind {
            BackendKind::Remote => {
                if self.endpoint.is_none() {
                    return Err(ConfigError::MissingRemoteField("endpoint"));
                }
                if self.model_name.is_none() {
                    return Err(ConfigError::MissingRemoteField("model_name"));
                }
            }
            BackendKind::Replay if self.transcript.is_none() => return Err(ConfigError::MissingTranscript),
            _ => {}
        }
        Ok(())
    }

    /// Builds the configured backend. Remote backends come wrapped in rate
    /// limiting and retries.
    pub fn build(&self, occupations: &Lexicon) -> Result<Box<dyn OracleBackend>, ConfigError> {
        self.validate()?;
        let load_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ConfigError::Load { path, source }
        };
        Ok(match self.kind {
            BackendKind::Mock => {
                let mut mock = MockBackend::new(occupations.clone());
                if let Some(p) = &self.mock_script {
                    mock = mock.with_script(MockBackend::load_script(p).map_err(load_err(p))?);
                }
                Box::new(mock)
            }
            BackendKind::Replay => {
                let p = self.transcript.as_ref().expect("validated");
                Box::new(ReplayBackend::from_file(p).map_err(load_err(p))?)
            }
            BackendKind::Remote => {
                let remote = RemoteBackend::new(
                    self.endpoint.clone().expect("validated"),
                    self.model_name.clone().expect("validated"),
                    std::env::var(API_KEY_ENV).ok(),
                    Duration::from_secs(self.timeout_secs),
                );
                Box::new(Retrying::new(remote, self.max_retries).with_rate_limit(self.requests_per_minute))
            }
        })
    }
}
