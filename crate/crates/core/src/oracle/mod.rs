//! Antecedent resolution and classification through a pluggable oracle.

mod backend;
mod prompts;
mod remote;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use backend::{
    load_transcript, save_transcript, BackendError, BackendKind, Cached, ConfigError, MockBackend, MockEntry,
    OracleBackend, OracleBackendConfig, RateLimiter, ReplayBackend, Retrying, TranscriptEntry, API_KEY_ENV,
};
pub use prompts::{
    build_classification_prompt, build_resolution_prompt, highlight_pronoun, IntegrityError, PromptPair, QueryKind,
    END_MARKER, START_MARKER,
};
pub use remote::{extract_reply, ChatMessage, ChatRequest, RemoteBackend};

use crate::exec::Exec;
use crate::model::{
    Abstract, AntecedentLabel, ClassifiedInstance, LabelSource, PronounInstance, ResolvedInstance, Validate,
};
use crate::text::CharText;

/// Replies longer than this many whitespace tokens are flagged as suspicious.
pub const SUSPICIOUS_REPLY_TOKENS: usize = 50;

const CLASSIFICATION_RULES: &str = include_str!("../../data/classification_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Resolve,
    Classify,
}

/// A per-instance failure. These are data, collected alongside successes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub instance_id: String,
    pub stage: Stage,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

impl Validate for InstanceFailure {
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub resolved: ResolvedInstance,
    pub suspicious: bool,
}

/// Results of a batch call: successes in input order plus failures.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<T> {
    pub ok: Vec<T>,
    pub failures: Vec<InstanceFailure>,
    pub suspicious: usize,
}

/// Strips whitespace and any surrounding quote characters.
pub fn clean_reply(reply: &str) -> &str {
    const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
    let mut s = reply.trim();
    loop {
        let stripped = s.trim_matches(QUOTES).trim();
        if stripped == s {
            return s;
        }
        s = stripped;
    }
}

/// Lenient classification-reply parser: lowercases, drops non-letters at the
/// edges, collapses whitespace, then matches the six labels and a few aliases.
pub fn normalize_label(reply: &str) -> Option<AntecedentLabel> {
    let lowered = reply.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphabetic());
    let norm = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
    let label = match norm.as_str() {
        "patient" | "trial participant" | "patient/trial participant" | "patient / trial participant" => {
            AntecedentLabel::PatientTrialParticipant
        }
        "named individual" | "proper name" => AntecedentLabel::NamedIndividual,
        "occupation" => AntecedentLabel::Occupation,
        "author" | "author of the abstract" => AntecedentLabel::AuthorOfAbstract,
        "animal" => AntecedentLabel::Animal,
        "other" => AntecedentLabel::Other,
        _ => return None,
    };
    Some(label)
}

/// Char span of `needle` in `text`: the nearest occurrence ending at or before
/// `pronoun_offset`, else the first occurrence anywhere.
pub fn find_antecedent_span(text: &str, needle: &str, pronoun_offset: usize) -> Option<(usize, usize)> {
    if needle.is_empty() {
        return None;
    }
    let ct = CharText::new(text);
    let len = needle.chars().count();
    let starts: Vec<usize> = text
        .match_indices(needle)
        .filter_map(|(b, _)| ct.char_index_of_byte(b))
        .collect();
    let before = starts.iter().rev().find(|&&s| s + len <= pronoun_offset);
    before.or(starts.first()).map(|&s| (s, s + len))
}

/// The oracle client: a backend plus the two prompt slots.
pub struct Oracle<B> {
    backend: B,
    background: String,
    rules: String,
}

impl<B: OracleBackend> Oracle<B> {
    /// New client with an empty background slot and the shipped label rules.
    pub fn new(backend: B) -> Self {
        Oracle { backend, background: String::new(), rules: default_rules().to_string() }
    }

    pub fn with_background(mut self, background: impl Into<String>) -> Self {
        self.background = background.into();
        self
    }

    pub fn with_rules(mut self, rules: impl Into<String>) -> Self {
        self.rules = rules.into();
        self
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn resolve(&self, instance: &PronounInstance, abs: &Abstract) -> Result<Resolution, InstanceFailure> {
        let fail = |reason: String, raw: Option<String>| InstanceFailure {
            instance_id: instance.instance_id.clone(),
            stage: Stage::Resolve,
            reason,
            raw_reply: raw,
        };
        let prompt = build_resolution_prompt(instance, abs, &self.background).map_err(|e| fail(e.to_string(), None))?;
        let raw = self.backend.complete(&prompt).map_err(|e| fail(e.to_string(), None))?;
        let antecedent = clean_reply(&raw);
        if antecedent.is_empty() {
            return Err(fail("empty reply".into(), Some(raw)));
        }
        let suspicious = antecedent.split_whitespace().count() > SUSPICIOUS_REPLY_TOKENS;
        if suspicious {
            log::warn!("{}: suspiciously long antecedent reply kept", instance.instance_id);
        }
        let antecedent_span = find_antecedent_span(&abs.text, antecedent, instance.offset);
        Ok(Resolution {
            resolved: ResolvedInstance {
                instance: instance.clone(),
                antecedent_text: antecedent.to_string(),
                antecedent_span,
            },
            suspicious,
        })
    }

    pub fn classify(&self, resolved: &ResolvedInstance, abs: &Abstract) -> Result<ClassifiedInstance, InstanceFailure> {
        let fail = |reason: String, raw: Option<String>| InstanceFailure {
            instance_id: resolved.instance.instance_id.clone(),
            stage: Stage::Classify,
            reason,
            raw_reply: raw,
        };
        let prompt = build_classification_prompt(resolved, abs, &self.rules).map_err(|e| fail(e.to_string(), None))?;
        let raw = self.backend.complete(&prompt).map_err(|e| fail(e.to_string(), None))?;
        let label = normalize_label(&raw).ok_or_else(|| fail("reply is not one of the six labels".into(), Some(raw.clone())))?;
        Ok(ClassifiedInstance { resolved: resolved.clone(), label, label_source: LabelSource::Oracle })
    }

    /// Resolves a batch. Instances whose abstract is missing fail individually.
    pub fn resolve_batch(
        &self,
        instances: &[PronounInstance],
        abstracts: &HashMap<&str, &Abstract>,
        exec: Exec,
    ) -> BatchOutcome<ResolvedInstance> {
        let results = exec.map(instances, |inst| match abstracts.get(inst.pmid.as_str()) {
            Some(abs) => self.resolve(inst, abs),
            None => Err(missing_abstract(&inst.instance_id, &inst.pmid, Stage::Resolve)),
        });
        let mut out = BatchOutcome { ok: Vec::new(), failures: Vec::new(), suspicious: 0 };
        for r in results {
            match r {
                Ok(res) => {
                    out.suspicious += usize::from(res.suspicious);
                    out.ok.push(res.resolved);
                }
                Err(f) => out.failures.push(f),
            }
        }
        out
    }

    pub fn classify_batch(
        &self,
        resolved: &[ResolvedInstance],
        abstracts: &HashMap<&str, &Abstract>,
        exec: Exec,
    ) -> BatchOutcome<ClassifiedInstance> {
        let results = exec.map(resolved, |r| match abstracts.get(r.instance.pmid.as_str()) {
            Some(abs) => self.classify(r, abs),
            None => Err(missing_abstract(&r.instance.instance_id, &r.instance.pmid, Stage::Classify)),
        });
        let mut out = BatchOutcome { ok: Vec::new(), failures: Vec::new(), suspicious: 0 };
        for r in results {
            match r {
                Ok(c) => out.ok.push(c),
                Err(f) => out.failures.push(f),
            }
        }
        out
    }
}

fn missing_abstract(instance_id: &str, pmid: &str, stage: Stage) -> InstanceFailure {
    InstanceFailure {
        instance_id: instance_id.to_string(),
        stage,
        reason: format!("no abstract with pmid {pmid}"),
        raw_reply: None,
    }
}

/// The shipped label-definition text used as the classification rules slot.
pub fn default_rules() -> &'static str {
    CLASSIFICATION_RULES.trim_end()
}

/// Convenience wrappers matching the single-instance operations.
pub fn resolve_antecedent<B: OracleBackend>(
    instance: &PronounInstance,
    abs: &Abstract,
    oracle: &Oracle<B>,
) -> Result<ResolvedInstance, InstanceFailure> {
    oracle.resolve(instance, abs).map(|r| r.resolved)
}

pub fn classify_antecedent<B: OracleBackend>(
    resolved: &ResolvedInstance,
    abs: &Abstract,
    oracle: &Oracle<B>,
) -> Result<ClassifiedInstance, InstanceFailure> {
    oracle.classify(resolved, abs)
}
