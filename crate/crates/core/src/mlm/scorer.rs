//! Fill-mask scorers: an HTTP client for the scoring service and a scripted
//! scorer for offline runs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MaskTestCase, MASK_TOKEN};
use crate::jsonl::read_records_file;
use crate::model::Validate;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer request failed: {0}")]
    Transport(String),
    #[error("bad scorer response: {0}")]
    BadResponse(String),
    #[error("no scripted choice for case {0}")]
    Unscripted(String),
}

/// Wire request: `{case_id, sentence, mask_token, candidates}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub case_id: String,
    pub sentence: String,
    pub mask_token: String,
    pub candidates: Vec<String>,
}

impl ScoreRequest {
    pub fn for_case(case: &MaskTestCase) -> Self {
        ScoreRequest {
            case_id: case.case_id.clone(),
            sentence: case.sentence.clone(),
            mask_token: MASK_TOKEN.to_string(),
            candidates: case.candidates.ordered().iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Wire response: `{case_id, scores: {candidate: score}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub case_id: String,
    pub scores: BTreeMap<String, f64>,
}

impl ScoreResponse {
    /// Checks the response answers `case` with a finite score per candidate.
    pub fn check(&self, case: &MaskTestCase) -> Result<(), ScorerError> {
        if self.case_id != case.case_id {
            return Err(ScorerError::BadResponse(format!(
                "case_id {:?} does not match request {:?}",
                self.case_id, case.case_id
            )));
        }
        for c in case.candidates.ordered() {
            match self.scores.get(c) {
                Some(s) if s.is_finite() => {}
                Some(s) => return Err(ScorerError::BadResponse(format!("score for {c:?} is {s}"))),
                None => return Err(ScorerError::BadResponse(format!("no score for {c:?}"))),
            }
        }
        Ok(())
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, case: &MaskTestCase) -> Result<ScoreResponse, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, case: &MaskTestCase) -> Result<ScoreResponse, ScorerError> {
        (**self).score(case)
    }
}

/// Posts to `<base>/score`.
pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/score") { base.to_string() } else { format!("{base}/score") };
        HttpScorer { url, agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Scorer for HttpScorer {
    fn score(&self, case: &MaskTestCase) -> Result<ScoreResponse, ScorerError> {
        let resp = self
            .agent
            .post(&self.url)
            .send_json(ScoreRequest::for_case(case))
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        let body: ScoreResponse = resp.into_json().map_err(|e| ScorerError::BadResponse(e.to_string()))?;
        body.check(case)?;
        Ok(body)
    }
}

/// One line of a scripted-scorer file. `choice` is either a candidate token
/// ("their") or a slot name ("masculine", "feminine", "inclusive").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub case_id: String,
    pub choice: String,
}

impl Validate for ScriptEntry {
    fn validate(&self) -> Result<(), String> {
        if self.choice.trim().is_empty() {
            return Err("empty choice".into());
        }
        Ok(())
    }
}

/// Gives the scripted choice score 1 and the other candidates 0.
pub struct ScriptedScorer {
    choices: HashMap<String, String>,
}

impl ScriptedScorer {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        ScriptedScorer { choices: entries.into_iter().map(|e| (e.case_id, e.choice)).collect() }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let outcome = read_records_file::<ScriptEntry>(path)?;
        for e in &outcome.errors {
            log::warn!("scripted scorer: {e}");
        }
        Ok(ScriptedScorer::new(outcome.records))
    }
}

impl Scorer for ScriptedScorer {
    fn score(&self, case: &MaskTestCase) -> Result<ScoreResponse, ScorerError> {
        let choice = self.choices.get(&case.case_id).ok_or_else(|| ScorerError::Unscripted(case.case_id.clone()))?;
        let c = &case.candidates;
        let token = match choice.as_str() {
            "masculine" => c.masculine.as_str(),
            "feminine" => c.feminine.as_str(),
            "inclusive" => c.inclusive.as_str(),
            other => other,
        };
        if !c.ordered().contains(&token) {
            return Err(ScorerError::BadResponse(format!("scripted choice {token:?} is not a candidate")));
        }
        let scores = c.ordered().iter().map(|t| (t.to_string(), if *t == token { 1.0 } else { 0.0 })).collect();
        Ok(ScoreResponse { case_id: case.case_id.clone(), scores })
    }
}
