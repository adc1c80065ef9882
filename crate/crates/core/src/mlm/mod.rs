//! Masked-pronoun probes: build test cases from neutralized occupations,
//! score them with any fill-mask model, and summarize inclusive choices.

mod report;
mod scorer;

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use report::{compare_models, render_comparison, run_masking_eval, CaseOutcome, Choice, CompareError, ComparisonRow, EvalReport, TermResult};
pub use scorer::{HttpScorer, ScoreRequest, ScoreResponse, ScriptEntry, ScriptedScorer, Scorer, ScorerError};

use crate::lexicon::{Lexicon, LexiconEntry};
use crate::model::{Abstract, AntecedentLabel, ClassifiedInstance, Gender, Validate};
use crate::neutralizer::{assign_role, EditRecord, PronounRole};
use crate::text::{apply_splices, sentence_spans, CharText, Splice};

pub const MASK_TOKEN: &str = "[MASK]";

/// The three role-matched fillers offered for a mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidates {
    pub masculine: String,
    pub feminine: String,
    pub inclusive: String,
}

impl Candidates {
    pub fn for_role(role: PronounRole) -> Self {
        let (m, f, i) = match role {
            PronounRole::Subject => ("he", "she", "they"),
            PronounRole::Object => ("him", "her", "them"),
            PronounRole::PossessiveDeterminer => ("his", "her", "their"),
            PronounRole::PossessivePronoun => ("his", "hers", "theirs"),
            PronounRole::Reflexive => ("himself", "herself", "themselves"),
        };
        Candidates { masculine: m.into(), feminine: f.into(), inclusive: i.into() }
    }

    /// Tokens in tie-break order: masculine, feminine, inclusive.
    pub fn ordered(&self) -> [&str; 3] {
        [&self.masculine, &self.feminine, &self.inclusive]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTestCase {
    pub case_id: String,
    pub pmid: String,
    pub sentence: String,
    pub original_pronoun: String,
    pub role: PronounRole,
    pub occupational_term: String,
    pub candidates: Candidates,
}

impl Validate for MaskTestCase {
    fn validate(&self) -> Result<(), String> {
        let masks = self.sentence.matches(MASK_TOKEN).count();
        if masks != 1 {
            return Err(format!("sentence has {masks} mask tokens"));
        }
        if self.candidates != Candidates::for_role(self.role) {
            return Err(format!("candidates do not match role {}", self.role));
        }
        Ok(())
    }
}

/// Most frequent occupational terms in the antecedents of `edits`, ties
/// broken alphabetically.
pub fn top_terms(edits: &[EditRecord], occupations: &Lexicon, k: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for e in edits {
        for m in occupations.match_terms(&e.antecedent_text) {
            *counts.entry(m.term).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub term: String,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskBuild {
    pub cases: Vec<MaskTestCase>,
    pub shortfalls: Vec<Shortfall>,
}

/// The sentence around `inst` with the pronoun replaced by the mask token.
fn masked_sentence(text: &str, offset: usize, end: usize) -> Option<String> {
    let span = sentence_spans(text).into_iter().find(|s| s.start <= offset && end <= s.end)?;
    let sentence = CharText::new(text).slice(span.clone())?;
    if sentence.contains(MASK_TOKEN) {
        return None;
    }
    let splice = Splice { start: offset - span.start, end: end - span.start, text: MASK_TOKEN.to_string() };
    apply_splices(sentence, &[splice]).ok()
}

/// Samples up to `n_per_term` Occupation instances per term (seeded, no
/// instance reused across terms) and turns each into a masked sentence.
/// Compound pronouns are skipped; they have no single-token filler.
pub fn build_mask_tests(
    classified: &[ClassifiedInstance],
    abstracts: &[Abstract],
    terms: &[String],
    n_per_term: usize,
    seed: u64,
) -> MaskBuild {
    let by_pmid: HashMap<&str, &Abstract> = abstracts.iter().map(|a| (a.pmid.as_str(), a)).collect();
    let mut eligible: Vec<&ClassifiedInstance> = classified
        .iter()
        .filter(|c| c.label == AntecedentLabel::Occupation && c.instance().gender != Gender::Compound)
        .filter(|c| by_pmid.get(c.instance().pmid.as_str()).is_some_and(|a| c.instance().is_sound_for(&a.text)))
        .collect();
    eligible.sort_by(|a, b| a.instance_id().cmp(b.instance_id()));
    eligible.dedup_by(|a, b| a.instance_id() == b.instance_id());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<&str> = HashSet::new();
    let mut out = MaskBuild::default();
    for term in terms {
        let Some(entry) = LexiconEntry::new(term, false) else {
            log::warn!("skipping empty occupational term");
            continue;
        };
        let matcher = Lexicon::from_entries(term.clone(), [entry]).expect("single valid entry");
        let prepared: Vec<(&str, MaskTestCase)> = eligible
            .iter()
            .filter(|c| !used.contains(c.instance_id()) && matcher.contains_term(&c.resolved.antecedent_text))
            .filter_map(|c| {
                let inst = c.instance();
                let abs = by_pmid[inst.pmid.as_str()];
                let sentence = masked_sentence(&abs.text, inst.offset, inst.end())?;
                let role = assign_role(&abs.text, inst);
                let case = MaskTestCase {
                    case_id: format!("{term}:{}", inst.instance_id),
                    pmid: inst.pmid.clone(),
                    sentence,
                    original_pronoun: inst.lemma.clone(),
                    role,
                    occupational_term: term.clone(),
                    candidates: Candidates::for_role(role),
                };
                Some((c.instance_id(), case))
            })
            .collect();
        let take = n_per_term.min(prepared.len());
        if take < n_per_term {
            log::warn!("term {term:?}: only {} usable instances, wanted {n_per_term}", prepared.len());
            out.shortfalls.push(Shortfall { term: term.clone(), requested: n_per_term, available: prepared.len() });
        }
        let mut picked = rand::seq::index::sample(&mut rng, prepared.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            let (iid, case) = &prepared[i];
            used.insert(*iid);
            out.cases.push(case.clone());
        }
    }
    out
}
