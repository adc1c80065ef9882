//! Rewrites occupation-linked gendered pronouns to they-series forms and
//! records every change so the original can be rebuilt.

mod role;
mod verbs;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use role::{assign_role, map_pronoun, PronounRole, UnknownRole};
pub use verbs::{copy_initial_case, fix_verb_agreement, VerbFix};

use crate::exec::Exec;
use crate::model::{Abstract, AntecedentLabel, ClassifiedInstance, Gender, PronounInstance};
use crate::oracle::IntegrityError;
use crate::text::{apply_splices, tokenize, CharText, Splice, Token};

/// Coordinated pairs merged into a single compound instance.
pub const COMPOUND_PAIRS: [(&str, &str); 8] = [
    ("he", "she"),
    ("she", "he"),
    ("him", "her"),
    ("her", "him"),
    ("his", "her"),
    ("her", "his"),
    ("himself", "herself"),
    ("herself", "himself"),
];

/// Merges adjacent instances joined by exactly " or " into compound
/// instances. Everything else passes through.
pub fn detect_compounds(text: &str, instances: &[PronounInstance]) -> Vec<PronounInstance> {
    let ct = CharText::new(text);
    let mut out = Vec::with_capacity(instances.len());
    let mut i = 0;
    while i < instances.len() {
        let a = &instances[i];
        if let Some(b) = instances.get(i + 1) {
            let joined = ct
                .slice(a.end()..b.offset)
                .is_some_and(|gap| gap.eq_ignore_ascii_case(" or "));
            let pair = (a.lemma.as_str(), b.lemma.as_str());
            if joined && COMPOUND_PAIRS.contains(&pair) {
                if let Some(surface) = ct.slice(a.offset..b.end()) {
                    out.push(PronounInstance {
                        instance_id: PronounInstance::make_id(&a.pmid, a.offset),
                        pmid: a.pmid.clone(),
                        offset: a.offset,
                        surface: surface.to_string(),
                        lemma: surface.to_lowercase(),
                        gender: Gender::Compound,
                    });
                    i += 2;
                    continue;
                }
            }
        }
        out.push(a.clone());
        i += 1;
    }
    out
}

/// One pronoun rewrite. Offsets refer to the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub pmid: String,
    pub start: usize,
    pub end: usize,
    pub before: String,
    pub after: String,
    pub role: PronounRole,
    pub antecedent_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_fix: Option<VerbFix>,
}

impl crate::model::Validate for EditRecord {
    fn validate(&self) -> Result<(), String> {
        if self.before == self.after {
            return Err("edit does not change the text".into());
        }
        if self.end < self.start || self.before.chars().count() != self.end - self.start {
            return Err(format!("span {}..{} does not match {:?}", self.start, self.end, self.before));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeutralizeOptions {
    /// Rewrite the verb after a replaced subject ("he is" -> "they are").
    pub verb_agreement: bool,
    /// Skip instances whose antecedent carries an explicit sex word.
    pub gender_guard: bool,
}

impl Default for NeutralizeOptions {
    fn default() -> Self {
        NeutralizeOptions { verb_agreement: true, gender_guard: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NeutralizeError {
    #[error("instance {instance_id} belongs to pmid {found}, not {expected}")]
    WrongAbstract { instance_id: String, expected: String, found: String },
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error("{pmid}: overlapping edits at {start}..{end}")]
    Overlap { pmid: String, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neutralized {
    pub text: String,
    pub edits: Vec<EditRecord>,
}

const SEX_WORDS: &[&str] = &["female", "male", "woman", "man", "women", "men"];

/// Whether an antecedent names the referent's sex ("a female surgeon").
pub fn antecedent_is_gendered(antecedent: &str) -> bool {
    antecedent
        .split(|c: char| !c.is_alphabetic())
        .any(|w| SEX_WORDS.contains(&w.to_lowercase().as_str()))
}

fn integrity_error(inst: &PronounInstance, text: &str) -> IntegrityError {
    IntegrityError {
        instance_id: inst.instance_id.clone(),
        offset: inst.offset,
        surface: inst.surface.clone(),
        found: CharText::new(text).slice(inst.offset..inst.end()).map(str::to_string),
    }
}

/// Rewrites the Occupation-labelled instances of one abstract. Other labels
/// are left alone. Edits come back in offset order.
pub fn neutralize_abstract<'a>(
    abs: &Abstract,
    classified: impl IntoIterator<Item = &'a ClassifiedInstance>,
    opts: NeutralizeOptions,
) -> Result<Neutralized, NeutralizeError> {
    let mut tokens: Option<Vec<Token>> = None;
    let mut edits = Vec::new();
    for c in classified {
        let inst = c.instance();
        if inst.pmid != abs.pmid {
            return Err(NeutralizeError::WrongAbstract {
                instance_id: inst.instance_id.clone(),
                expected: abs.pmid.clone(),
                found: inst.pmid.clone(),
            });
        }
        if c.label != AntecedentLabel::Occupation {
            continue;
        }
        if !inst.is_sound_for(&abs.text) {
            return Err(integrity_error(inst, &abs.text).into());
        }
        let antecedent = &c.resolved.antecedent_text;
        if antecedent_is_gendered(antecedent) {
            if opts.gender_guard {
                log::info!("{}: antecedent {antecedent:?} names a sex, left unchanged", inst.instance_id);
                continue;
            }
            log::info!("{}: antecedent {antecedent:?} names a sex, rewriting anyway", inst.instance_id);
        }
        let role = assign_role(&abs.text, inst);
        let after = copy_initial_case(&inst.surface, map_pronoun(&inst.lemma, role));
        if after == inst.surface {
            continue;
        }
        let verb_fix = if opts.verb_agreement && role == PronounRole::Subject {
            let toks = tokens.get_or_insert_with(|| tokenize(&abs.text));
            toks.binary_search_by_key(&inst.end(), |t| t.end)
                .ok()
                .and_then(|idx| fix_verb_agreement(toks, idx))
        } else {
            None
        };
        edits.push(EditRecord {
            pmid: abs.pmid.clone(),
            start: inst.offset,
            end: inst.end(),
            before: inst.surface.clone(),
            after,
            role,
            antecedent_text: antecedent.clone(),
            verb_fix,
        });
    }
    edits.sort_by_key(|e| e.start);
    let text = apply_splices(&abs.text, &splices_of(&edits)).map_err(|e| NeutralizeError::Overlap {
        pmid: abs.pmid.clone(),
        start: e.start,
        end: e.end,
    })?;
    Ok(Neutralized { text, edits })
}

fn splices_of(edits: &[EditRecord]) -> Vec<Splice> {
    let mut out = Vec::with_capacity(edits.len());
    for e in edits {
        out.push(Splice { start: e.start, end: e.end, text: e.after.clone() });
        if let Some(v) = &e.verb_fix {
            out.push(Splice { start: v.start, end: v.end, text: v.after.clone() });
        }
    }
    out
}

/// Neutralizes every abstract; instances are routed by pmid. Output
/// abstracts keep input order, edits are grouped per abstract in that order.
pub fn neutralize_corpus(
    abstracts: &[Abstract],
    classified: &[ClassifiedInstance],
    opts: NeutralizeOptions,
    exec: Exec,
) -> Result<(Vec<Abstract>, Vec<EditRecord>), NeutralizeError> {
    let mut by_pmid: HashMap<&str, Vec<&ClassifiedInstance>> = HashMap::new();
    for c in classified {
        by_pmid.entry(c.instance().pmid.as_str()).or_default().push(c);
    }
    let known: std::collections::HashSet<&str> = abstracts.iter().map(|a| a.pmid.as_str()).collect();
    let orphans = by_pmid.keys().filter(|p| !known.contains(*p)).count();
    if orphans > 0 {
        log::warn!("{orphans} pmid(s) in the classified input have no abstract; their instances were ignored");
    }
    let results = exec.map(abstracts, |abs| {
        let mine = by_pmid.get(abs.pmid.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        neutralize_abstract(abs, mine.iter().copied(), opts)
    });
    let mut out_abs = Vec::with_capacity(abstracts.len());
    let mut out_edits = Vec::new();
    for (abs, r) in abstracts.iter().zip(results) {
        let n = r?;
        out_abs.push(Abstract { text: n.text, ..abs.clone() });
        out_edits.extend(n.edits);
    }
    Ok((out_abs, out_edits))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("edited text has {found:?} at {start}, expected {expected:?}")]
pub struct ReconstructError {
    pub start: usize,
    pub expected: String,
    pub found: Option<String>,
}

/// Undoes `edits` (all from one abstract) on `new_text`.
pub fn reconstruct(new_text: &str, edits: &[EditRecord]) -> Result<String, ReconstructError> {
    let mut units: Vec<(usize, &str, &str)> = Vec::new();
    for e in edits {
        units.push((e.start, &e.before, &e.after));
        if let Some(v) = &e.verb_fix {
            units.push((v.start, &v.before, &v.after));
        }
    }
    units.sort_by_key(|u| u.0);
    let ct = CharText::new(new_text);
    let mut shift: isize = 0;
    let mut splices = Vec::with_capacity(units.len());
    for (start, before, after) in units {
        let new_start = start.checked_add_signed(shift).ok_or(ReconstructError {
            start,
            expected: after.to_string(),
            found: None,
        })?;
        let after_len = after.chars().count();
        let found = ct.slice(new_start..new_start + after_len);
        if found != Some(after) {
            return Err(ReconstructError { start: new_start, expected: after.to_string(), found: found.map(str::to_string) });
        }
        splices.push(Splice { start: new_start, end: new_start + after_len, text: before.to_string() });
        shift += after_len as isize - before.chars().count() as isize;
    }
    apply_splices(new_text, &splices).map_err(|e| ReconstructError {
        start: e.start,
        expected: String::new(),
        found: None,
    })
}
