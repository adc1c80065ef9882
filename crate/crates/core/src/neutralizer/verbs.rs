//! Subject-verb agreement after a singular subject becomes "they".

use serde::{Deserialize, Serialize};

use crate::text::{Token, TokenKind};

/// A verb rewrite, with offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbFix {
    pub start: usize,
    pub end: usize,
    pub before: String,
    pub after: String,
}

const ADVERBS: &[&str] = &["also", "often", "always", "never", "still", "now"];
const MAX_SKIPPED: usize = 2;

/// Lowercase words ending in "s" that are not third-person verbs.
const NOT_VERBS: &[&str] = &[
    "his", "hers", "its", "this", "thus", "as", "us", "yes", "is", "was", "has", "does", "less", "unless", "always",
    "perhaps", "sometimes", "nevertheless", "besides", "towards", "afterwards", "upwards", "downwards", "various",
    "series", "species", "news", "whereas", "plus", "minus", "ours", "yours", "theirs", "numerous", "previous",
    "serious", "analysis", "diagnosis", "prognosis", "basis", "thesis", "status", "versus", "bus", "gas", "lens",
    "means", "across", "alas", "nowadays",
];

const IRREGULAR: &[(&str, &str)] = &[("is", "are"), ("was", "were"), ("has", "have"), ("does", "do")];

fn is_adverb_like(word: &str) -> bool {
    word.ends_with("ly") || ADVERBS.contains(&word)
}

/// Base form of a third-person singular present verb, or `None` when the
/// word does not look like one.
fn base_form(word: &str) -> Option<String> {
    if !word.chars().all(|c| c.is_lowercase()) || !word.ends_with('s') || NOT_VERBS.contains(&word) {
        return None;
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") || word.ends_with("ous") {
        return None;
    }
    if word.chars().count() < 3 {
        return None;
    }
    if let Some(stem) = word.strip_suffix("ies") {
        // "dies", "lies" keep their "ie"
        if stem.chars().count() > 1 {
            return Some(format!("{stem}y"));
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zes", "oes"] {
        if word.ends_with(suffix) {
            return Some(word[..word.len() - 2].to_string());
        }
    }
    Some(word[..word.len() - 1].to_string())
}

/// Looks at the token after `subject_idx` (skipping up to two adverb-like
/// words) and returns the plural-agreement rewrite, if one applies.
pub fn fix_verb_agreement(tokens: &[Token], subject_idx: usize) -> Option<VerbFix> {
    let mut idx = subject_idx + 1;
    let mut skipped = 0;
    loop {
        let tok = tokens.get(idx)?;
        if tok.kind != TokenKind::Word {
            return None;
        }
        let lower = tok.text.to_lowercase();
        if let Some((_, after)) = IRREGULAR.iter().find(|(b, _)| *b == lower) {
            return Some(VerbFix {
                start: tok.start,
                end: tok.end,
                before: tok.text.clone(),
                after: copy_initial_case(&tok.text, after),
            });
        }
        if skipped < MAX_SKIPPED && is_adverb_like(&lower) {
            skipped += 1;
            idx += 1;
            continue;
        }
        return base_form(&tok.text).map(|after| VerbFix {
            start: tok.start,
            end: tok.end,
            before: tok.text.clone(),
            after,
        });
    }
}

/// Copies the case of `model`'s first character onto `word`.
pub fn copy_initial_case(model: &str, word: &str) -> String {
    let upper = model.chars().next().is_some_and(char::is_uppercase);
    let mut chars = word.chars();
    match chars.next() {
        Some(first) if upper => first.to_uppercase().chain(chars).collect(),
        _ => word.to_string(),
    }
}
