//! Prompt rendering for the resolution and classification queries.
//!
//! The rendered strings are byte-stable; golden tests pin them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Abstract, PronounInstance, ResolvedInstance};
use crate::text::{CharText, Splice, apply_splices};

pub const START_MARKER: &str = "[START]";
pub const END_MARKER: &str = "[END]";

pub(crate) const RESOLUTION_SYSTEM_PREFIX: &str =
    "You are a helpful assistant with identifying the direct antecedent of a pronoun. Here is your antecedent_background knowledge: ";
pub(crate) const RESOLUTION_USER_PREFIX: &str =
    "Identify the direct antecedent of the pronoun marked with [START] and [END] in the following abstract: ";
pub(crate) const RESOLUTION_USER_SUFFIX: &str = ". Only answer with the antecedent.";
pub(crate) const CLASSIFICATION_SYSTEM_PREFIX: &str =
    "You are a helpful assistant following these classification rules ";
pub(crate) const CLASSIFICATION_NOUN_PREFIX: &str = "In the following abstract, classify which label the noun \"";
pub(crate) const CLASSIFICATION_NOUN_SUFFIX: &str = "\" in the context of the abstract ";
pub(crate) const CLASSIFICATION_USER_SUFFIX: &str = " is referring to: \"patient,\" \"occupation,\" \"named individual,\" \"author,\" \"animal,\" or \"other.\" Only output the label, no other text.";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPair {
    pub system_content: String,
    pub user_content: String,
}

impl PromptPair {
    /// SHA-256 (hex) over `system_content`, a NUL byte, and `user_content`.
    /// Keys the reply cache and replay transcripts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_content.as_bytes());
        h.update([0u8]);
        h.update(self.user_content.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn kind(&self) -> Option<QueryKind> {
        if self.system_content.starts_with(RESOLUTION_SYSTEM_PREFIX) {
            Some(QueryKind::Resolution)
        } else if self.system_content.starts_with(CLASSIFICATION_SYSTEM_PREFIX) {
            Some(QueryKind::Classification)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Resolution,
    Classification,
}

/// The instance's offset/surface do not agree with the abstract text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("instance {instance_id}: expected {surface:?} at offset {offset}, found {found:?}")]
pub struct IntegrityError {
    pub instance_id: String,
    pub offset: usize,
    pub surface: String,
    pub found: Option<String>,
}

/// Wraps the pronoun in `[START]`/`[END]`; everything else is unchanged.
pub fn highlight_pronoun(text: &str, instance: &PronounInstance) -> Result<String, IntegrityError> {
    if !instance.is_sound_for(text) {
        let ct = CharText::new(text);
        return Err(IntegrityError {
            instance_id: instance.instance_id.clone(),
            offset: instance.offset,
            surface: instance.surface.clone(),
            found: ct.slice(instance.offset..instance.end()).map(str::to_string),
        });
    }
    let splice = Splice {
        start: instance.offset,
        end: instance.end(),
        text: format!("{START_MARKER}{}{END_MARKER}", instance.surface),
    };
    Ok(apply_splices(text, &[splice]).expect("sound instance is in bounds"))
}

pub fn build_resolution_prompt(
    instance: &PronounInstance,
    abs: &Abstract,
    background: &str,
) -> Result<PromptPair, IntegrityError> {
    if background.is_empty() {
        log::warn!("{}: resolution prompt built with an empty background slot", instance.instance_id);
    }
    let highlighted = highlight_pronoun(&abs.text, instance)?;
    Ok(PromptPair {
        system_content: format!("{RESOLUTION_SYSTEM_PREFIX}{background}"),
        user_content: format!("{RESOLUTION_USER_PREFIX}{highlighted}{RESOLUTION_USER_SUFFIX}"),
    })
}

pub fn build_classification_prompt(
    resolved: &ResolvedInstance,
    abs: &Abstract,
    rules: &str,
) -> Result<PromptPair, IntegrityError> {
    if rules.is_empty() {
        log::warn!(
            "{}: classification prompt built with an empty rules slot",
            resolved.instance.instance_id
        );
    }
    let highlighted = highlight_pronoun(&abs.text, &resolved.instance)?;
    Ok(PromptPair {
        system_content: format!("{CLASSIFICATION_SYSTEM_PREFIX}{rules}."),
        user_content: format!(
            "{CLASSIFICATION_NOUN_PREFIX}{}{CLASSIFICATION_NOUN_SUFFIX}{highlighted}{CLASSIFICATION_USER_SUFFIX}",
            resolved.antecedent_text
        ),
    })
}

/// Recovers the highlighted abstract from a rendered prompt.
pub(crate) fn highlighted_abstract(prompt: &PromptPair) -> Option<&str> {
    let user = prompt.user_content.as_str();
    match prompt.kind()? {
        QueryKind::Resolution => user
            .strip_prefix(RESOLUTION_USER_PREFIX)?
            .strip_suffix(RESOLUTION_USER_SUFFIX),
        QueryKind::Classification => {
            let rest = user.strip_prefix(CLASSIFICATION_NOUN_PREFIX)?;
            let (_, tail) = rest.split_once(CLASSIFICATION_NOUN_SUFFIX)?;
            tail.strip_suffix(CLASSIFICATION_USER_SUFFIX)
        }
    }
}

/// Recovers the antecedent from a rendered classification prompt.
pub(crate) fn classification_antecedent(prompt: &PromptPair) -> Option<&str> {
    let rest = prompt.user_content.strip_prefix(CLASSIFICATION_NOUN_PREFIX)?;
    rest.split_once(CLASSIFICATION_NOUN_SUFFIX).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicon;
    use crate::scanner::scan_abstract;

    const ROW1: &str = "Some compromise must be reached between the unwillingness of the surgeon to spend most of his time performing abortions and the freedom for women to have them.";

    fn first_instance(text: &str) -> PronounInstance {
        scan_abstract(&Abstract::new("1", text), &Lexicon::default_pronouns()).remove(0)
    }

    #[test]
    fn highlight_worked_row1() {
        let inst = first_instance(ROW1);
        let h = highlight_pronoun(ROW1, &inst).unwrap();
        assert!(h.contains("most of [START]his[END] time"));
        assert_eq!(h.chars().count(), ROW1.chars().count() + 12);
        assert_eq!(h.replacen(START_MARKER, "", 1).replacen(END_MARKER, "", 1), ROW1);
    }

    #[test]
    fn highlight_at_offset_zero() {
        let text = "He examined the wound.";
        let h = highlight_pronoun(text, &first_instance(text)).unwrap();
        assert_eq!(h, "[START]He[END] examined the wound.");
    }

    #[test]
    fn stale_offset_is_integrity_error() {
        let inst = first_instance("He examined the wound.");
        let err = highlight_pronoun("The doctor examined the wound.", &inst).unwrap_err();
        assert_eq!(err.found.as_deref(), Some("Th"));
    }

    #[test]
    fn resolution_template_substitution() {
        let abs = Abstract::new("1", "X he Y");
        let inst = first_instance(&abs.text);
        let p = build_resolution_prompt(&inst, &abs, "B").unwrap();
        assert_eq!(
            p.system_content,
            "You are a helpful assistant with identifying the direct antecedent of a pronoun. Here is your antecedent_background knowledge: B"
        );
        assert_eq!(
            p.user_content,
            "Identify the direct antecedent of the pronoun marked with [START] and [END] in the following abstract: X [START]he[END] Y. Only answer with the antecedent."
        );
        assert_eq!(p.kind(), Some(QueryKind::Resolution));
        assert_eq!(highlighted_abstract(&p), Some("X [START]he[END] Y"));
    }

    #[test]
    fn classification_template_substitution() {
        let abs = Abstract::new("5598532", ROW1);
        let resolved = ResolvedInstance {
            instance: first_instance(ROW1),
            antecedent_text: "the surgeon".into(),
            antecedent_span: None,
        };
        let p = build_classification_prompt(&resolved, &abs, "R").unwrap();
        assert_eq!(p.system_content, "You are a helpful assistant following these classification rules R.");
        let expected = format!(
            "In the following abstract, classify which label the noun \"the surgeon\" in the context of the abstract {} is referring to: \"patient,\" \"occupation,\" \"named individual,\" \"author,\" \"animal,\" or \"other.\" Only output the label, no other text.",
            ROW1.replace(" his ", " [START]his[END] ")
        );
        assert_eq!(p.user_content, expected);
        assert!(p.user_content.contains("the noun \"the surgeon\""));
        assert_eq!(classification_antecedent(&p), Some("the surgeon"));
        assert_eq!(p.kind(), Some(QueryKind::Classification));
    }

    #[test]
    fn empty_rules_still_builds() {
        let abs = Abstract::new("1", "Before any physician acts, he should look.");
        let resolved = ResolvedInstance {
            instance: first_instance(&abs.text),
            antecedent_text: "any physician".into(),
            antecedent_span: None,
        };
        let p = build_classification_prompt(&resolved, &abs, "").unwrap();
        assert_eq!(p.system_content, "You are a helpful assistant following these classification rules .");
        for label in ["patient", "occupation", "named individual", "author", "animal", "other"] {
            assert!(p.user_content.contains(&format!("\"{label},\"")) || p.user_content.contains(&format!("\"{label}.\"")));
        }
    }

    #[test]
    fn hash_separates_fields() {
        let a = PromptPair { system_content: "ab".into(), user_content: "c".into() };
        let b = PromptPair { system_content: "a".into(), user_content: "bc".into() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
