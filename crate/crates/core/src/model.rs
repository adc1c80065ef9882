//! Record types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::text::{is_word_char, CharText};

/// One abstract: the unit of ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstract {
    pub pmid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub text: String,
}

impl Abstract {
    pub fn new(pmid: impl Into<String>, text: impl Into<String>) -> Self {
        Abstract { pmid: pmid.into(), date: None, text: text.into() }
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.date = Some(date);
        self
    }

    pub fn year(&self) -> Option<i32> {
        self.date.map(|d| d.year())
    }
}

pub fn is_valid_pmid(pmid: &str) -> bool {
    !pmid.is_empty() && pmid.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masculine,
    Feminine,
    Compound,
}

impl Gender {
    /// Gender of a single-word pronoun lemma.
    pub fn of_lemma(lemma: &str) -> Option<Gender> {
        match lemma {
            "he" | "him" | "his" | "himself" => Some(Gender::Masculine),
            "she" | "her" | "hers" | "herself" => Some(Gender::Feminine),
            _ => None,
        }
    }
}

/// One gendered-pronoun occurrence, keyed by `(pmid, offset)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PronounInstance {
    pub instance_id: String,
    pub pmid: String,
    pub offset: usize,
    pub surface: String,
    pub lemma: String,
    pub gender: Gender,
}

impl PronounInstance {
    pub fn make_id(pmid: &str, offset: usize) -> String {
        format!("{pmid}:{offset}")
    }

    /// Exclusive end offset (chars).
    pub fn end(&self) -> usize {
        self.offset + self.surface.chars().count()
    }

    /// Offset soundness against `text`: the surface is found verbatim at the
    /// offset and bounded by non-letters.
    pub fn is_sound_for(&self, text: &str) -> bool {
        let ct = CharText::new(text);
        ct.slice(self.offset..self.end()) == Some(self.surface.as_str())
            && ct.is_whole_word(self.offset..self.end())
    }
}

/// The six antecedent categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AntecedentLabel {
    #[serde(rename = "patient")]
    PatientTrialParticipant,
    #[serde(rename = "named individual")]
    NamedIndividual,
    #[serde(rename = "occupation")]
    Occupation,
    #[serde(rename = "author")]
    AuthorOfAbstract,
    #[serde(rename = "animal")]
    Animal,
    #[serde(rename = "other")]
    Other,
}

impl AntecedentLabel {
    pub const ALL: [AntecedentLabel; 6] = [
        AntecedentLabel::PatientTrialParticipant,
        AntecedentLabel::NamedIndividual,
        AntecedentLabel::Occupation,
        AntecedentLabel::AuthorOfAbstract,
        AntecedentLabel::Animal,
        AntecedentLabel::Other,
    ];

    /// Wire string.
    pub fn as_str(self) -> &'static str {
        match self {
            AntecedentLabel::PatientTrialParticipant => "patient",
            AntecedentLabel::NamedIndividual => "named individual",
            AntecedentLabel::Occupation => "occupation",
            AntecedentLabel::AuthorOfAbstract => "author",
            AntecedentLabel::Animal => "animal",
            AntecedentLabel::Other => "other",
        }
    }

    /// Human-facing name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            AntecedentLabel::PatientTrialParticipant => "Patient/Trial Participant",
            AntecedentLabel::NamedIndividual => "Named Individual",
            AntecedentLabel::Occupation => "Occupation",
            AntecedentLabel::AuthorOfAbstract => "Author of the Abstract",
            AntecedentLabel::Animal => "Animal",
            AntecedentLabel::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AntecedentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown antecedent label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for AntecedentLabel {
    type Err = UnknownLabel;

    /// Strict parse of the wire strings. See `oracle::normalize_label` for the
    /// lenient reply parser.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AntecedentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Oracle,
    HumanAnnotation,
    Reconciled,
}

/// An instance with its resolved antecedent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedInstance {
    #[serde(flatten)]
    pub instance: PronounInstance,
    pub antecedent_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antecedent_span: Option<(usize, usize)>,
}

/// A resolved instance with its antecedent label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedInstance {
    #[serde(flatten)]
    pub resolved: ResolvedInstance,
    pub label: AntecedentLabel,
    pub label_source: LabelSource,
}

impl ClassifiedInstance {
    pub fn instance(&self) -> &PronounInstance {
        &self.resolved.instance
    }

    pub fn instance_id(&self) -> &str {
        &self.resolved.instance.instance_id
    }
}

/// Record-level validation applied by the JSONL reader.
pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

impl Validate for Abstract {
    fn validate(&self) -> Result<(), String> {
        if !is_valid_pmid(&self.pmid) {
            return Err(format!("pmid {:?} is not a non-empty decimal string", self.pmid));
        }
        if self.text.is_empty() {
            return Err(format!("abstract {} has empty text", self.pmid));
        }
        Ok(())
    }
}

impl Validate for PronounInstance {
    fn validate(&self) -> Result<(), String> {
        if !is_valid_pmid(&self.pmid) {
            return Err(format!("pmid {:?} is not a non-empty decimal string", self.pmid));
        }
        if self.surface.is_empty() || self.instance_id.is_empty() {
            return Err("instance has empty surface or id".into());
        }
        let edge_ok = |c: Option<char>| c.is_some_and(is_word_char);
        if !edge_ok(self.surface.chars().next()) || !edge_ok(self.surface.chars().last()) {
            return Err(format!("surface {:?} does not start and end with a letter", self.surface));
        }
        Ok(())
    }
}

impl Validate for ResolvedInstance {
    fn validate(&self) -> Result<(), String> {
        self.instance.validate()?;
        if self.antecedent_text.is_empty() {
            return Err("empty antecedent_text".into());
        }
        if self.antecedent_text.trim() != self.antecedent_text {
            return Err("antecedent_text has surrounding whitespace".into());
        }
        if let Some((s, e)) = self.antecedent_span {
            if e < s {
                return Err(format!("antecedent_span ({s}, {e}) is reversed"));
            }
        }
        Ok(())
    }
}

impl Validate for ClassifiedInstance {
    fn validate(&self) -> Result<(), String> {
        self.resolved.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_classified() -> ClassifiedInstance {
        ClassifiedInstance {
            resolved: ResolvedInstance {
                instance: PronounInstance {
                    instance_id: "5598532:90".into(),
                    pmid: "5598532".into(),
                    offset: 90,
                    surface: "his".into(),
                    lemma: "his".into(),
                    gender: Gender::Masculine,
                },
                antecedent_text: "the surgeon".into(),
                antecedent_span: Some((61, 72)),
            },
            label: AntecedentLabel::Occupation,
            label_source: LabelSource::Oracle,
        }
    }

    #[test]
    fn classified_serializes_flat() {
        let v = serde_json::to_value(sample_classified()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "antecedent_span",
                "antecedent_text",
                "gender",
                "instance_id",
                "label",
                "label_source",
                "lemma",
                "offset",
                "pmid",
                "surface"
            ]
        );
        assert_eq!(obj["label"], "occupation");
        assert_eq!(obj["gender"], "masculine");
        assert_eq!(obj["label_source"], "oracle");
    }

    #[test]
    fn label_wire_strings_are_fixed() {
        let strs: Vec<String> = AntecedentLabel::ALL
            .iter()
            .map(|l| serde_json::to_string(l).unwrap())
            .collect();
        assert_eq!(
            strs,
            [
                "\"patient\"",
                "\"named individual\"",
                "\"occupation\"",
                "\"author\"",
                "\"animal\"",
                "\"other\""
            ]
        );
        for l in AntecedentLabel::ALL {
            assert_eq!(l.as_str().parse::<AntecedentLabel>().unwrap(), l);
        }
        assert!("Occupation".parse::<AntecedentLabel>().is_err());
    }

    #[test]
    fn abstract_validation() {
        assert!(Abstract::new("5598532", "x").validate().is_ok());
        assert!(Abstract::new("", "x").validate().is_err());
        assert!(Abstract::new("55a", "x").validate().is_err());
        assert!(Abstract::new("1", "").validate().is_err());
    }

    #[test]
    fn offset_soundness() {
        let inst = sample_classified().resolved.instance;
        let text = "Some compromise must be reached between the unwillingness of the surgeon to spend most of his time";
        assert!(inst.is_sound_for(text));
        assert!(!inst.is_sound_for("short"));
    }
}
