//! Rule-based grammatical role tagging for gendered pronouns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::PronounInstance;
use crate::text::{tokenize, CharText, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PronounRole {
    Subject,
    Object,
    PossessiveDeterminer,
    PossessivePronoun,
    Reflexive,
}

impl PronounRole {
    pub const ALL: [PronounRole; 5] = [
        PronounRole::Subject,
        PronounRole::Object,
        PronounRole::PossessiveDeterminer,
        PronounRole::PossessivePronoun,
        PronounRole::Reflexive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PronounRole::Subject => "subject",
            PronounRole::Object => "object",
            PronounRole::PossessiveDeterminer => "possessive_determiner",
            PronounRole::PossessivePronoun => "possessive_pronoun",
            PronounRole::Reflexive => "reflexive",
        }
    }

    /// The they-series form for this role.
    pub fn neutral_form(self) -> &'static str {
        match self {
            PronounRole::Subject => "they",
            PronounRole::Object => "them",
            PronounRole::PossessiveDeterminer => "their",
            PronounRole::PossessivePronoun => "theirs",
            PronounRole::Reflexive => "themselves",
        }
    }
}

impl fmt::Display for PronounRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pronoun role {0:?}")]
pub struct UnknownRole(pub String);

impl FromStr for PronounRole {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PronounRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

/// Finite verbs and auxiliaries that can directly follow a possessive
/// pronoun or an object pronoun.
const VERBS: &[&str] = &[
    "is", "was", "are", "were", "be", "been", "has", "had", "have", "does", "did", "do", "will", "would", "can",
    "could", "should", "may", "might", "must", "shall", "remains", "remained", "seems", "seemed", "appears",
    "appeared", "becomes", "became", "lies", "lay", "stands", "stood",
];

/// Closed-class words that cannot open a noun phrase after "her".
const FUNCTION_WORDS: &[&str] = &[
    // prepositions
    "to", "in", "at", "on", "for", "with", "from", "by", "about", "into", "onto", "after", "before", "during", "of",
    "over", "under", "through", "without", "within", "against", "among", "between", "toward", "towards", "upon",
    "via", "as", "like", "than", "since", "until", "despite",
    // determiners
    "the", "a", "an", "this", "these", "those", "that", "each", "every", "some", "any", "no",
    // conjunctions and complementizers
    "and", "but", "or", "nor", "so", "yet", "if", "when", "whether", "while", "because", "although", "though",
    "unless", "where", "who", "whom", "which", "what",
    // pronouns
    "he", "she", "it", "they", "him", "her", "them", "his", "its", "their", "we", "us", "you", "i", "me",
    // adverbs
    "again", "twice", "once", "yesterday", "today", "tomorrow", "home", "here", "there", "then", "now", "later",
    "soon", "too", "also", "not", "never", "always", "often", "still", "already", "well", "back", "away", "up",
    "down", "out", "off", "first", "anyway", "instead",
];

/// Words ending in "ly" that are adjectives, not adverbs.
const LY_ADJECTIVES: &[&str] = &[
    "early", "elderly", "daily", "weekly", "monthly", "yearly", "likely", "friendly", "lovely", "costly", "lonely",
    "ugly", "holy", "family", "assembly", "supply", "reply", "rally", "belly", "bully",
];

fn is_verb(word: &str) -> bool {
    VERBS.contains(&word)
}

fn is_adverb(word: &str) -> bool {
    word.ends_with("ly") && !LY_ADJECTIVES.contains(&word)
}

/// Whether a word plausibly opens a noun phrase.
fn opens_noun_phrase(word: &str) -> bool {
    !is_verb(word) && !FUNCTION_WORDS.contains(&word) && !is_adverb(word)
}

/// The first token after char offset `end`, if any.
pub(crate) fn next_token(text: &str, end: usize) -> Option<Token> {
    const WINDOW: usize = 80;
    let ct = CharText::new(text);
    let upper = (end + WINDOW).min(ct.len());
    let rest = ct.slice(end..upper)?;
    tokenize(rest).into_iter().next().map(|mut t| {
        t.start += end;
        t.end += end;
        t
    })
}

/// Role of a single (non-compound) pronoun given the word after it.
fn simple_role(lemma: &str, next: Option<&Token>) -> PronounRole {
    let next_word = next.filter(|t| t.kind != TokenKind::Punct).map(|t| t.text.to_lowercase());
    match lemma {
        "he" | "she" => PronounRole::Subject,
        "him" => PronounRole::Object,
        "hers" => PronounRole::PossessivePronoun,
        "himself" | "herself" => PronounRole::Reflexive,
        "his" => match next_word {
            Some(w) if !is_verb(&w) => PronounRole::PossessiveDeterminer,
            _ => PronounRole::PossessivePronoun,
        },
        "her" => match next_word {
            Some(w) if opens_noun_phrase(&w) => PronounRole::PossessiveDeterminer,
            _ => PronounRole::Object,
        },
        other => {
            log::debug!("no role rule for {other:?}, defaulting to subject");
            PronounRole::Subject
        }
    }
}

/// Assigns a grammatical role from the pronoun and the token after it.
/// Compounds take the role of their unambiguous member.
pub fn assign_role(text: &str, instance: &PronounInstance) -> PronounRole {
    let lemma = instance.lemma.to_lowercase();
    let parts: Vec<&str> = lemma.split(" or ").collect();
    if parts.len() == 2 {
        let pick = if parts[0] == "her" { parts[1] } else { parts[0] };
        return match pick {
            "his" => PronounRole::PossessiveDeterminer,
            "him" => PronounRole::Object,
            _ => simple_role(pick, None),
        };
    }
    simple_role(&lemma, next_token(text, instance.end()).as_ref())
}

/// They-series replacement for a pronoun (or compound) in a given role.
pub fn map_pronoun(_lemma: &str, role: PronounRole) -> &'static str {
    role.neutral_form()
}
