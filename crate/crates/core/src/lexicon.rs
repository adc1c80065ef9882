//! Term lexicons with whole-word, per-entry case-sensitive matching.
//!
//! File format: one term per line, UTF-8. A line ending in `<TAB>cs` marks a
//! case-sensitive entry; lines starting with `#` are comments. Case-insensitive
//! entries are stored lowercased, case-sensitive entries verbatim.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::{fold, fold_str, is_word_char, CharText};

/// Built-in gendered pronoun set. Compounds ("he or she") are assembled later
/// from adjacent matches.
pub const PRONOUNS: [&str; 8] = ["he", "him", "his", "she", "her", "hers", "himself", "herself"];

const DEFAULT_OCCUPATIONS: &str = include_str!("../data/occupations.txt");

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon {name:?} has no entries")]
    Empty { name: String },
    #[error("line {line}: invalid term {term:?} (terms must start with a letter)")]
    InvalidTerm { line: usize, term: String },
    #[error("line {line}: unknown flag {flag:?} (only \"cs\" is allowed)")]
    InvalidFlag { line: usize, flag: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub case_sensitive: bool,
    pub multiword: bool,
}

impl LexiconEntry {
    /// Normalizes `raw` (trim, single internal spaces, lowercase unless
    /// case-sensitive). Returns `None` for terms that cannot be matched.
    pub fn new(raw: &str, case_sensitive: bool) -> Option<LexiconEntry> {
        let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        if !collapsed.chars().next().is_some_and(is_word_char) {
            return None;
        }
        let term = if case_sensitive { collapsed } else { fold_str(&collapsed) };
        let multiword = term.contains(' ');
        Some(LexiconEntry { term, case_sensitive, multiword })
    }

    // A term made only of letters can be looked up as a whole word run.
    fn is_simple(&self) -> bool {
        self.term.chars().all(is_word_char)
    }
}

/// A whole-word occurrence of a lexicon entry in some text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermMatch {
    pub term: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    name: String,
    entries: Vec<LexiconEntry>,
    simple_ci: HashMap<String, usize>,
    simple_cs: HashMap<String, usize>,
    // keyed by the folded first char
    general: HashMap<char, Vec<usize>>,
}

impl Lexicon {
    /// Builds a lexicon; duplicate `(term, case_sensitive)` pairs collapse.
    pub fn from_entries(
        name: impl Into<String>,
        entries: impl IntoIterator<Item = LexiconEntry>,
    ) -> Result<Lexicon, LexiconError> {
        let name = name.into();
        let entries: Vec<LexiconEntry> = entries.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if entries.is_empty() {
            return Err(LexiconError::Empty { name });
        }
        let mut lex = Lexicon {
            name,
            entries,
            simple_ci: HashMap::new(),
            simple_cs: HashMap::new(),
            general: HashMap::new(),
        };
        for (idx, e) in lex.entries.iter().enumerate() {
            if e.is_simple() {
                let map = if e.case_sensitive { &mut lex.simple_cs } else { &mut lex.simple_ci };
                map.insert(e.term.clone(), idx);
            } else {
                let first = fold(e.term.chars().next().expect("non-empty term"));
                lex.general.entry(first).or_default().push(idx);
            }
        }
        Ok(lex)
    }

    pub fn from_terms<'a>(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (&'a str, bool)>,
    ) -> Result<Lexicon, LexiconError> {
        let mut entries = Vec::new();
        for (line, (t, cs)) in terms.into_iter().enumerate() {
            let e = LexiconEntry::new(t, cs)
                .ok_or_else(|| LexiconError::InvalidTerm { line: line + 1, term: t.to_string() })?;
            entries.push(e);
        }
        Lexicon::from_entries(name, entries)
    }

    /// Parses the lexicon file format.
    pub fn load<R: BufRead>(reader: R, name: impl Into<String>) -> Result<Lexicon, LexiconError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (term, cs) = match line.split_once('\t') {
                Some((term, flag)) => match flag.trim() {
                    "cs" => (term, true),
                    "" => (term, false),
                    other => return Err(LexiconError::InvalidFlag { line: line_no, flag: other.to_string() }),
                },
                None => (line, false),
            };
            let entry = LexiconEntry::new(term, cs)
                .ok_or_else(|| LexiconError::InvalidTerm { line: line_no, term: term.to_string() })?;
            entries.push(entry);
        }
        Lexicon::from_entries(name, entries)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        let path = path.as_ref();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Lexicon::load(BufReader::new(File::open(path)?), name)
    }

    pub fn default_pronouns() -> Lexicon {
        Lexicon::from_terms("pronouns", PRONOUNS.iter().map(|p| (*p, false)))
            .expect("built-in pronoun lexicon is valid")
    }

    pub fn default_occupations() -> Lexicon {
        Lexicon::load(DEFAULT_OCCUPATIONS.as_bytes(), "occupations")
            .expect("built-in occupational lexicon is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All whole-word matches, ordered by start (then end, then term).
    pub fn match_terms(&self, text: &str) -> Vec<TermMatch> {
        let chars: Vec<char> = text.chars().collect();
        let ct = CharText::new(text);
        let mut matches = Vec::new();
        let mut last_end: HashMap<usize, usize> = HashMap::new();
        let mut push = |idx: usize, start: usize, end: usize, matches: &mut Vec<TermMatch>| {
            if last_end.get(&idx).is_some_and(|&e| start < e) {
                return;
            }
            last_end.insert(idx, end);
            matches.push(TermMatch {
                term: self.entries[idx].term.clone(),
                start,
                end,
                surface: ct.slice(start..end).expect("in bounds").to_string(),
            });
        };

        let mut i = 0;
        while i < chars.len() {
            if !is_word_char(chars[i]) || (i > 0 && is_word_char(chars[i - 1])) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            if let Some(&idx) = self.simple_cs.get(&word) {
                push(idx, i, j, &mut matches);
            }
            if let Some(&idx) = self.simple_ci.get(&fold_str(&word)) {
                push(idx, i, j, &mut matches);
            }
            if let Some(cands) = self.general.get(&fold(chars[i])) {
                for &idx in cands {
                    if let Some(end) = self.match_general_at(&chars, i, &self.entries[idx]) {
                        push(idx, i, end, &mut matches);
                    }
                }
            }
            i = j;
        }
        matches.sort_by(|a, b| (a.start, a.end, &a.term).cmp(&(b.start, b.end, &b.term)));
        matches
    }

    fn match_general_at(&self, chars: &[char], start: usize, entry: &LexiconEntry) -> Option<usize> {
        let mut k = start;
        for tc in entry.term.chars() {
            let c = *chars.get(k)?;
            let ok = if entry.case_sensitive { c == tc } else { fold(c) == tc };
            if !ok {
                return None;
            }
            k += 1;
        }
        match chars.get(k) {
            Some(c) if is_word_char(*c) => None,
            _ => Some(k),
        }
    }

    /// True when `text` contains at least one whole-word entry.
    pub fn contains_term(&self, text: &str) -> bool {
        !self.match_terms(text).is_empty()
    }
}

pub fn match_terms(text: &str, lexicon: &Lexicon) -> Vec<TermMatch> {
    lexicon.match_terms(text)
}

/// Whether a resolved antecedent names an occupation according to `lexicon`.
pub fn contains_occupational_term(antecedent_text: &str, lexicon: &Lexicon) -> bool {
    lexicon.contains_term(antecedent_text)
}
