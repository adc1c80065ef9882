//! Character-offset text utilities: scalar-value indexing, word boundaries,
//! a small offset-preserving tokenizer and a sentence splitter.
//!
//! Every offset in this crate counts Unicode scalar values (`char`s), never
//! bytes.

use std::ops::Range;

/// A word character for boundary purposes. Anything else (digits included)
/// separates words, so "nurse-led" contains the word "nurse".
#[inline]
pub fn is_word_char(c: char) -> bool {
    c.is_alphabetic()
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Single-char lowercase fold. Keeps char counts stable, unlike
/// `str::to_lowercase`, which may expand some characters.
#[inline]
pub fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

pub fn fold_str(s: &str) -> String {
    s.chars().map(fold).collect()
}

/// Borrowed text with a char-to-byte index.
#[derive(Debug, Clone)]
pub struct CharText<'a> {
    text: &'a str,
    // byte offset of each char, plus text.len() as a sentinel
    bounds: Vec<usize>,
}

impl<'a> CharText<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        CharText { text, bounds }
    }

    pub fn as_str(&self) -> &'a str {
        self.text
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_idx: usize) -> Option<usize> {
        self.bounds.get(char_idx).copied()
    }

    /// Slice by char range; `None` when out of bounds.
    pub fn slice(&self, range: Range<usize>) -> Option<&'a str> {
        if range.start > range.end {
            return None;
        }
        let s = self.byte_offset(range.start)?;
        let e = self.byte_offset(range.end)?;
        Some(&self.text[s..e])
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        let s = *self.bounds.get(idx)?;
        self.text[s..].chars().next()
    }

    /// Char offset of the char starting at byte `b` (must be a boundary).
    pub fn char_index_of_byte(&self, b: usize) -> Option<usize> {
        self.bounds.binary_search(&b).ok()
    }

    /// True when the chars just outside `range` are not word chars.
    pub fn is_whole_word(&self, range: Range<usize>) -> bool {
        let left_ok = range.start == 0
            || self
                .char_at(range.start - 1)
                .is_none_or(|c| !is_word_char(c));
        let right_ok = self.char_at(range.end).is_none_or(|c| !is_word_char(c));
        left_ok && right_ok
    }
}

/// A replacement of the char range `start..end` with `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splice {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Error from [`apply_splices`] when two spans overlap or run past the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpliceConflict {
    pub start: usize,
    pub end: usize,
}

/// Applies non-overlapping splices given in original-text offsets. Order of
/// `splices` does not matter.
pub fn apply_splices(text: &str, splices: &[Splice]) -> Result<String, SpliceConflict> {
    let ct = CharText::new(text);
    let mut sorted: Vec<&Splice> = splices.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut out = String::with_capacity(text.len() + 16 * sorted.len());
    let mut cursor = 0usize;
    for sp in sorted {
        if sp.start < cursor || sp.end < sp.start || sp.end > ct.len() {
            return Err(SpliceConflict { start: sp.start, end: sp.end });
        }
        out.push_str(ct.slice(cursor..sp.start).expect("checked bounds"));
        out.push_str(&sp.text);
        cursor = sp.end;
    }
    out.push_str(ct.slice(cursor..ct.len()).expect("checked bounds"));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }
}

/// Splits text into words (letter runs with internal hyphens/apostrophes),
/// numbers and single-char punctuation tokens. Whitespace is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let start = i;
            let mut has_letter = false;
            while i < chars.len() {
                let ch = chars[i];
                if ch.is_alphanumeric() {
                    has_letter |= ch.is_alphabetic();
                    i += 1;
                } else if (ch == '-' || ch == '\'' || ch == '\u{2019}')
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphanumeric()
                    && i > start
                {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                start,
                end: i,
                kind: if has_letter { TokenKind::Word } else { TokenKind::Number },
            });
        } else {
            tokens.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
                kind: TokenKind::Punct,
            });
            i += 1;
        }
    }
    tokens
}

/// Lowercased abbreviations (with their final period) that never end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "vs.", "e.g.", "i.e.", "cf.", "al.", "fig.",
    "figs.", "no.", "nos.", "approx.", "ca.", "jr.", "sr.", "vol.", "ref.", "eq.", "resp.",
];

/// Sentence spans (char offsets, whitespace-trimmed). A sentence ends at
/// `.`, `?` or `!` followed by whitespace, unless the token carrying the
/// period is a known abbreviation or a single-letter initial.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let at_break = matches!(c, '.' | '?' | '!')
            && chars.get(i + 1).is_some_and(|n| n.is_whitespace());
        if at_break && !(c == '.' && ends_with_abbreviation(&chars[start..=i])) {
            push_trimmed(&chars, start, i + 1, &mut spans);
            start = i + 1;
        }
        i += 1;
    }
    push_trimmed(&chars, start, chars.len(), &mut spans);
    spans
}

fn ends_with_abbreviation(sentence: &[char]) -> bool {
    let word_start = sentence
        .iter()
        .rposition(|c| c.is_whitespace() || *c == '(')
        .map_or(0, |p| p + 1);
    let word: String = sentence[word_start..].iter().map(|c| fold(*c)).collect();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    // "J." style initials
    let raw = &sentence[word_start..];
    raw.len() == 2 && raw[0].is_uppercase()
}

fn push_trimmed(chars: &[char], mut s: usize, mut e: usize, out: &mut Vec<Range<usize>>) {
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if s < e {
        out.push(s..e);
    }
}
