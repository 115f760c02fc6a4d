//! Rule-based sentence segmentation and word counting.
//!
//! A sentence ends at '.', '!', '?' or ':' followed by whitespace and an
//! uppercase letter or digit, unless the terminator closes a known German
//! abbreviation ("z.B.", "bzw.", "GmbH.") or an ordinal/decimal number
//! ("3." in "3. Quartal"). Offsets are Unicode scalar indices so spans are
//! portable across implementations.

use std::collections::HashSet;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Half-open character range identifying one sentence inside a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    /// Unicode scalar index of the first character.
    pub start: usize,
    /// Exclusive end index.
    pub end: usize,
}

impl SentenceSpan {
    /// Extract the sentence text, slicing by character index.
    pub fn slice(&self, chars: &[char]) -> String {
        chars[self.start..self.end].iter().collect()
    }
}

/// Abbreviation list guarding the '.' terminator.
#[derive(Debug, Clone)]
pub struct Abbreviations(HashSet<String>);

impl Abbreviations {
    /// The shipped list of ~100 common German abbreviations.
    pub fn shipped() -> Self {
        Self::from_text(include_str!("../data/abbreviations_de.txt"))
    }

    /// One abbreviation per line, UTF-8, '#' comments.
    pub fn from_text(raw: &str) -> Self {
        Abbreviations(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

const TERMINATORS: [char; 4] = ['.', '!', '?', ':'];

/// Split text into sentence spans. A text without any terminator yields one
/// span covering everything (modulo surrounding whitespace); empty text
/// yields no spans.
pub fn segment_sentences(text: &str, abbrev: &Abbreviations) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start = skip_whitespace(&chars, 0);
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if TERMINATORS.contains(&c) && splits_here(&chars, i, abbrev) {
            spans.push(SentenceSpan { start, end: i + 1 });
            start = skip_whitespace(&chars, i + 1);
            i = start;
        } else {
            i += 1;
        }
    }
    // Unterminated tail, trimmed to the last non-whitespace character.
    if start < chars.len() {
        let mut end = chars.len();
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if end > start {
            spans.push(SentenceSpan { start, end });
        }
    }
    spans
}

fn skip_whitespace(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

/// Does the terminator at `i` end a sentence?
fn splits_here(chars: &[char], i: usize, abbrev: &Abbreviations) -> bool {
    // Require whitespace, then an uppercase/digit sentence start
    // (':' only before uppercase; financial reports use colons as list leads).
    let next = skip_whitespace(chars, i + 1);
    if next == i + 1 {
        return false; // no whitespace after the terminator
    }
    if next >= chars.len() {
        return true; // terminator at end of text closes the sentence
    }
    let first = chars[next];
    let starts_sentence = if chars[i] == ':' {
        first.is_uppercase()
    } else {
        first.is_uppercase() || first.is_numeric()
    };
    if !starts_sentence {
        return false;
    }
    if chars[i] == '.' {
        // Ordinal/decimal guard: "3." never splits.
        if i > 0 && chars[i - 1].is_numeric() {
            return false;
        }
        // Abbreviation guard on the token ending at this period.
        let token = token_ending_at(chars, i);
        if abbrev.contains(&token) {
            return false;
        }
        // Also check with leading punctuation stripped, e.g. "(z.B.".
        let stripped: String = token
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_string();
        if !stripped.is_empty() && abbrev.contains(&stripped) {
            return false;
        }
    }
    true
}

fn token_ending_at(chars: &[char], i: usize) -> String {
    let mut start = i;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    chars[start..=i].iter().collect()
}

/// Number of maximal non-whitespace runs containing at least one letter or
/// digit.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace()
        .filter(|run| run.chars().any(|c| c.is_alphanumeric()))
        .count()
}
