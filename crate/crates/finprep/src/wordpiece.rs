//! WordPiece tokenizer compatible with the vocab-file format of standard
//! German BERT checkpoints (one token per line, id = line number).
//!
//! The pipeline is cased: no lowercasing and no accent stripping, matching
//! the cased reference tokenizer.

use std::collections::HashMap;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Default maximum sequence length, matching BERT's 512-token window.
pub const MAX_SEQ_LEN: usize = 512;

/// Words longer than this map straight to [UNK], the standard BERT guard.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot read vocab file: {0}")]
    Io(#[from] io::Error),
    #[error("special token {0} missing from vocab")]
    MissingSpecial(&'static str),
    #[error("duplicate token {token:?} at lines {first} and {second}")]
    Duplicate {
        token: String,
        first: usize,
        second: usize,
    },
}

/// Immutable token table; shareable across workers after load.
#[derive(Debug, Clone)]
pub struct VocabTable {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub pad_id: u32,
    pub unk_id: u32,
    pub cls_id: u32,
    pub sep_id: u32,
    pub mask_id: u32,
}

impl VocabTable {
    /// Token id = zero-based line number. All five special tokens must be
    /// present and no token may repeat.
    pub fn from_lines<I, S>(lines: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in lines.into_iter().enumerate() {
            let token: String = line.into();
            if let Some(&first) = index.get(&token) {
                return Err(VocabError::Duplicate {
                    token,
                    first: first as usize + 1,
                    second: i + 1,
                });
            }
            index.insert(token.clone(), i as u32);
            tokens.push(token);
        }
        let special = |name: &'static str| {
            index
                .get(name)
                .copied()
                .ok_or(VocabError::MissingSpecial(name))
        };
        Ok(VocabTable {
            pad_id: special(PAD)?,
            unk_id: special(UNK)?,
            cls_id: special(CLS)?,
            sep_id: special(SEP)?,
            mask_id: special(MASK)?,
            tokens,
            index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_lines(raw.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.pad_id
            || id == self.unk_id
            || id == self.cls_id
            || id == self.sep_id
            || id == self.mask_id
    }
}

/// Token-id sequence with attention flags and word-start indices for
/// whole-word masking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// true at real positions, false at padding.
    pub attention: Vec<bool>,
    /// Indices into `ids` where a new basic word starts.
    pub word_boundaries: Vec<usize>,
}

impl TokenSequence {
    pub fn real_len(&self) -> usize {
        self.attention.iter().filter(|&&a| a).count()
    }
}

/// Is this character split out as a single-character word?
///
/// ASCII punctuation plus the common non-ASCII punctuation of German
/// financial text. Currency and other symbols stay attached to their run.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '§' | '«' | '»' | '„' | '“' | '”' | '‚' | '‘' | '’' | '‹' | '›' | '–' | '—' | '…'
                | '·' | '•' | '¡' | '¿'
        )
}

/// Whitespace-split, then split punctuation into single-character words.
/// Control characters are removed; case is preserved. Each word carries the
/// Unicode scalar offset of its first character in the original text.
pub fn basic_tokenize(text: &str) -> Vec<(String, usize)> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut current_start = 0usize;
    for (offset, c) in text.chars().enumerate() {
        if c.is_control() && !c.is_whitespace() {
            continue;
        }
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push((std::mem::take(&mut current), current_start));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                words.push((std::mem::take(&mut current), current_start));
            }
            words.push((c.to_string(), offset));
        } else {
            if current.is_empty() {
                current_start = offset;
            }
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push((current, current_start));
    }
    words
}

/// Greedy longest-prefix-match tokenization of a single word. Remainder
/// pieces are searched with the "##" prefix; any failure, or a word longer
/// than `max_word_chars`, yields a single [UNK].
pub fn wordpiece_tokenize(word: &str, vocab: &VocabTable, max_word_chars: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() || chars.len() > max_word_chars {
        return vec![UNK.to_string()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut matched = None;
        while end > start {
            let mut candidate: String = chars[start..end].iter().collect();
            if start > 0 {
                candidate = format!("##{candidate}");
            }
            if vocab.id(&candidate).is_some() {
                matched = Some((candidate, end));
                break;
            }
            end -= 1;
        }
        match matched {
            Some((piece, next)) => {
                pieces.push(piece);
                start = next;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// Tokenize a full text into piece ids with the index of each word's first
/// piece. No specials, no padding, no truncation.
fn tokenize_pieces(text: &str, vocab: &VocabTable) -> (Vec<u32>, Vec<usize>) {
    let mut ids = Vec::new();
    let mut boundaries = Vec::new();
    for (word, _) in basic_tokenize(text) {
        boundaries.push(ids.len());
        for piece in wordpiece_tokenize(&word, vocab, MAX_WORD_CHARS) {
            ids.push(vocab.id(&piece).expect("piece is in vocab"));
        }
    }
    (ids, boundaries)
}

/// Encode text to a fixed-length sequence: optional [CLS]/[SEP], truncation
/// to `max_len` (the [SEP] survives truncation as the last real token) and
/// [PAD] fill.
pub fn encode(text: &str, vocab: &VocabTable, max_len: usize, add_specials: bool) -> TokenSequence {
    let (pieces, boundaries) = tokenize_pieces(text, vocab);
    let budget = if add_specials { max_len - 2 } else { max_len };
    let kept = pieces.len().min(budget);

    let mut ids = Vec::with_capacity(max_len);
    let mut word_boundaries = Vec::new();
    if add_specials {
        ids.push(vocab.cls_id);
    }
    let piece_base = ids.len();
    ids.extend_from_slice(&pieces[..kept]);
    for b in boundaries {
        if b < kept {
            word_boundaries.push(piece_base + b);
        }
    }
    if add_specials {
        ids.push(vocab.sep_id);
    }
    let real = ids.len();
    ids.resize(max_len, vocab.pad_id);
    let mut attention = vec![true; real];
    attention.resize(max_len, false);
    TokenSequence {
        ids,
        attention,
        word_boundaries,
    }
}

/// Number of WordPiece pieces in a text, excluding specials and padding.
/// This is the Table-2-style per-document token count.
pub fn count_tokens(text: &str, vocab: &VocabTable) -> usize {
    basic_tokenize(text)
        .iter()
        .map(|(word, _)| wordpiece_tokenize(word, vocab, MAX_WORD_CHARS).len())
        .sum()
}
