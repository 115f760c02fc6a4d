//! Document ingestion, language filtering, and serialization.
//!
//! JSONL (one JSON object per line, UTF-8) is the canonical corpus format.
//! Readers stream line by line so memory stays bounded by the largest single
//! document; malformed records are reported with their line numbers instead
//! of aborting the run.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One raw source text, the pipeline's unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Outcome of the German/English language check for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageDecision {
    pub keep: bool,
    /// German stopword ratio over all words, in [0, 1].
    pub score: f64,
    pub method: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("i/o error after writing {written} records: {source}")]
    Write {
        written: usize,
        #[source]
        source: io::Error,
    },
}

/// A malformed record, reported with the 1-based line it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

/// Stopword lists driving [`classify_language`].
#[derive(Debug, Clone)]
pub struct LanguageConfig {
    pub german: HashSet<String>,
    pub english: HashSet<String>,
    /// Minimum German stopword ratio to keep a document.
    pub min_german_ratio: f64,
}

impl LanguageConfig {
    /// The shipped German/English lists with the default 0.05 floor.
    pub fn shipped() -> Self {
        LanguageConfig {
            german: parse_word_list(include_str!("../data/stopwords_de.txt")),
            english: parse_word_list(include_str!("../data/stopwords_en.txt")),
            min_german_ratio: 0.05,
        }
    }
}

fn parse_word_list(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// Streaming JSONL reader. Yields documents in file order; malformed lines
/// surface as [`RecordError`]s rather than stopping the stream.
pub struct DocumentReader<R: BufRead> {
    lines: io::Lines<R>,
    line_no: usize,
    seen_ids: HashSet<u64>,
}

impl DocumentReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| CorpusError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Ok(DocumentReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R) -> Self {
        DocumentReader {
            lines: reader.lines(),
            line_no: 0,
            seen_ids: HashSet::new(),
        }
    }

    fn check(&mut self, doc: Document) -> Result<Document, RecordError> {
        if doc.id.is_empty() {
            return Err(RecordError {
                line: self.line_no,
                reason: "empty document id".into(),
            });
        }
        if doc.text.trim().is_empty() {
            return Err(RecordError {
                line: self.line_no,
                reason: format!("document '{}' has empty text", doc.id),
            });
        }
        // Duplicate detection keeps only a 64-bit hash per id.
        if !self.seen_ids.insert(id_hash(&doc.id)) {
            return Err(RecordError {
                line: self.line_no,
                reason: format!("duplicate document id '{}'", doc.id),
            });
        }
        Ok(doc)
    }
}

fn id_hash(id: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(RecordError {
                        line: self.line_no,
                        reason: format!("read error: {e}"),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(match serde_json::from_str::<Document>(&line) {
                Ok(doc) => self.check(doc),
                Err(e) => Err(RecordError {
                    line: self.line_no,
                    reason: format!("invalid JSON: {e}"),
                }),
            });
        }
    }
}

/// Read a whole corpus file, splitting valid documents from record errors.
pub fn read_documents(
    path: impl AsRef<Path>,
) -> Result<(Vec<Document>, Vec<RecordError>), CorpusError> {
    let reader = DocumentReader::open(path)?;
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for item in reader {
        match item {
            Ok(d) => docs.push(d),
            Err(e) => errors.push(e),
        }
    }
    Ok((docs, errors))
}

/// Write documents as JSONL. Returns the number of records written.
pub fn write_documents<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    mut writer: impl Write,
) -> Result<usize, CorpusError> {
    let mut written = 0;
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|source| CorpusError::Write { written, source })?;
        written += 1;
    }
    writer
        .flush()
        .map_err(|source| CorpusError::Write { written, source })?;
    Ok(written)
}

/// Write documents to a file path.
pub fn write_documents_to_path<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CorpusError::Open {
        path: path.display().to_string(),
        source,
    })?;
    write_documents(docs, BufWriter::new(file))
}

/// Write record errors as JSONL `{line, reason}`.
pub fn write_error_report(
    errors: &[RecordError],
    mut writer: impl Write,
) -> io::Result<()> {
    for err in errors {
        serde_json::to_writer(&mut writer, err)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Stopword-ratio language vote: keep iff the German ratio is at least the
/// English ratio and clears the configured floor. Pure in (text, config).
pub fn classify_language(text: &str, config: &LanguageConfig) -> LanguageDecision {
    let mut words = 0usize;
    let mut german = 0usize;
    let mut english = 0usize;
    for raw in text.split_whitespace() {
        let word: String = raw
            .chars()
            .filter(|c| c.is_alphabetic())
            .collect::<String>()
            .to_lowercase();
        if word.is_empty() {
            continue;
        }
        words += 1;
        if config.german.contains(&word) {
            german += 1;
        }
        if config.english.contains(&word) {
            english += 1;
        }
    }
    let (score, keep) = if words == 0 {
        (0.0, false)
    } else {
        let de = german as f64 / words as f64;
        let en = english as f64 / words as f64;
        (de, de >= en && de >= config.min_german_ratio)
    };
    LanguageDecision {
        keep,
        score,
        method: "stopword-ratio".into(),
    }
}

/// Predicate deciding whether a document enters the pipeline. The shipped
/// implementations are the language filter and an id blocklist; anything
/// else (e.g. a fitted finance classifier) can be plugged in behind the
/// same trait.
pub trait DocumentFilter: Sync {
    fn keep(&self, doc: &Document) -> bool;
    fn name(&self) -> &str;
}

/// Keeps documents classified as German.
pub struct GermanFilter(pub LanguageConfig);

impl DocumentFilter for GermanFilter {
    fn keep(&self, doc: &Document) -> bool {
        classify_language(&doc.text, &self.0).keep
    }
    fn name(&self) -> &str {
        "german-stopword-ratio"
    }
}

/// Drops documents whose id appears in the blocklist, e.g. to exclude
/// fine-tuning test announcements from a pre-training corpus.
pub struct IdBlocklist(pub HashSet<String>);

impl IdBlocklist {
    /// One id per line, '#' comments.
    pub fn from_text(raw: &str) -> Self {
        IdBlocklist(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }
}

impl DocumentFilter for IdBlocklist {
    fn keep(&self, doc: &Document) -> bool {
        !self.0.contains(&doc.id)
    }
    fn name(&self) -> &str {
        "id-blocklist"
    }
}
