//! Splits long documents into sentence-aligned chunks targeting sampled
//! minimum token counts.
//!
//! Per chunk, a fresh minimum-token target is drawn from the configured
//! values; sentences of one document are concatenated until the running
//! WordPiece count reaches the target, then the chunk is emitted and the
//! procedure repeats with the remaining sentences. Sentences are never mixed
//! across documents, and emitted chunks below the discard threshold are
//! dropped.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::seeding::keyed_rng;
use crate::segmenter::{segment_sentences, Abbreviations, SentenceSpan};
use crate::wordpiece::{count_tokens, VocabTable};

/// Chunking parameters. Targets default to {30, 100, 300, 505} with uniform
/// weights; chunks below `discard_below` tokens are dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub targets: Vec<(u32, f64)>,
    pub discard_below: u32,
    pub seed: u64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            targets: vec![(30, 1.0), (100, 1.0), (300, 1.0), (505, 1.0)],
            discard_below: 11,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChunkConfigError {
    #[error("target {0} is below the discard threshold {1}")]
    TargetBelowDiscard(u32, u32),
    #[error("target {0} has non-positive weight {1}")]
    BadWeight(u32, f64),
    #[error("no targets configured")]
    NoTargets,
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<(), ChunkConfigError> {
        if self.targets.is_empty() {
            return Err(ChunkConfigError::NoTargets);
        }
        for &(t, w) in &self.targets {
            if t < self.discard_below {
                return Err(ChunkConfigError::TargetBelowDiscard(t, self.discard_below));
            }
            if !(w > 0.0) {
                return Err(ChunkConfigError::BadWeight(t, w));
            }
        }
        Ok(())
    }
}

/// One emitted pre-training observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// Ordinal within the document.
    pub index: usize,
    /// Member sentences joined with a single space.
    pub text: String,
    pub token_count: u32,
    /// First/last sentence ordinals (inclusive) within the document.
    pub sentence_range: (usize, usize),
}

/// Mergeable per-run accounting; combine is associative and commutative.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChunkReport {
    pub docs_in: u64,
    pub chunks_out: u64,
    pub chunks_discarded: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub doc_errors: Vec<String>,
}

impl ChunkReport {
    pub fn merge(&mut self, other: ChunkReport) {
        self.docs_in += other.docs_in;
        self.chunks_out += other.chunks_out;
        self.chunks_discarded += other.chunks_discarded;
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        self.doc_errors.extend(other.doc_errors);
    }
}

fn draw_target(rng: &mut impl Rng, targets: &[(u32, f64)]) -> u32 {
    let total: f64 = targets.iter().map(|&(_, w)| w).sum();
    let mut pick = rng.gen::<f64>() * total;
    for &(t, w) in targets {
        pick -= w;
        if pick < 0.0 {
            return t;
        }
    }
    targets.last().expect("validated non-empty").0
}

/// Chunk one document given its sentence spans. The RNG is keyed by
/// (config.seed, doc id), so parallelism cannot change outputs.
pub fn chunk_document(
    doc: &Document,
    sentences: &[SentenceSpan],
    vocab: &VocabTable,
    config: &ChunkConfig,
) -> Vec<Chunk> {
    chunk_document_full(doc, sentences, vocab, config).0
}

/// Like [`chunk_document`], additionally returning the number of chunks the
/// discard filter removed and the document's total sentence-token count.
fn chunk_document_full(
    doc: &Document,
    sentences: &[SentenceSpan],
    vocab: &VocabTable,
    config: &ChunkConfig,
) -> (Vec<Chunk>, u64, u64) {
    let chars: Vec<char> = doc.text.chars().collect();
    let mut rng = keyed_rng(config.seed, &[b"chunk", doc.id.as_bytes()]);
    let mut chunks = Vec::new();
    let mut tokens_in = 0u64;
    let mut current_text = String::new();
    let mut current_tokens = 0u32;
    let mut first_sentence = 0usize;
    let mut target = draw_target(&mut rng, &config.targets);

    for (ordinal, span) in sentences.iter().enumerate() {
        let sentence = span.slice(&chars);
        let tokens = count_tokens(&sentence, vocab) as u32;
        tokens_in += tokens as u64;
        if current_text.is_empty() {
            first_sentence = ordinal;
        } else {
            current_text.push(' ');
        }
        current_text.push_str(&sentence);
        current_tokens += tokens;
        if current_tokens >= target {
            chunks.push(Chunk {
                doc_id: doc.id.clone(),
                index: chunks.len(),
                text: std::mem::take(&mut current_text),
                token_count: current_tokens,
                sentence_range: (first_sentence, ordinal),
            });
            current_tokens = 0;
            target = draw_target(&mut rng, &config.targets);
        }
    }
    // Remainder below the drawn target still becomes an observation.
    if !current_text.is_empty() {
        chunks.push(Chunk {
            doc_id: doc.id.clone(),
            index: chunks.len(),
            text: current_text,
            token_count: current_tokens,
            sentence_range: (first_sentence, sentences.len() - 1),
        });
    }
    let before = chunks.len();
    chunks.retain(|c| c.token_count >= config.discard_below);
    let discarded = (before - chunks.len()) as u64;
    (chunks, discarded, tokens_in)
}

/// Segment and chunk a whole corpus, in parallel over documents. Chunk
/// order follows document order; within a document, chunk order.
pub fn chunk_corpus(
    docs: &[Document],
    vocab: &VocabTable,
    abbrev: &Abbreviations,
    config: &ChunkConfig,
) -> (Vec<Chunk>, ChunkReport) {
    let per_doc: Vec<(Vec<Chunk>, ChunkReport)> = docs
        .par_iter()
        .map(|doc| {
            let sentences = segment_sentences(&doc.text, abbrev);
            let (chunks, discarded, tokens_in) =
                chunk_document_full(doc, &sentences, vocab, config);
            let tokens_out: u64 = chunks.iter().map(|c| c.token_count as u64).sum();
            let report = ChunkReport {
                docs_in: 1,
                chunks_out: chunks.len() as u64,
                chunks_discarded: discarded,
                tokens_in,
                tokens_out,
                doc_errors: Vec::new(),
            };
            (chunks, report)
        })
        .collect();

    let mut all_chunks = Vec::new();
    let mut report = ChunkReport::default();
    for (chunks, r) in per_doc {
        all_chunks.extend(chunks);
        report.merge(r);
    }
    (all_chunks, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::small_vocab;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            source: "test".into(),
            text: text.into(),
            published: None,
            labels: None,
        }
    }

    // Sentences of n [UNK] words separated by terminators give exact,
    // punctuation-free token counts per sentence after segmentation.
    fn synthetic_doc(id: &str, sentence_tokens: &[usize]) -> Document {
        let text: Vec<String> = sentence_tokens
            .iter()
            .map(|&n| format!("{}!", vec!["Wort"; n].join(" ")))
            .collect();
        doc(id, &text.join(" "))
    }

    fn fixed_target_config(target: u32) -> ChunkConfig {
        ChunkConfig {
            targets: vec![(target, 1.0)],
            discard_below: 11,
            seed: 42,
        }
    }

    #[test]
    fn hand_traced_example() {
        // Sentence token counts [20, 20, 20] (19 words + terminator each),
        // fixed target 30: chunk 1 = sentences 0-1 (40 tokens), chunk 2 =
        // sentence 2 (20 tokens, above the 11-token discard, kept).
        let vocab = small_vocab();
        let d = synthetic_doc("d", &[19, 19, 19]);
        let abbrev = Abbreviations::shipped();
        let sentences = segment_sentences(&d.text, &abbrev);
        assert_eq!(sentences.len(), 3);
        let chunks = chunk_document(&d, &sentences, &vocab, &fixed_target_config(30));
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].token_count, 40);
        assert_eq!(chunks[0].sentence_range, (0, 1));
        assert_eq!(chunks[1].token_count, 20);
        assert_eq!(chunks[1].sentence_range, (2, 2));
    }

    #[test]
    fn short_document_discarded() {
        let vocab = small_vocab();
        let d = synthetic_doc("d", &[8]); // 9 tokens total
        let abbrev = Abbreviations::shipped();
        let sentences = segment_sentences(&d.text, &abbrev);
        let chunks = chunk_document(&d, &sentences, &vocab, &fixed_target_config(30));
        assert!(chunks.is_empty());
    }

    #[test]
    fn never_chunks_across_documents() {
        let vocab = small_vocab();
        let abbrev = Abbreviations::shipped();
        let docs = vec![synthetic_doc("a", &[5]), synthetic_doc("b", &[5])];
        let (chunks, report) = chunk_corpus(&docs, &vocab, &abbrev, &ChunkConfig::default());
        assert!(chunks.is_empty());
        assert_eq!(report.docs_in, 2);
    }

    #[test]
    fn empty_document_yields_no_chunks() {
        let vocab = small_vocab();
        let d = doc("d", "   ");
        let chunks = chunk_document(&d, &[], &vocab, &ChunkConfig::default());
        assert!(chunks.is_empty());
    }

    #[test]
    fn at_most_one_below_target_chunk_and_it_is_last() {
        let vocab = small_vocab();
        let abbrev = Abbreviations::shipped();
        let d = synthetic_doc("d", &[12, 14, 9, 30, 22, 5, 40, 13]);
        let sentences = segment_sentences(&d.text, &abbrev);
        let cfg = fixed_target_config(50);
        let chunks = chunk_document(&d, &sentences, &vocab, &cfg);
        let below: Vec<_> = chunks
            .iter()
            .filter(|c| c.token_count < 50)
            .collect();
        assert!(below.len() <= 1);
        if let Some(b) = below.first() {
            assert_eq!(b.index, chunks.last().unwrap().index);
        }
    }

    #[test]
    fn reassembly_preserves_sentence_order() {
        let vocab = small_vocab();
        let abbrev = Abbreviations::shipped();
        let d = synthetic_doc("d", &[15, 20, 25, 12, 18, 30]);
        let sentences = segment_sentences(&d.text, &abbrev);
        let chunks = chunk_document(&d, &sentences, &vocab, &fixed_target_config(30));
        let mut next = 0;
        for c in &chunks {
            assert_eq!(c.sentence_range.0, next);
            next = c.sentence_range.1 + 1;
        }
        let chars: Vec<char> = d.text.chars().collect();
        let rebuilt: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let expected: Vec<String> = sentences.iter().map(|s| s.slice(&chars)).collect();
        assert_eq!(rebuilt.join(" "), expected.join(" "));
    }

    #[test]
    fn deterministic_across_runs_and_threads() {
        let vocab = small_vocab();
        let abbrev = Abbreviations::shipped();
        let docs: Vec<Document> = (0..50)
            .map(|i| synthetic_doc(&format!("doc-{i}"), &[10 + i % 7, 20, 15, 30, 8]))
            .collect();
        let cfg = ChunkConfig::default();
        let (a, _) = chunk_corpus(&docs, &vocab, &abbrev, &cfg);
        let (b, _) = chunk_corpus(&docs, &vocab, &abbrev, &cfg);
        assert_eq!(a, b);

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (c, _) = pool.install(|| chunk_corpus(&docs, &vocab, &abbrev, &cfg));
        assert_eq!(a, c);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChunkConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.targets.push((5, 1.0));
        assert!(matches!(
            cfg.validate(),
            Err(ChunkConfigError::TargetBelowDiscard(5, 11))
        ));
        let bad = ChunkConfig {
            targets: vec![(30, 0.0)],
            ..ChunkConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ChunkConfigError::BadWeight(30, _))));
    }
}
