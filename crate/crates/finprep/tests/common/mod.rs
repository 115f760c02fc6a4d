//! Shared fixtures for integration tests: a deterministic synthetic German
//! corpus whose token-count distribution is calibrated to the production
//! corpus shape (median ~440 tokens, 90th percentile ~1030, a small
//! heavy tail of very long filings), plus a vocabulary covering it.

// Not every test target uses every fixture helper.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;

use finprep::corpus::Document;
use finprep::seeding::keyed_rng;
use finprep::wordpiece::VocabTable;

/// Words that can open a sentence (the segmenter needs an uppercase start).
pub const CAP_WORDS: &[&str] = &[
    "Der", "Die", "Das", "Umsatz", "Gewinn", "Vorstand", "Konzern", "Bilanz",
    "Aktie", "Quartal", "Bericht", "Dividende",
];

/// Mid-sentence words; roughly a third are German stopwords so the
/// language filter keeps every document.
pub const LOWER_WORDS: &[&str] = &[
    "der", "die", "das", "und", "im", "von", "mit", "auf", "für", "nicht",
    "wurde", "wird", "sind", "hat", "bei", "erlös", "stieg", "sank", "deutlich",
    "leicht", "gegenüber", "vorjahr", "prozent", "millionen", "euro", "ergebnis",
    "geschäftsjahr", "segment", "markt", "kunden", "produkte", "wachstum",
    "belastet", "erwartet", "prognose", "gesteigert",
];

/// Vocabulary lines covering every synthetic word as a single token, so a
/// 10-word sentence plus its period costs exactly 11 tokens.
pub fn vocab_lines() -> Vec<String> {
    let mut lines: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    lines.extend(CAP_WORDS.iter().map(|s| s.to_string()));
    lines.extend(LOWER_WORDS.iter().map(|s| s.to_string()));
    lines.push(".".to_string());
    lines.push(",".to_string());
    lines
}

pub fn vocab() -> VocabTable {
    VocabTable::from_lines(vocab_lines()).expect("synthetic vocab is well-formed")
}

pub fn write_vocab(path: impl AsRef<Path>) {
    std::fs::write(path.as_ref(), vocab_lines().join("\n") + "\n").expect("write vocab");
}

/// Tokens-per-document draw: 98% log-normal around the 440-token median,
/// 2% log-uniform on [2000, 40000] for the heavy tail of long filings.
pub fn draw_token_target(rng: &mut impl Rng) -> f64 {
    if rng.gen::<f64>() < 0.98 {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        440.0 * (0.62 * z).exp()
    } else {
        (2000f64.ln() + rng.gen::<f64>() * (40000f64.ln() - 2000f64.ln())).exp()
    }
}

/// One synthetic sentence: an uppercase opener, nine lowercase words, and a
/// period — exactly 11 vocabulary tokens.
pub fn synth_sentence(rng: &mut impl Rng) -> String {
    let mut words = Vec::with_capacity(10);
    words.push(CAP_WORDS[rng.gen_range(0..CAP_WORDS.len())].to_string());
    for _ in 0..9 {
        words.push(LOWER_WORDS[rng.gen_range(0..LOWER_WORDS.len())].to_string());
    }
    words.join(" ") + "."
}

/// A document of whole 11-token sentences approximating `target` tokens.
pub fn synth_document(id: &str, source: &str, target: f64, rng: &mut impl Rng) -> Document {
    let sentences = ((target / 11.0).round() as usize).max(1);
    let text = (0..sentences)
        .map(|_| synth_sentence(rng))
        .collect::<Vec<_>>()
        .join(" ");
    Document {
        id: id.to_string(),
        source: source.to_string(),
        text,
        published: None,
        labels: None,
    }
}

/// A corpus of `n` documents, fully determined by `seed`.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let mut rng = keyed_rng(seed, &[b"synthdoc", &(i as u64).to_le_bytes()]);
            let target = draw_token_target(&mut rng);
            let source = if i % 3 == 0 { "adhoc" } else { "bundesanzeiger" };
            synth_document(&format!("doc{i:06}"), source, target, &mut rng)
        })
        .collect()
}

/// Like [`synth_corpus`] but every document carries one topic label,
/// round-robin over `topics`.
pub fn synth_labeled_corpus(n: usize, seed: u64, topics: &[String]) -> Vec<Document> {
    let mut docs = synth_corpus(n, seed);
    for (i, doc) in docs.iter_mut().enumerate() {
        doc.labels = Some(vec![topics[i % topics.len()].clone()]);
    }
    docs
}

pub fn topic_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("topic{i:02}")).collect()
}

/// Deterministic pseudo-embedding for an id: topic carriers cluster around
/// their topic's axis so planted relevance aligns with cosine ranking.
pub fn planted_embedding(topic_index: usize, dims: usize, id: &str, spread: f64) -> Vec<f64> {
    let mut rng = keyed_rng(97, &[b"emb", id.as_bytes()]);
    let mut v = vec![0.0; dims];
    v[topic_index % dims] = 1.0;
    for x in v.iter_mut() {
        *x += spread * (rng.gen::<f64>() - 0.5);
    }
    v
}

pub fn write_jsonl<T: serde::Serialize>(items: &[T], path: impl AsRef<Path>) {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializes"));
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).expect("write jsonl");
}
