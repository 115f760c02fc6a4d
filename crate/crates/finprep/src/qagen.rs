//! Extractive question-answering dataset generation: prompt an LLM for three
//! German questions per announcement, then for substring answers, validate
//! that every answer really is a slice of its context, and emit the result
//! as a SQuAD-v1-style JSON file.
//!
//! The LLM is abstracted behind [`LlmClient`]; production uses an HTTP chat
//! endpoint, tests and offline reruns use a replay fixture keyed by the
//! SHA-256 of the prompt, which makes generation fully deterministic.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Contexts longer than this many sentences are cut down to fit a BERT
/// input window in downstream use.
pub const MAX_CONTEXT_SENTENCES: usize = 15;

const QUESTION_TEMPLATE: &str = "Create three questions for the following text. It should be possible to answer the question with a substring of the input text. The questions should ask for different aspects of the input. The questions should be in German.\n\nText: <<context>>\nQuestion:";

const ANSWER_TEMPLATE: &str = "You have given a text and a question to that text. Find the answer as a substring of the input text. It is crucial that the answer is contained exactly as a substring in the input text, even if this implies that the answer is not a full sentence. Example:\n\nText: 'Herr M\u{fc}ller ist 37 Jahre alt.'\nQuestion: 'Wie alt ist Herr M\u{fc}ller?'\nAnswer: '37 Jahre'\n\nText: <<context>>\nQuestion: <<question>>\nAnswer:";

#[derive(Debug, Error)]
pub enum QagenError {
    #[error("context must not be empty")]
    EmptyContext,
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("expected exactly 3 questions, parsed {0}")]
    QuestionCount(usize),
    #[error("transport: {0}")]
    Transport(String),
    #[error("no replayed response for prompt hash {0}")]
    MissingReplay(String),
    #[error("cannot read replay fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed replay record at line {line}: {reason}")]
    BadFixture { line: usize, reason: String },
    #[error("cannot serialize dataset: {0}")]
    Json(#[from] serde_json::Error),
}

/// One validated context/question/answer triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub context: String,
    pub question: String,
    pub answer: String,
    /// Unicode scalar offset of the answer's first occurrence in `context`.
    pub answer_start: usize,
}

/// Outcome tally for one generation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenReport {
    pub contexts_processed: usize,
    pub contexts_skipped_empty: usize,
    pub contexts_failed_parse: usize,
    pub contexts_failed_transport: usize,
    pub questions_generated: usize,
    pub duplicate_questions_removed: usize,
    pub answers_validated: usize,
    pub answers_discarded: usize,
    pub retries_used: usize,
}

impl GenReport {
    pub fn merge(&mut self, other: &GenReport) {
        self.contexts_processed += other.contexts_processed;
        self.contexts_skipped_empty += other.contexts_skipped_empty;
        self.contexts_failed_parse += other.contexts_failed_parse;
        self.contexts_failed_transport += other.contexts_failed_transport;
        self.questions_generated += other.questions_generated;
        self.duplicate_questions_removed += other.duplicate_questions_removed;
        self.answers_validated += other.answers_validated;
        self.answers_discarded += other.answers_discarded;
        self.retries_used += other.retries_used;
    }
}

/// Join the first 15 sentences of an announcement into one context string.
/// Returns `None` for an empty announcement so the caller can report the
/// skip rather than emit an empty context.
pub fn truncate_context(sentences: &[String]) -> Option<String> {
    if sentences.is_empty() {
        return None;
    }
    let take = sentences.len().min(MAX_CONTEXT_SENTENCES);
    Some(
        sentences[..take]
            .iter()
            .map(|s| s.trim())
            .collect::<Vec<_>>()
            .join(" "),
    )
}

/// Instantiate the question-generation prompt for one context.
pub fn render_question_prompt(context: &str) -> Result<String, QagenError> {
    if context.is_empty() {
        return Err(QagenError::EmptyContext);
    }
    Ok(QUESTION_TEMPLATE.replace("<<context>>", context))
}

/// Instantiate the answer-extraction prompt, including the fixed few-shot
/// example, for one context/question pair.
pub fn render_answer_prompt(context: &str, question: &str) -> Result<String, QagenError> {
    if context.is_empty() {
        return Err(QagenError::EmptyContext);
    }
    if question.is_empty() {
        return Err(QagenError::EmptyQuestion);
    }
    Ok(ANSWER_TEMPLATE
        .replace("<<context>>", context)
        .replace("<<question>>", question))
}

fn strip_list_prefix(line: &str) -> &str {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix("Frage") {
        let rest = rest.trim_start();
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit());
        if let Some(rest) = rest.trim_start().strip_prefix(':') {
            s = rest.trim_start();
        }
    }
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(stripped) = rest
            .strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .or_else(|| rest.strip_prefix(':'))
        {
            s = stripped.trim_start();
        }
    }
    for marker in ['-', '*', '\u{2022}'] {
        if let Some(rest) = s.strip_prefix(marker) {
            s = rest.trim_start();
        }
    }
    s.trim()
}

/// Split an LLM response into exactly three questions, tolerating list
/// numbering and blank lines. Anything other than three survivors is a
/// parse failure.
pub fn parse_questions(llm_output: &str) -> Result<[String; 3], QagenError> {
    let questions: Vec<String> = llm_output
        .lines()
        .map(strip_list_prefix)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    match <[String; 3]>::try_from(questions) {
        Ok(qs) => Ok(qs),
        Err(v) => Err(QagenError::QuestionCount(v.len())),
    }
}

const QUOTE_PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('\u{201e}', '\u{201c}'),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
    ('\u{ab}', '\u{bb}'),
    ('\u{bb}', '\u{ab}'),
];

fn strip_quotes(answer: &str) -> &str {
    let s = answer.trim();
    for &(open, close) in QUOTE_PAIRS {
        if let Some(rest) = s.strip_prefix(open) {
            if let Some(inner) = rest.strip_suffix(close) {
                if !inner.is_empty() {
                    return inner.trim();
                }
            }
        }
    }
    s
}

/// Locate an LLM answer in its context. The answer is trimmed of
/// surrounding whitespace and one pair of quotes; the interior is matched
/// byte-for-byte. Returns the cleaned answer plus the Unicode scalar
/// offset of its first occurrence, or `None` if the context does not
/// contain it.
pub fn validate_answer(context: &str, answer: &str) -> Option<(String, usize)> {
    let cleaned = strip_quotes(answer);
    if cleaned.is_empty() {
        return None;
    }
    let byte_pos = context.find(cleaned)?;
    let scalar_pos = context[..byte_pos].chars().count();
    Some((cleaned.to_string(), scalar_pos))
}

/// Minimal chat interface: one prompt in, one completion out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, QagenError>;
}

/// Hex SHA-256 of a prompt, the replay-fixture key.
pub fn prompt_sha256(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

#[derive(Debug, Deserialize)]
struct ReplayRecord {
    prompt_sha256: String,
    response: String,
}

/// Offline client answering from a recorded prompt-hash → response table.
#[derive(Debug, Default)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a response under the hash of `prompt`.
    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_sha256(prompt), response.into());
    }

    /// Load a JSONL fixture of `{prompt_sha256, response}` records.
    pub fn read(reader: impl Read) -> Result<Self, QagenError> {
        let mut client = ReplayClient::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord =
                serde_json::from_str(&line).map_err(|e| QagenError::BadFixture {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            client.responses.insert(record.prompt_sha256, record.response);
        }
        Ok(client)
    }

    pub fn read_path(path: impl AsRef<std::path::Path>) -> Result<Self, QagenError> {
        Self::read(std::fs::File::open(path)?)
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String, QagenError> {
        let key = prompt_sha256(prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or(QagenError::MissingReplay(key))
    }
}

/// Chat-completions HTTP client. The API key comes from the environment;
/// endpoint, model, and temperature from configuration.
pub struct HttpLlmClient {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpLlmClient {
    pub fn from_env(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        temperature: f64,
        key_var: &str,
    ) -> Result<Self, QagenError> {
        let api_key = std::env::var(key_var)
            .map_err(|_| QagenError::Transport(format!("environment variable {key_var} not set")))?;
        Ok(HttpLlmClient {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature,
            api_key,
            http: reqwest::blocking::Client::new(),
        })
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, QagenError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .and_then(reqwest::blocking::Response::error_for_status)
            .map_err(|e| QagenError::Transport(e.to_string()))?;
        let value: serde_json::Value = response
            .json()
            .map_err(|e| QagenError::Transport(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| QagenError::Transport("response missing message content".into()))
    }
}

/// Generation knobs. `retries` bounds re-sends after transport errors;
/// validation failures are never retried, matching the discard-on-mismatch
/// policy. `min_interval` rate-limits outbound calls.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub retries: usize,
    pub concurrency: usize,
    pub min_interval: Duration,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            retries: 0,
            concurrency: 4,
            min_interval: Duration::ZERO,
        }
    }
}

/// An announcement entering QA generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaContextInput {
    pub id: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadAnswer {
    pub text: String,
    pub answer_start: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadQa {
    pub id: String,
    pub question: String,
    pub answers: Vec<SquadAnswer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquadArticle {
    pub paragraphs: Vec<SquadParagraph>,
}

/// SQuAD-v1-style dataset container.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SquadDataset {
    pub data: Vec<SquadArticle>,
}

impl SquadDataset {
    pub fn records(&self) -> impl Iterator<Item = (&SquadParagraph, &SquadQa)> {
        self.data
            .iter()
            .flat_map(|a| &a.paragraphs)
            .flat_map(|p| p.qas.iter().map(move |qa| (p, qa)))
    }

    pub fn len(&self) -> usize {
        self.records().count()
    }

    pub fn is_empty(&self) -> bool {
        self.records().next().is_none()
    }
}

struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            last: Mutex::new(None),
        }
    }

    fn wait(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let sleep_for = {
            let mut last = self.last.lock().unwrap();
            let now = Instant::now();
            let wait = match *last {
                Some(prev) => self
                    .min_interval
                    .checked_sub(now.duration_since(prev))
                    .unwrap_or(Duration::ZERO),
                None => Duration::ZERO,
            };
            *last = Some(now + wait);
            wait
        };
        if !sleep_for.is_zero() {
            std::thread::sleep(sleep_for);
        }
    }
}

fn call_with_retry(
    client: &dyn LlmClient,
    limiter: &RateLimiter,
    prompt: &str,
    retries: usize,
    retries_used: &mut usize,
) -> Result<String, QagenError> {
    let mut attempt = 0;
    loop {
        limiter.wait();
        match client.complete(prompt) {
            Ok(response) => return Ok(response),
            Err(e) => {
                if attempt >= retries {
                    return Err(e);
                }
                attempt += 1;
                *retries_used += 1;
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
        }
    }
}

fn process_context(
    input: &QaContextInput,
    client: &dyn LlmClient,
    limiter: &RateLimiter,
    config: &GenConfig,
) -> (Option<SquadParagraph>, GenReport) {
    let mut report = GenReport::default();
    let Some(context) = truncate_context(&input.sentences) else {
        report.contexts_skipped_empty += 1;
        return (None, report);
    };
    report.contexts_processed += 1;

    let question_prompt = match render_question_prompt(&context) {
        Ok(p) => p,
        Err(_) => {
            report.contexts_skipped_empty += 1;
            report.contexts_processed -= 1;
            return (None, report);
        }
    };
    let raw = match call_with_retry(
        client,
        limiter,
        &question_prompt,
        config.retries,
        &mut report.retries_used,
    ) {
        Ok(r) => r,
        Err(_) => {
            report.contexts_failed_transport += 1;
            return (None, report);
        }
    };
    let questions = match parse_questions(&raw) {
        Ok(qs) => qs,
        Err(_) => {
            report.contexts_failed_parse += 1;
            return (None, report);
        }
    };
    report.questions_generated += questions.len();

    let mut unique: Vec<String> = Vec::with_capacity(3);
    for q in questions {
        if unique.contains(&q) {
            report.duplicate_questions_removed += 1;
        } else {
            unique.push(q);
        }
    }

    let mut qas = Vec::new();
    for (qi, question) in unique.iter().enumerate() {
        let prompt = match render_answer_prompt(&context, question) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let raw_answer = match call_with_retry(
            client,
            limiter,
            &prompt,
            config.retries,
            &mut report.retries_used,
        ) {
            Ok(r) => r,
            Err(_) => {
                report.contexts_failed_transport += 1;
                continue;
            }
        };
        match validate_answer(&context, &raw_answer) {
            Some((answer, answer_start)) => {
                report.answers_validated += 1;
                qas.push(SquadQa {
                    id: format!("{}-q{}", input.id, qi + 1),
                    question: question.clone(),
                    answers: vec![SquadAnswer {
                        text: answer,
                        answer_start,
                    }],
                });
            }
            None => report.answers_discarded += 1,
        }
    }

    let paragraph = if qas.is_empty() {
        None
    } else {
        Some(SquadParagraph { context, qas })
    };
    (paragraph, report)
}

/// Run the full Appendix pipeline over the announcements: one question call
/// per context, three answer calls, substring validation, SQuAD assembly.
/// In-flight requests are bounded by `config.concurrency`; output order
/// always matches input order.
pub fn generate(
    contexts: &[QaContextInput],
    client: &dyn LlmClient,
    config: &GenConfig,
) -> (SquadDataset, GenReport) {
    use rayon::prelude::*;

    let limiter = RateLimiter::new(config.min_interval);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency.max(1))
        .build()
        .expect("qagen thread pool");
    let results: Vec<(Option<SquadParagraph>, GenReport)> = pool.install(|| {
        contexts
            .par_iter()
            .map(|input| process_context(input, client, &limiter, config))
            .collect()
    });

    let mut report = GenReport::default();
    let mut paragraphs = Vec::new();
    for (paragraph, partial) in results {
        report.merge(&partial);
        if let Some(p) = paragraph {
            paragraphs.push(p);
        }
    }
    let dataset = if paragraphs.is_empty() {
        SquadDataset::default()
    } else {
        SquadDataset {
            data: vec![SquadArticle { paragraphs }],
        }
    };
    (dataset, report)
}
