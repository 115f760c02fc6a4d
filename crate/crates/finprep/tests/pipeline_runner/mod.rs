//! Drives the compiled binary through every subcommand inside a fresh
//! temporary directory, with relative paths only, and returns the bytes of
//! every file in the directory afterwards. Used to check that reruns and
//! different thread counts produce identical outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

use crate::common;
use finprep::corpus::Document;
use finprep::datasets::LabeledExample;
use finprep::metrics::Labeling;
use finprep::qagen::{
    prompt_sha256, render_answer_prompt, render_question_prompt, truncate_context,
};
use finprep::retrieval::{EmbeddingSet, RetrievalQuery};
use finprep::segmenter::{segment_sentences, Abbreviations};

const N_DOCS: usize = 200;
const N_TOPICS: usize = 10;
const SEED: u64 = 7;

fn run_cmd(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_finprep"))
        .current_dir(dir)
        .args(["--config", "config.json", "--threads", &threads.to_string()])
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if output.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`finprep {}` exited with {:?}: {}",
            args.join(" "),
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ))
    }
}

fn qa_documents() -> Vec<Document> {
    (0..5)
        .map(|i| Document {
            id: format!("qa{i}"),
            source: "adhoc".into(),
            text: format!(
                "Der Bericht {i} nennt Alpha im ersten Satz. \
                 Die Bilanz nennt Beta. Der Vorstand nennt Gamma."
            ),
            published: None,
            labels: None,
        })
        .collect()
}

fn write_replay_fixture(dir: &Path) -> Result<(), String> {
    let abbrev = Abbreviations::shipped();
    let mut lines = String::new();
    let mut record = |prompt: &str, response: &str| {
        let obj = serde_json::json!({
            "prompt_sha256": prompt_sha256(prompt),
            "response": response,
        });
        lines.push_str(&obj.to_string());
        lines.push('\n');
    };
    for doc in qa_documents() {
        let chars: Vec<char> = doc.text.chars().collect();
        let sentences: Vec<String> = segment_sentences(&doc.text, &abbrev)
            .iter()
            .map(|s| s.slice(&chars))
            .collect();
        let context = truncate_context(&sentences).expect("non-empty context");
        record(
            &render_question_prompt(&context).map_err(|e| e.to_string())?,
            "1. Wer wird zuerst genannt?\n2. Wer folgt?\n3. Wer zuletzt?",
        );
        for (q, a) in [
            ("Wer wird zuerst genannt?", "Alpha"),
            ("Wer folgt?", "Beta"),
            ("Wer zuletzt?", "nicht enthalten"),
        ] {
            record(
                &render_answer_prompt(&context, q).map_err(|e| e.to_string())?,
                a,
            );
        }
    }
    std::fs::write(dir.join("replay.jsonl"), lines).map_err(|e| e.to_string())
}

fn topic_index(topic: &str) -> usize {
    topic.trim_start_matches(|c: char| !c.is_ascii_digit())
        .parse()
        .expect("topic names end in their index")
}

fn write_fixtures(dir: &Path) -> Result<(), String> {
    let topics = common::topic_names(N_TOPICS);
    let docs = common::synth_labeled_corpus(N_DOCS, 505, &topics);
    common::write_jsonl(&docs, dir.join("corpus.jsonl"));
    common::write_vocab(dir.join("vocab.txt"));
    std::fs::write(
        dir.join("config.json"),
        serde_json::json!({
            "seed": SEED,
            "vocab": "vocab.txt",
            "retrieval": {"pool_per_topic": 10, "k_max": 20},
            "qagen": {"replay_fixture": "replay.jsonl"},
        })
        .to_string(),
    )
    .map_err(|e| e.to_string())?;

    let queries: Vec<RetrievalQuery> = topics
        .iter()
        .map(|t| RetrievalQuery {
            id: format!("q-{t}"),
            topic: t.clone(),
            text: format!("Frage zu {t}"),
        })
        .collect();
    common::write_jsonl(&queries, dir.join("queries.jsonl"));

    let labeled: Vec<LabeledExample> = docs
        .iter()
        .map(|d| LabeledExample {
            id: d.id.clone(),
            text: String::new(),
            labels: d.labels.iter().flatten().cloned().collect(),
        })
        .collect();
    common::write_jsonl(&labeled, dir.join("labeled.jsonl"));

    let gold: Vec<Labeling> = labeled
        .iter()
        .map(|e| Labeling {
            id: e.id.clone(),
            labels: e.labels.clone(),
        })
        .collect();
    let pred: Vec<Labeling> = gold
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let labels = if i % 7 == 0 {
                BTreeSet::from([format!("topic{:02}", (i + 1) % N_TOPICS)])
            } else {
                g.labels.clone()
            };
            Labeling {
                id: g.id.clone(),
                labels,
            }
        })
        .collect();
    common::write_jsonl(&gold, dir.join("gold.jsonl"));
    common::write_jsonl(&pred, dir.join("pred.jsonl"));

    common::write_jsonl(&qa_documents(), dir.join("qa_docs.jsonl"));
    write_replay_fixture(dir)
}

/// Embeddings can only be written once the pool exists; they are a pure
/// function of the pooled paragraph ids, so they stay deterministic.
fn write_embeddings(dir: &Path) -> Result<(), String> {
    let pool_raw = std::fs::read_to_string(dir.join("pool.jsonl")).map_err(|e| e.to_string())?;
    let mut set = EmbeddingSet::new(N_TOPICS);
    for line in pool_raw.lines().filter(|l| !l.trim().is_empty()) {
        let p: finprep::datasets::Paragraph =
            serde_json::from_str(line).map_err(|e| e.to_string())?;
        let t = topic_index(p.labels.first().expect("pooled paragraphs are labeled"));
        set.insert(p.id.clone(), common::planted_embedding(t, N_TOPICS, &p.id, 0.5))
            .map_err(|e| e.to_string())?;
    }
    for t in 0..N_TOPICS {
        let id = format!("q-topic{t:02}");
        set.insert(id.clone(), common::planted_embedding(t, N_TOPICS, &id, 0.2))
            .map_err(|e| e.to_string())?;
    }
    let mut buf = Vec::new();
    set.write(&mut buf).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("embeddings.txt"), buf).map_err(|e| e.to_string())
}

/// Echo the generated gold answers back as predictions, so the QA
/// evaluation leg runs on ids that certainly exist.
fn write_qa_predictions(dir: &Path) -> Result<(), String> {
    let raw = std::fs::read_to_string(dir.join("squad.json")).map_err(|e| e.to_string())?;
    let dataset: finprep::qagen::SquadDataset =
        serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    let mut lines = String::new();
    for (_, qa) in dataset.records() {
        let obj = serde_json::json!({"id": qa.id, "text": qa.answers[0].text});
        lines.push_str(&obj.to_string());
        lines.push('\n');
    }
    std::fs::write(dir.join("pred_qa.jsonl"), lines).map_err(|e| e.to_string())
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).expect("readable dir") {
        let entry = entry.expect("dir entry");
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let name = path
                .strip_prefix(root)
                .expect("under root")
                .to_string_lossy()
                .into_owned();
            out.insert(name, std::fs::read(&path).expect("readable file"));
        }
    }
}

/// Run every subcommand once and return all resulting files keyed by
/// relative path.
pub fn run_pipeline(threads: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = dir.path();
    write_fixtures(dir)?;

    run_cmd(dir, threads, &["ingest", "--input", "corpus.jsonl", "--output", "kept.jsonl", "--errors", "errors.jsonl"])?;
    run_cmd(dir, threads, &["stats", "--input", "kept.jsonl", "--output", "stats.json"])?;
    run_cmd(dir, threads, &["chunk", "--input", "kept.jsonl", "--output", "chunks.jsonl", "--report", "chunk_report.json"])?;
    run_cmd(dir, threads, &["mlm", "--input", "chunks.jsonl", "--output", "mlm.bin"])?;
    run_cmd(dir, threads, &["paragraphs", "--input", "kept.jsonl", "--output", "paragraphs.jsonl"])?;
    run_cmd(dir, threads, &["pool", "--input", "paragraphs.jsonl", "--output", "pool.jsonl"])?;
    write_embeddings(dir)?;
    run_cmd(dir, threads, &["retrieve", "--input", "pool.jsonl", "--queries", "queries.jsonl", "--embeddings", "embeddings.txt", "--output", "curve.csv"])?;
    run_cmd(dir, threads, &["split", "--input", "labeled.jsonl", "--output-dir", "splits"])?;
    run_cmd(dir, threads, &["metrics", "--task", "classification", "--pred", "pred.jsonl", "--gold", "gold.jsonl", "--output", "metrics.json"])?;
    run_cmd(dir, threads, &["qagen", "--input", "qa_docs.jsonl", "--output", "squad.json", "--report", "qagen_report.json"])?;
    write_qa_predictions(dir)?;
    run_cmd(dir, threads, &["metrics", "--task", "qa", "--pred", "pred_qa.jsonl", "--gold", "squad.json", "--output", "metrics_qa.json"])?;

    let mut out = BTreeMap::new();
    collect_files(dir, dir, &mut out);
    Ok(out)
}
