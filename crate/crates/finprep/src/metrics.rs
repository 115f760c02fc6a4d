//! Evaluation measures: accuracy, macro/micro F1 for (multi-)label
//! classification, SQuAD-style exact match and token-overlap F1, and
//! binary-relevance DCG/nDCG.
//!
//! Conventions: per-class F1 with a zero denominator is 0 (not skipped), so
//! macro F1 stays defined; answer normalization does not strip articles;
//! nDCG uses the log2(i+1) discount from rank 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wordpiece::is_punctuation;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction/gold ids do not align: {0:?}")]
    IdMismatch(Vec<String>),
    #[error("label {0:?} outside the label set")]
    UnknownLabel(String),
    #[error("empty label set")]
    EmptyLabelSet,
    #[error("k must be at least 1")]
    BadK,
}

/// One example's predicted or gold label set, keyed by example id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Labeling {
    pub id: String,
    pub labels: BTreeSet<String>,
}

/// Per-class true positives, false positives and false negatives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub per_class: BTreeMap<String, (u64, u64, u64)>,
}

/// Count per-label binary TP/FP/FN over aligned predictions and golds.
/// Single-label classification is the singleton special case.
pub fn confusion_counts(
    preds: &[Labeling],
    golds: &[Labeling],
    label_set: &BTreeSet<String>,
) -> Result<ClassCounts, MetricsError> {
    if label_set.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    let gold_by_id: HashMap<&str, &BTreeSet<String>> =
        golds.iter().map(|g| (g.id.as_str(), &g.labels)).collect();
    let mut offenders: Vec<String> = preds
        .iter()
        .filter(|p| !gold_by_id.contains_key(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if preds.len() != golds.len() || !offenders.is_empty() {
        let pred_ids: BTreeSet<&str> = preds.iter().map(|p| p.id.as_str()).collect();
        offenders.extend(
            golds
                .iter()
                .filter(|g| !pred_ids.contains(g.id.as_str()))
                .map(|g| g.id.clone()),
        );
        return Err(MetricsError::IdMismatch(offenders));
    }
    let mut counts = ClassCounts::default();
    for label in label_set {
        counts.per_class.insert(label.clone(), (0, 0, 0));
    }
    for pred in preds {
        let gold = gold_by_id[pred.id.as_str()];
        for label in pred.labels.union(gold) {
            if !label_set.contains(label) {
                return Err(MetricsError::UnknownLabel(label.clone()));
            }
            let slot = counts.per_class.get_mut(label).expect("inserted above");
            match (pred.labels.contains(label), gold.contains(label)) {
                (true, true) => slot.0 += 1,
                (true, false) => slot.1 += 1,
                (false, true) => slot.2 += 1,
                (false, false) => unreachable!("label came from the union"),
            }
        }
    }
    Ok(counts)
}

fn f1_from(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of per-class F1 scores.
pub fn f1_macro(counts: &ClassCounts) -> Result<f64, MetricsError> {
    if counts.per_class.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    let sum: f64 = counts
        .per_class
        .values()
        .map(|&(tp, fp, fn_)| f1_from(tp, fp, fn_))
        .sum();
    Ok(sum / counts.per_class.len() as f64)
}

/// F1 over counts pooled across classes.
pub fn f1_micro(counts: &ClassCounts) -> Result<f64, MetricsError> {
    if counts.per_class.is_empty() {
        return Err(MetricsError::EmptyLabelSet);
    }
    let (tp, fp, fn_) = counts
        .per_class
        .values()
        .fold((0, 0, 0), |(a, b, c), &(tp, fp, fn_)| {
            (a + tp, b + fp, c + fn_)
        });
    Ok(f1_from(tp, fp, fn_))
}

/// Exact-match rate over examples; full label-set equality in multi-label.
pub fn accuracy(preds: &[Labeling], golds: &[Labeling]) -> Result<f64, MetricsError> {
    let gold_by_id: HashMap<&str, &BTreeSet<String>> =
        golds.iter().map(|g| (g.id.as_str(), &g.labels)).collect();
    let offenders: Vec<String> = preds
        .iter()
        .filter(|p| !gold_by_id.contains_key(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if preds.len() != golds.len() || !offenders.is_empty() {
        return Err(MetricsError::IdMismatch(offenders));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds
        .iter()
        .filter(|p| gold_by_id[p.id.as_str()] == &p.labels)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// QA answer normalization: lowercase, strip punctuation characters,
/// collapse whitespace runs, trim.
pub fn normalize_answer(text: &str) -> String {
    let stripped: String = text
        .to_lowercase()
        .chars()
        .map(|c| if is_punctuation(c) { ' ' } else { c })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1 iff the normalized prediction equals any normalized gold answer.
pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    assert!(!golds.is_empty(), "gold answers must be non-empty");
    let p = normalize_answer(pred);
    golds.iter().any(|g| normalize_answer(g) == p) as u8
}

/// Max over golds of the harmonic mean of token precision/recall on
/// whitespace tokens of the normalized strings (bag semantics with
/// multiplicity). Both sides empty after normalization scores 1.
pub fn token_f1(pred: &str, golds: &[String]) -> f64 {
    assert!(!golds.is_empty(), "gold answers must be non-empty");
    let p = normalize_answer(pred);
    let pred_tokens: Vec<&str> = p.split_whitespace().collect();
    golds
        .iter()
        .map(|g| {
            let g = normalize_answer(g);
            let gold_tokens: Vec<&str> = g.split_whitespace().collect();
            single_token_f1(&pred_tokens, &gold_tokens)
        })
        .fold(0.0, f64::max)
}

fn single_token_f1(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *bag.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(n) = bag.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Binary-relevance nDCG@k.
///
/// DCG@k sums rel_i / log2(i+1) over the first min(k, |list|) ranks; the
/// ideal DCG places all `total_relevant` relevant items first. Returns
/// `None` when `total_relevant` is 0 (undefined; callers exclude the query
/// from averages and report the count).
pub fn ndcg_at_k(
    relevances: &[bool],
    k: usize,
    total_relevant: usize,
) -> Result<Option<f64>, MetricsError> {
    if k < 1 {
        return Err(MetricsError::BadK);
    }
    debug_assert!(total_relevant >= relevances.iter().filter(|&&r| r).count());
    if total_relevant == 0 {
        return Ok(None);
    }
    let dcg: f64 = relevances
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &rel)| rel)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(total_relevant))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Ok(Some(dcg / idcg))
}

/// Mean and (sample) standard deviation, for aggregating per-seed scores.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
