//! Labeled-dataset handling: stratified train/val/test splits and paragraph
//! construction for the retrieval pool.
//!
//! Single-label datasets are split with per-class largest-remainder
//! allocation, which keeps every class within one example of exact
//! proportionality. Multi-label datasets use greedy iterative
//! stratification: labels are processed rarest first and each example goes
//! to the split with the most unfilled demand for that label.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::keyed_rng;

/// One labeled text; `labels` is a singleton for single-label tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split fractions must be positive and sum to 1 (got {0:?})")]
    BadFractions((f64, f64, f64)),
    #[error("dataset is empty")]
    Empty,
    #[error("example {0:?} has no labels")]
    Unlabeled(String),
}

/// The three split partitions plus warnings about starved classes.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub warnings: Vec<String>,
}

impl Split {
    pub fn part(&self, i: usize) -> &[LabeledExample] {
        match i {
            0 => &self.train,
            1 => &self.val,
            _ => &self.test,
        }
    }

    /// Per-label counts per split, for the split report.
    pub fn label_counts(&self) -> BTreeMap<String, [u64; 3]> {
        let mut out: BTreeMap<String, [u64; 3]> = BTreeMap::new();
        for (i, part) in [&self.train, &self.val, &self.test].into_iter().enumerate() {
            for ex in part {
                for label in &ex.labels {
                    out.entry(label.clone()).or_default()[i] += 1;
                }
            }
        }
        out
    }
}

/// Partition examples into train/val/test maintaining label distribution.
/// Deterministic in (examples-as-set, fractions, seed): membership does not
/// depend on input order because examples are sorted by id before seeding.
pub fn stratified_split(
    examples: &[LabeledExample],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split, DatasetError> {
    let (ft, fv, fe) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fe > 0.0) || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadFractions(fractions));
    }
    if examples.is_empty() {
        return Err(DatasetError::Empty);
    }
    for ex in examples {
        if ex.labels.is_empty() {
            return Err(DatasetError::Unlabeled(ex.id.clone()));
        }
    }
    let mut sorted: Vec<&LabeledExample> = examples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let single_label = sorted.iter().all(|e| e.labels.len() == 1);
    let assignment = if single_label {
        split_single_label(&sorted, [ft, fv, fe], seed)
    } else {
        split_multi_label(&sorted, [ft, fv, fe], seed)
    };
    let (slots, warnings) = assignment;
    let mut parts: [Vec<LabeledExample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (ex, &slot) in sorted.iter().zip(&slots) {
        parts[slot].push((*ex).clone());
    }
    let [train, val, test] = parts;
    Ok(Split {
        train,
        val,
        test,
        warnings,
    })
}

/// Largest-remainder integer allocation of `n` items to the fractions.
/// Every entry is floor or ceil of its exact share.
fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..n - assigned {
        counts[order[i % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

fn split_single_label(
    sorted: &[&LabeledExample],
    fractions: [f64; 3],
    seed: u64,
) -> (Vec<usize>, Vec<String>) {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in sorted.iter().enumerate() {
        let label = ex.labels.iter().next().expect("validated non-empty");
        by_class.entry(label).or_default().push(i);
    }
    let mut slots = vec![0usize; sorted.len()];
    let mut warnings = Vec::new();
    for (label, mut members) in by_class {
        if members.len() < 3 {
            warnings.push(format!(
                "class {label:?} has {} examples, fewer than the 3 splits",
                members.len()
            ));
        }
        let mut rng = keyed_rng(seed, &[b"split", label.as_bytes()]);
        members.shuffle(&mut rng);
        let quota = largest_remainder(members.len(), fractions);
        let mut cursor = 0;
        for (split, &q) in quota.iter().enumerate() {
            for &idx in &members[cursor..cursor + q] {
                slots[idx] = split;
            }
            cursor += q;
        }
    }
    (slots, warnings)
}

fn split_multi_label(
    sorted: &[&LabeledExample],
    fractions: [f64; 3],
    seed: u64,
) -> (Vec<usize>, Vec<String>) {
    let n = sorted.len();
    // Desired examples per split, and per (label, split).
    let mut split_desired: [f64; 3] = [0.0; 3];
    for s in 0..3 {
        split_desired[s] = fractions[s] * n as f64;
    }
    let mut label_desired: BTreeMap<&str, [f64; 3]> = BTreeMap::new();
    let mut label_members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in sorted.iter().enumerate() {
        for label in &ex.labels {
            label_members.entry(label).or_default().push(i);
        }
    }
    for (label, members) in &label_members {
        let mut desired = [0.0; 3];
        for s in 0..3 {
            desired[s] = fractions[s] * members.len() as f64;
        }
        label_desired.insert(label, desired);
    }

    let mut slots = vec![usize::MAX; n];
    let mut warnings = Vec::new();
    for (label, members) in &label_members {
        if members.len() < 3 {
            warnings.push(format!(
                "label {label:?} has {} examples, fewer than the 3 splits",
                members.len()
            ));
        }
    }

    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut rng = keyed_rng(seed, &[b"split-multi"]);
    while !remaining.is_empty() {
        // Rarest label first: fewest unassigned carriers.
        let (label, mut members) = label_members
            .iter()
            .map(|(l, m)| {
                let open: Vec<usize> = m
                    .iter()
                    .copied()
                    .filter(|i| remaining.contains(i))
                    .collect();
                (*l, open)
            })
            .filter(|(_, open)| !open.is_empty())
            .min_by_key(|(l, open)| (open.len(), *l))
            .expect("remaining examples all carry some label");
        members.shuffle(&mut rng);
        for idx in members {
            let ex = sorted[idx];
            // Most-underfilled split for this label; ties by overall demand,
            // then lowest split index.
            let desired = label_desired[label];
            let best = (0..3)
                .max_by(|&a, &b| {
                    desired[a]
                        .partial_cmp(&desired[b])
                        .unwrap()
                        .then(split_desired[a].partial_cmp(&split_desired[b]).unwrap())
                        .then(b.cmp(&a))
                })
                .unwrap();
            slots[idx] = best;
            remaining.remove(&idx);
            split_desired[best] -= 1.0;
            for l in &ex.labels {
                label_desired.get_mut(l.as_str()).unwrap()[best] -= 1.0;
            }
        }
    }
    refine_multi_label(sorted, fractions, &mut slots);
    (slots, warnings)
}

/// Deterministic local repair after the greedy pass: move single examples
/// between splits while each move strictly decreases the summed squared
/// deviation from the exact per-label and per-split shares. The greedy
/// assignment alone can drift a few examples on co-occurring labels; this
/// pulls every label back toward proportionality.
fn refine_multi_label(sorted: &[&LabeledExample], fractions: [f64; 3], slots: &mut [usize]) {
    let n = sorted.len();
    let mut label_exact: BTreeMap<&str, [f64; 3]> = BTreeMap::new();
    let mut label_count: BTreeMap<&str, [f64; 3]> = BTreeMap::new();
    for (i, ex) in sorted.iter().enumerate() {
        for label in &ex.labels {
            let exact = label_exact.entry(label).or_insert([0.0; 3]);
            for s in 0..3 {
                exact[s] += fractions[s];
            }
            label_count.entry(label).or_insert([0.0; 3])[slots[i]] += 1.0;
        }
    }
    let mut size_count = [0.0f64; 3];
    for &s in slots.iter() {
        size_count[s] += 1.0;
    }
    let size_exact = [
        fractions[0] * n as f64,
        fractions[1] * n as f64,
        fractions[2] * n as f64,
    ];

    let dev = |count: f64, exact: f64| (count - exact) * (count - exact);
    for _pass in 0..200 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (idx, ex) in sorted.iter().enumerate() {
            let from = slots[idx];
            for to in 0..3 {
                if to == from {
                    continue;
                }
                let mut delta = dev(size_count[from] - 1.0, size_exact[from])
                    + dev(size_count[to] + 1.0, size_exact[to])
                    - dev(size_count[from], size_exact[from])
                    - dev(size_count[to], size_exact[to]);
                for label in &ex.labels {
                    let exact = label_exact[label.as_str()];
                    let count = label_count[label.as_str()];
                    delta += dev(count[from] - 1.0, exact[from])
                        + dev(count[to] + 1.0, exact[to])
                        - dev(count[from], exact[from])
                        - dev(count[to], exact[to]);
                }
                if delta < best.map_or(-1e-9, |(_, _, d)| d - 1e-12) {
                    best = Some((idx, to, delta));
                }
            }
        }
        let Some((idx, to, _)) = best else { break };
        let from = slots[idx];
        slots[idx] = to;
        size_count[from] -= 1.0;
        size_count[to] += 1.0;
        for label in &sorted[idx].labels {
            let count = label_count.get_mut(label.as_str()).unwrap();
            count[from] -= 1.0;
            count[to] += 1.0;
        }
    }
}

/// 2-3 concatenated sentences of one announcement with union labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub announcement_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
}

/// Group an announcement's sentences into paragraphs of 3; a lone trailing
/// sentence rebalances the last two groups to 2+2. A one-sentence
/// announcement keeps its single sentence.
pub fn build_paragraphs(
    announcement_id: &str,
    sentences: &[(String, BTreeSet<String>)],
) -> Vec<Paragraph> {
    let n = sentences.len();
    if n == 0 {
        return Vec::new();
    }
    let mut group_sizes: Vec<usize> = Vec::new();
    if n == 1 {
        group_sizes.push(1);
    } else {
        match n % 3 {
            0 => group_sizes.extend(std::iter::repeat(3).take(n / 3)),
            2 => {
                group_sizes.extend(std::iter::repeat(3).take(n / 3));
                group_sizes.push(2);
            }
            _ => {
                // n ≡ 1 (mod 3), n ≥ 4: rebalance the tail into 2+2.
                group_sizes.extend(std::iter::repeat(3).take(n / 3 - 1));
                group_sizes.push(2);
                group_sizes.push(2);
            }
        }
    }
    let mut paragraphs = Vec::with_capacity(group_sizes.len());
    let mut cursor = 0;
    for (i, size) in group_sizes.into_iter().enumerate() {
        let members = &sentences[cursor..cursor + size];
        cursor += size;
        let text: Vec<&str> = members.iter().map(|(t, _)| t.as_str()).collect();
        let labels: BTreeSet<String> = members
            .iter()
            .flat_map(|(_, ls)| ls.iter().cloned())
            .collect();
        paragraphs.push(Paragraph {
            id: format!("{announcement_id}-p{i}"),
            announcement_id: announcement_id.to_string(),
            text: text.join(" "),
            labels,
        });
    }
    paragraphs
}

/// For each topic, sample up to `per_topic` carrier paragraphs without
/// replacement; the pool is the union, deduplicated by paragraph id.
pub fn sample_topic_pool(
    paragraphs: &[Paragraph],
    per_topic: usize,
    topics: &[String],
    seed: u64,
) -> (Vec<Paragraph>, Vec<String>) {
    assert!(per_topic > 0, "per_topic must be positive");
    let mut picked: HashMap<&str, &Paragraph> = HashMap::new();
    let mut warnings = Vec::new();
    for topic in topics {
        let mut carriers: Vec<&Paragraph> = paragraphs
            .iter()
            .filter(|p| p.labels.contains(topic))
            .collect();
        carriers.sort_by(|a, b| a.id.cmp(&b.id));
        if carriers.is_empty() {
            warnings.push(format!("topic {topic:?} has no carrier paragraphs"));
            continue;
        }
        if carriers.len() < per_topic {
            warnings.push(format!(
                "topic {topic:?} has only {} carriers (wanted {per_topic}); taking all",
                carriers.len()
            ));
        }
        let mut rng = keyed_rng(seed, &[b"pool", topic.as_bytes()]);
        carriers.shuffle(&mut rng);
        for p in carriers.into_iter().take(per_topic) {
            picked.entry(&p.id).or_insert(p);
        }
    }
    let mut pool: Vec<Paragraph> = picked.values().map(|&p| p.clone()).collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    (pool, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, labels: &[&str]) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            text: format!("Text {id}"),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_label_counts_within_one_of_proportional() {
        let mut examples = Vec::new();
        for i in 0..6 {
            examples.push(ex(&format!("a{i}"), &["A"]));
        }
        for i in 0..4 {
            examples.push(ex(&format!("b{i}"), &["B"]));
        }
        let split = stratified_split(&examples, (0.8, 0.1, 0.1), 1).unwrap();
        let counts = split.label_counts();
        let a = counts["A"];
        let b = counts["B"];
        assert!((a[0] as f64 - 4.8).abs() <= 1.0, "train A = {}", a[0]);
        assert!((b[0] as f64 - 3.2).abs() <= 1.0, "train B = {}", b[0]);
        let total: u64 = a.iter().sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn degenerate_fractions_rejected() {
        let examples = vec![ex("a", &["A"])];
        assert!(matches!(
            stratified_split(&examples, (1.0, 0.0, 0.0), 1),
            Err(DatasetError::BadFractions(_))
        ));
    }

    #[test]
    fn same_seed_same_partitions() {
        let examples: Vec<_> = (0..50)
            .map(|i| ex(&format!("e{i}"), if i % 3 == 0 { &["A"] } else { &["B"] }))
            .collect();
        let a = stratified_split(&examples, (0.8, 0.1, 0.1), 9).unwrap();
        let b = stratified_split(&examples, (0.8, 0.1, 0.1), 9).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn input_order_does_not_change_membership() {
        let examples: Vec<_> = (0..30)
            .map(|i| ex(&format!("e{i:02}"), if i % 2 == 0 { &["A"] } else { &["B"] }))
            .collect();
        let mut reversed = examples.clone();
        reversed.reverse();
        let a = stratified_split(&examples, (0.6, 0.2, 0.2), 5).unwrap();
        let b = stratified_split(&reversed, (0.6, 0.2, 0.2), 5).unwrap();
        let ids = |part: &[LabeledExample]| -> BTreeSet<String> {
            part.iter().map(|e| e.id.clone()).collect()
        };
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
    }

    #[test]
    fn partitions_are_disjoint_and_exhaustive() {
        let examples: Vec<_> = (0..40)
            .map(|i| {
                let labels: &[&str] = match i % 4 {
                    0 => &["A"],
                    1 => &["B"],
                    2 => &["A", "B"],
                    _ => &["C", "A"],
                };
                ex(&format!("e{i}"), labels)
            })
            .collect();
        let split = stratified_split(&examples, (0.7, 0.2, 0.1), 3).unwrap();
        let mut all: Vec<String> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .map(|e| e.id.clone())
            .collect();
        all.sort();
        let mut expected: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn multi_label_shares_stay_close() {
        // 200 examples over 5 labels with overlaps.
        let examples: Vec<_> = (0..200)
            .map(|i| {
                let mut labels = vec![format!("L{}", i % 5)];
                if i % 7 == 0 {
                    labels.push(format!("L{}", (i + 1) % 5));
                }
                LabeledExample {
                    id: format!("e{i:03}"),
                    text: String::new(),
                    labels: labels.into_iter().collect(),
                }
            })
            .collect();
        let split = stratified_split(&examples, (0.8, 0.1, 0.1), 11).unwrap();
        for (label, counts) in split.label_counts() {
            let total: u64 = counts.iter().sum();
            for (s, f) in [(0usize, 0.8), (1, 0.1), (2, 0.1)] {
                let want = f * total as f64;
                assert!(
                    (counts[s] as f64 - want).abs() <= 2.0,
                    "label {label} split {s}: {} vs {want}",
                    counts[s]
                );
            }
        }
    }

    #[test]
    fn six_sentences_make_two_triples() {
        let sentences: Vec<(String, BTreeSet<String>)> = (0..6)
            .map(|i| (format!("Satz {i}."), BTreeSet::from([format!("T{}", i % 2)])))
            .collect();
        let ps = build_paragraphs("ann", &sentences);
        assert_eq!(ps.len(), 2);
        assert!(ps.iter().all(|p| p.text.split("Satz").count() == 4));
    }

    #[test]
    fn seven_sentences_rebalance_to_3_2_2() {
        let sentences: Vec<(String, BTreeSet<String>)> = (0..7)
            .map(|i| (format!("S{i}."), BTreeSet::from(["T".to_string()])))
            .collect();
        let ps = build_paragraphs("ann", &sentences);
        let sizes: Vec<usize> = ps.iter().map(|p| p.text.split(' ').count()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
    }

    #[test]
    fn lone_sentence_announcement_keeps_it() {
        let sentences = vec![("Nur einer.".to_string(), BTreeSet::from(["T".to_string()]))];
        let ps = build_paragraphs("ann", &sentences);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].text, "Nur einer.");
    }

    #[test]
    fn paragraph_labels_are_union() {
        let sentences = vec![
            ("A.".to_string(), BTreeSet::from(["A".to_string()])),
            ("B.".to_string(), BTreeSet::from(["B".to_string()])),
            ("C.".to_string(), BTreeSet::from(["A".to_string()])),
        ];
        let ps = build_paragraphs("ann", &sentences);
        assert_eq!(ps.len(), 1);
        assert_eq!(
            ps[0].labels,
            BTreeSet::from(["A".to_string(), "B".to_string()])
        );
    }

    fn paragraph(id: &str, labels: &[&str]) -> Paragraph {
        Paragraph {
            id: id.into(),
            announcement_id: "ann".into(),
            text: String::new(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn disjoint_carriers_fill_pool() {
        let mut paragraphs = Vec::new();
        for i in 0..600 {
            paragraphs.push(paragraph(&format!("a{i:03}"), &["A"]));
            paragraphs.push(paragraph(&format!("b{i:03}"), &["B"]));
        }
        let (pool, warnings) =
            sample_topic_pool(&paragraphs, 500, &["A".into(), "B".into()], 1);
        assert_eq!(pool.len(), 1000);
        assert!(warnings.is_empty());
    }

    #[test]
    fn starved_topic_takes_all_with_warning() {
        let paragraphs: Vec<_> = (0..50).map(|i| paragraph(&format!("p{i}"), &["A"])).collect();
        let (pool, warnings) = sample_topic_pool(&paragraphs, 500, &["A".into()], 1);
        assert_eq!(pool.len(), 50);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn overlapping_carriers_deduplicate() {
        let paragraphs: Vec<_> = (0..300)
            .map(|i| paragraph(&format!("p{i:03}"), &["A", "B"]))
            .collect();
        let (pool, _) = sample_topic_pool(&paragraphs, 200, &["A".into(), "B".into()], 1);
        assert!(pool.len() <= 300);
        let ids: BTreeSet<&str> = pool.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), pool.len(), "no duplicate ids");
        assert!(pool.len() >= 200);
    }

    #[test]
    fn absent_topic_warns_and_contributes_nothing() {
        let paragraphs = vec![paragraph("p0", &["A"])];
        let (pool, warnings) = sample_topic_pool(&paragraphs, 10, &["Z".into()], 1);
        assert!(pool.is_empty());
        assert_eq!(warnings.len(), 1);
    }
}
