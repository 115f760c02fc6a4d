//! Zero-shot passage-retrieval harness: embed-agnostic cosine ranking of a
//! paragraph pool against topic queries, and per-k mean-nDCG curves.
//!
//! Embeddings are consumed from files (or an HTTP provider), never computed
//! in-process; the harness is decoupled from any particular encoder. Ties
//! in cosine score break by ascending paragraph id so output is
//! deterministic.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::Paragraph;
use crate::metrics::ndcg_at_k;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot read embedding file: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file must start with a 'dim=<d>' header")]
    MissingHeader,
    #[error("malformed embedding record at line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("vector {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("vector {0:?} has a non-finite component")]
    NonFinite(String),
    #[error("vector {0:?} is zero; cosine undefined")]
    ZeroVector(String),
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: {0} vs {1}")]
    IncompatibleDimensions(usize, usize),
    #[error("pool is empty")]
    EmptyPool,
    #[error("embedding provider: {0}")]
    Provider(String),
}

/// All vectors of one embedding space, keyed by item id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    pub dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(dimension: usize) -> Self {
        EmbeddingSet {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: String, vector: Vec<f64>) -> Result<(), RetrievalError> {
        if vector.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                id,
                got: vector.len(),
                expected: self.dimension,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite(id));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Parse the `dim=<d>` header plus one `id<TAB>v1 v2 ... vd` record per
    /// line. The header dimension governs; mismatches are rejected with the
    /// offending id.
    pub fn read(reader: impl Read) -> Result<Self, RetrievalError> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or(RetrievalError::MissingHeader)??;
        let dimension: usize = header
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or(RetrievalError::MissingHeader)?;
        let mut set = EmbeddingSet::new(dimension);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 2;
            let (id, rest) = line.split_once('\t').ok_or(RetrievalError::BadRecord {
                line: line_no,
                reason: "missing tab separator".into(),
            })?;
            let vector: Vec<f64> = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|e| RetrievalError::BadRecord {
                        line: line_no,
                        reason: format!("bad float {v:?}: {e}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            set.insert(id.to_string(), vector)?;
        }
        Ok(set)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Serialize in the same `dim=` format; records sorted by id.
    pub fn write(&self, mut writer: impl std::io::Write) -> std::io::Result<()> {
        writeln!(writer, "dim={}", self.dimension)?;
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        for id in ids {
            let values: Vec<String> = self.vectors[id].iter().map(|v| v.to_string()).collect();
            writeln!(writer, "{id}\t{}", values.join(" "))?;
        }
        writer.flush()
    }
}

/// A topic query for the retrieval pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub id: String,
    pub topic: String,
    pub text: String,
}

/// Ranked pool for one query, scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub ranking: Vec<(String, f64)>,
    /// relevance bit per rank: paragraph labels contain the query topic.
    pub relevances: Vec<bool>,
}

/// Cosine similarity of two equal-dimension non-zero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::IncompatibleDimensions(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector("<anonymous>".into()));
    }
    Ok(dot / (na * nb))
}

/// Rank the full pool against one query by descending cosine.
pub fn rank(
    query: &RetrievalQuery,
    pool: &[Paragraph],
    embeddings: &EmbeddingSet,
) -> Result<RankedList, RetrievalError> {
    let qvec = embeddings
        .get(&query.id)
        .ok_or_else(|| RetrievalError::MissingEmbedding(query.id.clone()))?;
    let mut scored: Vec<(&Paragraph, f64)> = Vec::with_capacity(pool.len());
    for paragraph in pool {
        let pvec = embeddings
            .get(&paragraph.id)
            .ok_or_else(|| RetrievalError::MissingEmbedding(paragraph.id.clone()))?;
        let score = cosine(qvec, pvec)
            .map_err(|_| RetrievalError::ZeroVector(paragraph.id.clone()))?;
        scored.push((paragraph, score));
    }
    scored.sort_by(|(pa, sa), (pb, sb)| {
        sb.partial_cmp(sa)
            .expect("finite scores")
            .then_with(|| pa.id.cmp(&pb.id))
    });
    Ok(RankedList {
        query_id: query.id.clone(),
        relevances: scored
            .iter()
            .map(|(p, _)| p.labels.contains(&query.topic))
            .collect(),
        ranking: scored
            .into_iter()
            .map(|(p, s)| (p.id.clone(), s))
            .collect(),
    })
}

/// One point of the mean-nDCG curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_ndcg: f64,
    pub n_queries_included: usize,
}

/// Per-k mean nDCG over all queries with at least one relevant pool item.
/// `total_relevant` for a query is the count of pool paragraphs carrying
/// its topic; queries without any are excluded and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub queries_total: usize,
    pub queries_excluded: usize,
}

impl Curve {
    /// Deterministic CSV: columns k, mean_ndcg, n_queries_included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mean_ndcg,n_queries_included\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{:.12},{}", p.k, p.mean_ndcg, p.n_queries_included);
        }
        out
    }
}

/// Rank every query against the pool and evaluate nDCG over `k_range`.
pub fn evaluate_curve(
    queries: &[RetrievalQuery],
    pool: &[Paragraph],
    embeddings: &EmbeddingSet,
    k_range: impl IntoIterator<Item = usize>,
) -> Result<Curve, RetrievalError> {
    if pool.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let ranked: Vec<(RankedList, usize)> = queries
        .par_iter()
        .map(|q| {
            let total_relevant = pool.iter().filter(|p| p.labels.contains(&q.topic)).count();
            rank(q, pool, embeddings).map(|r| (r, total_relevant))
        })
        .collect::<Result<_, _>>()?;
    let excluded = ranked.iter().filter(|(_, tr)| *tr == 0).count();
    let mut points = Vec::new();
    for k in k_range {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (list, total_relevant) in &ranked {
            if let Some(v) = ndcg_at_k(&list.relevances, k, *total_relevant)
                .map_err(|_| RetrievalError::EmptyPool)?
            {
                sum += v;
                n += 1;
            }
        }
        points.push(CurvePoint {
            k,
            mean_ndcg: if n == 0 { 0.0 } else { sum / n as f64 },
            n_queries_included: n,
        });
    }
    Ok(Curve {
        points,
        queries_total: queries.len(),
        queries_excluded: excluded,
    })
}
