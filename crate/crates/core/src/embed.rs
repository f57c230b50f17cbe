//! Per-record embedding vectors and the distance primitives built on them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::validation(format!("unknown metric {other:?}"))),
        }
    }
}

impl Metric {
    /// Distance between two equal-length vectors.
    ///
    /// Cosine distance is `1 - cos(a, b)` and fails on a zero-norm input.
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        debug_assert_eq!(a.len(), b.len());
        if a == b {
            if self == Metric::Cosine && norm(a) == 0.0 {
                return Err(Error::domain("cosine distance of a zero-norm vector"));
            }
            return Ok(0.0);
        }
        match self {
            Metric::Euclidean => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()),
            Metric::Cosine => {
                let (na, nb) = (norm(a), norm(b));
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::domain("cosine distance of a zero-norm vector"));
                }
                Ok(cosine_from_parts(dot(a, b), na, nb))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// N×d matrix of record embeddings, row-aligned with `ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Vec<f64>,
    dim: usize,
    metric: Metric,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>, metric: Metric) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::validation(format!(
                "{} ids but {} vectors",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && dim == 0 {
            return Err(Error::validation("embedding dimension must be at least 1"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "ragged embeddings: {id:?} has dimension {} but expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "embedding for {id:?} contains a non-finite value"
                )));
            }
            data.extend_from_slice(row);
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::validation(format!("duplicate embedding id {dup:?}")));
        }
        Ok(EmbeddingMatrix {
            ids,
            data,
            dim,
            metric,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.ids.len())
    }

    /// Distance between rows `i` and `j` under the matrix metric.
    pub fn pairwise_distance(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.len() || j >= self.len() {
            return Err(Error::domain(format!(
                "row index out of range ({i}, {j}) for {} rows",
                self.len()
            )));
        }
        self.metric.distance(self.row(i), self.row(j))
    }

    /// Arithmetic mean of the rows.
    pub fn centroid(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::domain("centroid of an empty matrix"));
        }
        let mut acc = vec![0.0; self.dim];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Row norms, used to avoid recomputation in all-pairs cosine loops.
    pub(crate) fn norms(&self) -> Vec<f64> {
        self.rows().map(norm).collect()
    }

    /// Distance with precomputed norms. Same result as [`Self::pairwise_distance`].
    pub(crate) fn distance_cached(&self, norms: &[f64], i: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.row(i), self.row(j));
        match self.metric {
            Metric::Euclidean => self.metric.distance(a, b),
            Metric::Cosine => {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    return Err(Error::domain(format!(
                        "cosine distance with zero-norm embedding {:?}",
                        if norms[i] == 0.0 {
                            &self.ids[i]
                        } else {
                            &self.ids[j]
                        }
                    )));
                }
                if a == b {
                    return Ok(0.0);
                }
                Ok(cosine_from_parts(dot(a, b), norms[i], norms[j]))
            }
        }
    }

    /// Reorders rows to follow `ids`; every id must be present.
    pub fn aligned_to<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let pos: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut out_ids = Vec::new();
        let mut rows = Vec::new();
        let mut missing = Vec::new();
        for id in ids {
            match pos.get(id) {
                Some(&i) => {
                    out_ids.push(id.to_string());
                    rows.push(self.row(i).to_vec());
                }
                None => missing.push(id.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Coverage {
                what: "embeddings".into(),
                missing,
            });
        }
        EmbeddingMatrix::new(out_ids, rows, self.metric)
    }
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: String,
    vector: Vec<f64>,
}

/// Loads `{"id", "vector"}` lines and aligns them to corpus order.
pub fn load_embeddings(path: &Path, corpus: &Corpus, metric: Metric) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_id: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingLine = match serde_json::from_str(line) {
            Ok(v) => v,
            // Python's json module writes bare NaN/Infinity tokens.
            Err(_) if line.contains("NaN") || line.contains("Infinity") => {
                return Err(Error::validation(format!(
                    "{}:{}: vector contains a non-finite value",
                    path.display(),
                    idx + 1
                )))
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        };
        if by_id.insert(parsed.id.clone(), parsed.vector).is_some() {
            return Err(Error::validation(format!(
                "{}:{}: duplicate embedding id {:?}",
                path.display(),
                idx + 1,
                parsed.id
            )));
        }
    }
    let missing: Vec<String> = corpus
        .ids()
        .filter(|id| !by_id.contains_key(*id))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: format!("embeddings in {}", path.display()),
            missing,
        });
    }
    let ids: Vec<String> = corpus.ids().map(str::to_string).collect();
    let rows = ids
        .iter()
        .map(|id| by_id.remove(id).unwrap_or_default())
        .collect();
    EmbeddingMatrix::new(ids, rows, metric)
}

/// 64-bit FNV-1a; stable across platforms and runs.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_NGRAM_RANGE: (usize, usize) = (1, 2);

/// Signed feature-hashed TF-IDF over token n-grams, L2-normalised per row.
///
/// IDF is the smoothed `ln((1 + N) / (1 + df)) + 1`, computed over exact
/// n-gram strings before hashing.
pub fn hash_embed(
    corpus: &Corpus,
    dim: usize,
    ngram_range: (usize, usize),
) -> Result<EmbeddingMatrix> {
    let (lo, hi) = ngram_range;
    if dim < 8 {
        return Err(Error::domain(format!(
            "hash_embed dim must be >= 8, got {dim}"
        )));
    }
    if !(1 <= lo && lo <= hi && hi <= 3) {
        return Err(Error::domain(format!(
            "ngram_range must satisfy 1 <= lo <= hi <= 3, got ({lo}, {hi})"
        )));
    }
    let per_record: Vec<HashMap<String, f64>> = corpus
        .records()
        .iter()
        .map(|r| {
            let toks = tokenize(&r.text);
            let mut tf: HashMap<String, f64> = HashMap::new();
            for n in lo..=hi {
                for w in toks.windows(n) {
                    *tf.entry(w.join("\u{1f}")).or_default() += 1.0;
                }
            }
            tf
        })
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for tf in &per_record {
        for g in tf.keys() {
            *df.entry(g.as_str()).or_default() += 1;
        }
    }
    let n_docs = corpus.len() as f64;
    let mut rows = Vec::with_capacity(corpus.len());
    for (record, tf) in corpus.records().iter().zip(&per_record) {
        if tf.is_empty() {
            return Err(Error::domain(format!(
                "record {:?} has no tokens to embed",
                record.id
            )));
        }
        let mut v = vec![0.0; dim];
        // Sorted so that float accumulation order is fixed.
        let mut grams: Vec<(&String, &f64)> = tf.iter().collect();
        grams.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (gram, count) in grams {
            let h = fnv1a(gram.as_bytes());
            let idf = ((1.0 + n_docs) / (1.0 + df[gram.as_str()] as f64)).ln() + 1.0;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign * count * idf;
        }
        let nv = norm(&v);
        if nv == 0.0 {
            return Err(Error::domain(format!(
                "record {:?} hashed to a zero vector",
                record.id
            )));
        }
        v.iter_mut().for_each(|x| *x /= nv);
        rows.push(v);
    }
    EmbeddingMatrix::new(
        corpus.ids().map(str::to_string).collect(),
        rows,
        Metric::Cosine,
    )
}
