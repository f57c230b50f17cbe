//! Exact-substring contamination checks against a reference corpus, and
//! the rank correlation used to relate leakage to downstream metrics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{load_corpus, tokenize, Corpus, Record};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: usize = 8;
const SEP: u32 = 0;

/// Unit of matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    /// Lowercased, punctuation-trimmed word tokens.
    #[default]
    Words,
    /// UTF-8 bytes of the untouched text.
    RawBytes,
}

/// Suffix array over u32 symbols in `[0, upper]`, built by induced sorting.
pub fn suffix_array(s: &[u32], upper: u32) -> Vec<usize> {
    let s: Vec<usize> = s.iter().map(|&c| c as usize).collect();
    sa_is(&s, upper as usize)
}

const NONE: usize = usize::MAX;

fn sa_is(s: &[usize], upper: usize) -> Vec<usize> {
    let n = s.len();
    match n {
        0 => return vec![],
        1 => return vec![0],
        2 => return if s[0] < s[1] { vec![0, 1] } else { vec![1, 0] },
        _ => {}
    }
    let mut ls = vec![false; n];
    for i in (0..n - 1).rev() {
        ls[i] = if s[i] == s[i + 1] {
            ls[i + 1]
        } else {
            s[i] < s[i + 1]
        };
    }
    let mut sum_l = vec![0usize; upper + 2];
    let mut sum_s = vec![0usize; upper + 2];
    for i in 0..n {
        if !ls[i] {
            sum_s[s[i]] += 1;
        } else {
            sum_l[s[i] + 1] += 1;
        }
    }
    for i in 0..=upper {
        sum_s[i] += sum_l[i];
        if i < upper {
            sum_l[i + 1] += sum_s[i];
        }
    }

    let mut sa = vec![NONE; n];
    let induce = |sa: &mut Vec<usize>, lms: &[usize]| {
        sa.fill(NONE);
        let mut buf = sum_s.clone();
        for &d in lms {
            if d == n {
                continue;
            }
            sa[buf[s[d]]] = d;
            buf[s[d]] += 1;
        }
        buf.copy_from_slice(&sum_l);
        sa[buf[s[n - 1]]] = n - 1;
        buf[s[n - 1]] += 1;
        for i in 0..n {
            let v = sa[i];
            if v != NONE && v >= 1 && !ls[v - 1] {
                sa[buf[s[v - 1]]] = v - 1;
                buf[s[v - 1]] += 1;
            }
        }
        buf.copy_from_slice(&sum_l);
        for i in (0..n).rev() {
            let v = sa[i];
            if v != NONE && v >= 1 && ls[v - 1] {
                buf[s[v - 1] + 1] -= 1;
                sa[buf[s[v - 1] + 1]] = v - 1;
            }
        }
    };

    let mut lms_map = vec![NONE; n + 1];
    let mut lms = Vec::new();
    for i in 1..n {
        if !ls[i - 1] && ls[i] {
            lms_map[i] = lms.len();
            lms.push(i);
        }
    }
    let m = lms.len();
    induce(&mut sa, &lms);

    if m > 0 {
        let mut sorted_lms: Vec<usize> =
            sa.iter().copied().filter(|&v| lms_map[v] != NONE).collect();
        let mut rec_s = vec![0usize; m];
        let mut rec_upper = 0;
        rec_s[lms_map[sorted_lms[0]]] = 0;
        for i in 1..m {
            let (mut l, mut r) = (sorted_lms[i - 1], sorted_lms[i]);
            let end_l = if lms_map[l] + 1 < m {
                lms[lms_map[l] + 1]
            } else {
                n
            };
            let end_r = if lms_map[r] + 1 < m {
                lms[lms_map[r] + 1]
            } else {
                n
            };
            let mut same = true;
            if end_l - l != end_r - r {
                same = false;
            } else {
                while l < end_l && s[l] == s[r] {
                    l += 1;
                    r += 1;
                }
                if l == n || s[l] != s[r] {
                    same = false;
                }
            }
            if !same {
                rec_upper += 1;
            }
            rec_s[lms_map[sorted_lms[i]]] = rec_upper;
        }
        let rec_sa = sa_is(&rec_s, rec_upper);
        for (slot, &j) in sorted_lms.iter_mut().zip(&rec_sa) {
            *slot = lms[j];
        }
        induce(&mut sa, &sorted_lms);
    }
    sa
}

/// Suffix-array index over a reference corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchIndex {
    mode: TokenMode,
    vocab: HashMap<String, u32>,
    /// Documents joined by [`SEP`].
    text: Vec<u32>,
    sa: Vec<usize>,
    documents: usize,
}

fn word_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_inner()
}

impl MatchIndex {
    pub fn build(reference: &Corpus, mode: TokenMode) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::domain("cannot index an empty reference corpus"));
        }
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut text = Vec::new();
        for (i, r) in reference.records().iter().enumerate() {
            if i > 0 {
                text.push(SEP);
            }
            match mode {
                TokenMode::Words => {
                    for t in word_tokens(&r.text) {
                        let next = vocab.len() as u32 + 1;
                        text.push(*vocab.entry(t).or_insert(next));
                    }
                }
                TokenMode::RawBytes => text.extend(r.text.bytes().map(|b| b as u32 + 1)),
            }
        }
        let upper = match mode {
            TokenMode::Words => vocab.len() as u32,
            TokenMode::RawBytes => 256,
        };
        let sa = suffix_array(&text, upper);
        Ok(MatchIndex {
            mode,
            vocab,
            text,
            sa,
            documents: reference.len(),
        })
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    /// Indexed symbols, separators included.
    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    /// Query symbols; `None` for words the reference never contains.
    pub fn encode(&self, text: &str) -> Vec<Option<u32>> {
        match self.mode {
            TokenMode::Words => word_tokens(text)
                .iter()
                .map(|t| self.vocab.get(t).copied())
                .collect(),
            TokenMode::RawBytes => text.bytes().map(|b| Some(b as u32 + 1)).collect(),
        }
    }

    #[inline]
    fn symbol(&self, pos: usize) -> i64 {
        self.text.get(pos).map_or(-1, |&c| c as i64)
    }

    /// Narrows `[lo, hi)`, whose suffixes share a prefix of length `depth`, to
    /// those continuing with `c`.
    fn narrow(&self, (lo, hi): (usize, usize), depth: usize, c: u32) -> Option<(usize, usize)> {
        let c = c as i64;
        let window = &self.sa[lo..hi];
        let a = window.partition_point(|&p| self.symbol(p + depth) < c);
        let b = window.partition_point(|&p| self.symbol(p + depth) <= c);
        (a < b).then_some((lo + a, lo + b))
    }

    fn find(&self, pattern: &[Option<u32>]) -> Option<(usize, usize)> {
        let mut range = (0, self.sa.len());
        for (depth, c) in pattern.iter().enumerate() {
            range = self.narrow(range, depth, (*c)?)?;
        }
        Some(range)
    }

    /// Longest match starting exactly at `q[0]`.
    fn match_from(&self, q: &[Option<u32>]) -> usize {
        let mut range = (0, self.sa.len());
        for (depth, c) in q.iter().enumerate() {
            match c.and_then(|c| self.narrow(range, depth, c)) {
                Some(r) => range = r,
                None => return depth,
            }
        }
        q.len()
    }

    /// Longest window of `q` occurring verbatim in one reference document.
    pub fn longest_match_symbols(&self, q: &[Option<u32>]) -> usize {
        let mut best = 0;
        let mut i = 0;
        while i + best < q.len() {
            match self.find(&q[i..=i + best]) {
                Some(mut range) => {
                    best += 1;
                    while i + best < q.len() {
                        match q[i + best].and_then(|c| self.narrow(range, best, c)) {
                            Some(r) => {
                                range = r;
                                best += 1;
                            }
                            None => break,
                        }
                    }
                    i += 1;
                }
                None => i += 1,
            }
        }
        best
    }

    pub fn longest_match(&self, r: &Record) -> usize {
        self.longest_match_symbols(&self.encode(&r.text))
    }

    /// Number of query symbols covered by some match of at least `threshold`.
    pub fn covered_symbols(&self, r: &Record, threshold: usize) -> (usize, usize) {
        let q = self.encode(&r.text);
        let mut covered_to = 0;
        let mut covered = 0;
        for i in 0..q.len() {
            let ml = self.match_from(&q[i..]);
            if ml >= threshold.max(1) {
                let end = i + ml;
                covered += end - covered_to.max(i);
                covered_to = covered_to.max(end);
            }
        }
        (covered, q.len())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageUnit {
    #[default]
    Records,
    Tokens,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub per_record: BTreeMap<String, usize>,
    pub leaked_fraction: f64,
    pub threshold_tokens: usize,
    pub unit: LeakageUnit,
    pub token_mode: TokenMode,
    pub reference_documents: usize,
}

/// Share of records (or symbols) whose match against the reference reaches `threshold`.
pub fn leakage_rate(
    idx: &MatchIndex,
    corpus: &Corpus,
    threshold: usize,
    unit: LeakageUnit,
) -> Result<LeakageReport> {
    if threshold == 0 {
        return Err(Error::domain("threshold_tokens must be >= 1"));
    }
    if corpus.is_empty() {
        return Err(Error::domain("leakage needs a non-empty corpus"));
    }
    let lengths: Vec<usize> = corpus
        .records()
        .par_iter()
        .map(|r| idx.longest_match(r))
        .collect();
    let leaked_fraction = match unit {
        LeakageUnit::Records => {
            lengths.iter().filter(|&&l| l >= threshold).count() as f64 / corpus.len() as f64
        }
        LeakageUnit::Tokens => {
            let (covered, total) = corpus
                .records()
                .par_iter()
                .map(|r| idx.covered_symbols(r, threshold))
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            if total == 0 {
                0.0
            } else {
                covered as f64 / total as f64
            }
        }
    };
    Ok(LeakageReport {
        per_record: corpus.ids().map(String::from).zip(lengths).collect(),
        leaked_fraction,
        threshold_tokens: threshold,
        unit,
        token_mode: idx.mode,
        reference_documents: idx.documents,
    })
}

/// Loads a reference corpus: JSONL records, or one document per non-empty line otherwise.
pub fn load_reference(path: &Path) -> Result<Corpus> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return load_corpus(path);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Record::new(format!("line-{}", i + 1), l))
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, records)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Spearman's rho with a two-sided Student-t p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::domain("spearman needs at least 3 pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::validation("spearman inputs must be finite"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = (n as f64 + 1.0) / 2.0;
    let sxy: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    let sxx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::domain(
            "rank correlation is undefined for a constant input",
        ));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::domain(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { rho, p_value, n })
}
