//! Reference-free corpus quality, score-based filtering and utility arithmetic.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::outlier::ceil_fraction;

pub const DEFAULT_MAX_REFS: usize = 100;
pub const DEFAULT_ZIPF_TOP_K: usize = 5000;
pub const BLEU_ORDER: usize = 4;
pub const MIN_ZIPF_TYPES: usize = 10;

fn token_docs(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .records()
        .iter()
        .map(|r| tokenize(&r.text).into_inner())
        .collect()
}

pub fn distinct_n(corpus: &Corpus, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    let docs = token_docs(corpus);
    let mut seen: BTreeSet<&[String]> = BTreeSet::new();
    let mut total = 0usize;
    for d in &docs {
        for g in d.windows(n) {
            seen.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::domain(format!("no record has {n} or more tokens")));
    }
    Ok(seen.len() as f64 / total as f64)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU-4 with add-one smoothed modified precisions.
pub fn sentence_bleu(hyp: &[String], refs: &[&[String]]) -> f64 {
    if hyp.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=BLEU_ORDER {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let mut matched = 0usize;
        for (g, &c) in &hyp_counts {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(g).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            matched += c.min(max_ref);
        }
        let total = hyp.len().saturating_sub(n - 1);
        log_p += ((matched as f64 + 1.0) / (total as f64 + 1.0)).ln();
    }
    let c = hyp.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - hyp.len() as i64).abs(), l))
        .unwrap() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_p / BLEU_ORDER as f64).exp()
}

/// Mean BLEU-4 of each record against up to `max_refs` other records.
///
/// References are drawn from the id-sorted corpus with a generator seeded
/// by `seed` and the record id, so the value does not depend on record order.
pub fn self_bleu(corpus: &Corpus, max_refs: usize, seed: u64) -> Result<f64> {
    if corpus.len() < 2 {
        return Err(Error::domain("self-BLEU needs at least two records"));
    }
    if max_refs == 0 {
        return Err(Error::domain("max_refs must be >= 1"));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| corpus.records()[a].id.cmp(&corpus.records()[b].id));
    let docs = token_docs(corpus);
    let n = order.len();
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|pos| {
            let rec = &corpus.records()[order[pos]];
            let others = n - 1;
            let picks: Vec<usize> = if max_refs >= others {
                (0..others).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(rec.id.as_bytes()));
                let mut v = index::sample(&mut rng, others, max_refs).into_vec();
                v.sort_unstable();
                v
            };
            let refs: Vec<&[String]> = picks
                .into_iter()
                .map(|j| docs[order[if j >= pos { j + 1 } else { j }]].as_slice())
                .collect();
            sentence_bleu(&docs[order[pos]], &refs)
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfFit {
    pub slope: f64,
    pub r2: f64,
}

/// Least-squares fit of ln frequency on ln rank for the `top_k` commonest tokens.
pub fn zipf_fit(corpus: &Corpus, top_k: usize) -> Result<ZipfFit> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in token_docs(corpus) {
        for t in d {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    if counts.len() < MIN_ZIPF_TYPES {
        return Err(Error::domain(format!(
            "zipf fit needs at least {MIN_ZIPF_TYPES} distinct tokens, found {}",
            counts.len()
        )));
    }
    let mut freq: Vec<(String, usize)> = counts.into_iter().collect();
    freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    freq.truncate(top_k.max(2));
    let xs: Vec<f64> = (1..=freq.len()).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = freq.iter().map(|(_, f)| (*f as f64).ln()).collect();
    Ok(least_squares(&xs, &ys))
}

fn least_squares(xs: &[f64], ys: &[f64]) -> ZipfFit {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 || sxx == 0.0 {
        return ZipfFit {
            slope: 0.0,
            r2: 0.0,
        };
    }
    let slope = sxy / sxx;
    ZipfFit {
        slope,
        r2: (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub sd: f64,
}

/// Token-count mean and population standard deviation.
pub fn length_stats(corpus: &Corpus) -> Result<LengthStats> {
    if corpus.is_empty() {
        return Err(Error::domain("length statistics need a non-empty corpus"));
    }
    let lens: Vec<f64> = token_docs(corpus).iter().map(|d| d.len() as f64).collect();
    Ok(summary(&lens)
        .map(|a| LengthStats {
            mean: a.mean,
            sd: a.sd,
        })
        .unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreAggregate {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

fn summary(values: &[f64]) -> Option<ScoreAggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(ScoreAggregate {
        count: values.len(),
        mean,
        sd: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFile {
    pub name: String,
    pub scores: BTreeMap<String, f64>,
    pub aggregate: ScoreAggregate,
    /// Scored ids absent from the reference corpus.
    pub unknown_ids: Vec<String>,
}

#[derive(Deserialize)]
struct ScoreLine {
    id: String,
    score: f64,
}

/// Reads `{"id", "score"}` lines; the aggregate is keyed by the file stem.
pub fn ingest_scores(path: &Path, known_ids: Option<&BTreeSet<String>>) -> Result<ScoreFile> {
    let mut scores = BTreeMap::new();
    for (line, s) in jsonl::read_lines::<ScoreLine>(path)? {
        if !s.score.is_finite() {
            return Err(Error::validation(format!(
                "{}:{line}: score is not finite",
                path.display()
            )));
        }
        if scores.insert(s.id.clone(), s.score).is_some() {
            return Err(Error::validation(format!(
                "{}:{line}: duplicate id {:?}",
                path.display(),
                s.id
            )));
        }
    }
    let values: Vec<f64> = scores.values().copied().collect();
    let aggregate = summary(&values)
        .ok_or_else(|| Error::validation(format!("score file {} is empty", path.display())))?;
    let unknown_ids: Vec<String> = match known_ids {
        Some(known) => scores
            .keys()
            .filter(|id| !known.contains(*id))
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    if !unknown_ids.is_empty() {
        log::warn!(
            "{}: {} ids not in corpus",
            path.display(),
            unknown_ids.len()
        );
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into());
    Ok(ScoreFile {
        name,
        scores,
        aggregate,
        unknown_ids,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Threshold(f64),
    TopFraction(f64),
}

/// Keeps records scoring at least `t`, or the top `⌈f·N⌉` (ties broken by id), in corpus order.
pub fn filter_by_score(
    corpus: &Corpus,
    scores: &BTreeMap<String, f64>,
    mode: FilterMode,
) -> Result<Corpus> {
    let missing: Vec<String> = corpus
        .ids()
        .filter(|id| !scores.contains_key(*id))
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: "scores for corpus records".into(),
            missing,
        });
    }
    let keep: BTreeSet<&str> = match mode {
        FilterMode::Threshold(t) => corpus.ids().filter(|id| scores[*id] >= t).collect(),
        FilterMode::TopFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::domain(format!(
                    "top fraction must lie in (0, 1], got {f}"
                )));
            }
            let mut ranked: Vec<&str> = corpus.ids().collect();
            ranked.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then_with(|| a.cmp(b)));
            ranked.truncate(ceil_fraction(f, ranked.len()));
            ranked.into_iter().collect()
        }
    };
    let records = corpus
        .records()
        .iter()
        .filter(|r| keep.contains(r.id.as_str()))
        .cloned()
        .collect();
    Corpus::new(corpus.name.clone(), records)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityTriple {
    pub f1_syn: f64,
    pub f1_real: f64,
    pub f1_random: f64,
    pub f1_majority: f64,
}

/// `(f1_syn − b) / (f1_real − b)` with `b` the stronger trivial baseline.
pub fn relative_improvement(u: UtilityTriple) -> Result<f64> {
    let vals = [u.f1_syn, u.f1_real, u.f1_random, u.f1_majority];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("F1 scores must be finite"));
    }
    let b = u.f1_random.max(u.f1_majority);
    if u.f1_real <= b {
        return Err(Error::domain(format!(
            "real-data F1 {} does not exceed the baseline {b}",
            u.f1_real
        )));
    }
    Ok((u.f1_syn - b) / (u.f1_real - b))
}

/// One row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub dataset: String,
    pub classifier: String,
    pub method: String,
    pub epsilon: String,
    pub f1_syn: f64,
    pub f1_real: f64,
    pub f1_random: f64,
    pub f1_majority: f64,
}

impl UtilityRow {
    pub fn triple(&self) -> UtilityTriple {
        UtilityTriple {
            f1_syn: self.f1_syn,
            f1_real: self.f1_real,
            f1_random: self.f1_random,
            f1_majority: self.f1_majority,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    pub max_refs: usize,
    pub zipf_top_k: usize,
    pub seed: u64,
}

impl Default for QualityParams {
    fn default() -> Self {
        QualityParams {
            max_refs: DEFAULT_MAX_REFS,
            zipf_top_k: DEFAULT_ZIPF_TOP_K,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub self_bleu: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub zipf_slope: f64,
    pub zipf_r2: f64,
    pub mean_len: f64,
    pub sd_len: f64,
    pub ingested: BTreeMap<String, ScoreAggregate>,
    pub params: QualityParams,
}

pub fn quality_report(
    corpus: &Corpus,
    params: QualityParams,
    scores: &[ScoreFile],
) -> Result<QualityReport> {
    let zipf = zipf_fit(corpus, params.zipf_top_k)?;
    let lens = length_stats(corpus)?;
    let mut ingested = BTreeMap::new();
    for s in scores {
        if ingested.insert(s.name.clone(), s.aggregate).is_some() {
            return Err(Error::validation(format!(
                "two score files named {:?}",
                s.name
            )));
        }
    }
    Ok(QualityReport {
        self_bleu: self_bleu(corpus, params.max_refs, params.seed)?,
        distinct1: distinct_n(corpus, 1)?,
        distinct2: distinct_n(corpus, 2)?,
        zipf_slope: zipf.slope,
        zipf_r2: zipf.r2,
        mean_len: lens.mean,
        sd_len: lens.sd,
        ingested,
        params,
    })
}
