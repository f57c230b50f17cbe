//! Reference-based fidelity: MAUVE over embeddings, entity-type divergence
//! and token-length divergence between a real and a synthetic corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::embed::{EmbeddingMatrix, Metric};
use crate::error::{Error, Result};
use crate::jsonl;

pub const DEFAULT_MAUVE_C: f64 = 5.0;
pub const DEFAULT_LAMBDAS: usize = 99;
pub const DEFAULT_ENTITY_ALPHA: f64 = 0.5;
pub const DEFAULT_LENGTH_BINS: usize = 20;
pub const LENGTH_ALPHA: f64 = 0.5;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;
const SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDist {
    pub categories: Vec<String>,
    pub probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(categories: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if categories.len() != probs.len() {
            return Err(Error::validation(format!(
                "{} categories but {} probabilities",
                categories.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::validation("probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::validation(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(CategoricalDist { categories, probs })
    }

    /// `(c_i + α) / (Σc + α·k)` over the given categories.
    pub fn smoothed(categories: Vec<String>, counts: &[f64], alpha: f64) -> Result<Self> {
        let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
        if total.is_nan() || total <= 0.0 {
            return Err(Error::domain("cannot normalise an empty histogram"));
        }
        let probs = counts.iter().map(|c| (c + alpha) / total).collect();
        CategoricalDist::new(categories, probs)
    }

    fn aligned(&self, other: &CategoricalDist) -> Result<()> {
        if self.categories != other.categories {
            return Err(Error::validation(
                "distributions are over different categories",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// KL(real ‖ synthetic).
    #[default]
    Kl,
    /// Jensen–Shannon, natural log.
    Js,
}

impl std::str::FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "js" => Ok(Divergence::Js),
            other => Err(Error::validation(format!("unknown divergence {other:?}"))),
        }
    }
}

fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            if qi > 0.0 {
                pi * (pi / qi).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn kl_divergence(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    p.aligned(q)?;
    Ok(kl_raw(&p.probs, &q.probs))
}

pub fn js_divergence(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    p.aligned(q)?;
    let m: Vec<f64> = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Ok(0.5 * kl_raw(&p.probs, &m) + 0.5 * kl_raw(&q.probs, &m))
}

pub fn divergence(kind: Divergence, p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    match kind {
        Divergence::Kl => kl_divergence(p, q),
        Divergence::Js => js_divergence(p, q),
    }
}

/// `min(500, ⌊n/10⌋)`, never below 2.
pub fn default_clusters(n_total: usize) -> usize {
    (n_total / 10).clamp(2, 500)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// Lloyd's algorithm; returns per-point cluster assignments.
pub(crate) fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(points, k, &mut rng);
    let mut prev_obj = f64::INFINITY;
    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let nearest_all: Vec<(usize, f64)> =
            points.par_iter().map(|p| nearest(&centers, p)).collect();
        let obj: f64 = nearest_all.iter().map(|(_, d)| d).sum();
        debug_assert!(
            obj <= prev_obj * (1.0 + 1e-9) + 1e-12,
            "k-means objective rose"
        );
        for (a, (j, _)) in assign.iter_mut().zip(&nearest_all) {
            *a = *j;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assign) {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if prev_obj.is_finite() && prev_obj - obj <= KMEANS_TOL * prev_obj.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_obj = obj;
    }
    assign
}

fn normalized_rows(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    m.rows()
        .map(|r| match m.metric() {
            Metric::Euclidean => r.to_vec(),
            Metric::Cosine => {
                let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    r.iter().map(|x| x / n).collect()
                } else {
                    r.to_vec()
                }
            }
        })
        .collect()
}

/// Clusters the pooled rows and returns the real and synthetic histograms.
///
/// Smoothing: `p_i = (c_i + 1/k) / (N + 1)`.
pub fn kmeans_quantize(
    real: &EmbeddingMatrix,
    syn: &EmbeddingMatrix,
    k: usize,
    seed: u64,
) -> Result<(CategoricalDist, CategoricalDist)> {
    if real.is_empty() || syn.is_empty() {
        return Err(Error::domain(
            "k-means quantisation needs non-empty embedding matrices",
        ));
    }
    if real.dim() != syn.dim() {
        return Err(Error::validation(format!(
            "embedding dimensions differ: {} vs {}",
            real.dim(),
            syn.dim()
        )));
    }
    let n = real.len() + syn.len();
    if k < 2 || k > n {
        return Err(Error::domain(format!("k must lie in [2, {n}], got {k}")));
    }
    let mut pooled = normalized_rows(real);
    pooled.extend(normalized_rows(&syn.clone().with_metric(real.metric())));
    let assign = kmeans(&pooled, k, seed);
    let categories: Vec<String> = (0..k).map(|j| format!("c{j}")).collect();
    let hist = |slice: &[usize]| {
        let mut c = vec![0.0; k];
        for &j in slice {
            c[j] += 1.0;
        }
        let total = slice.len() as f64 + 1.0;
        let probs = c.iter().map(|ci| (ci + 1.0 / k as f64) / total).collect();
        CategoricalDist::new(categories.clone(), probs)
    };
    Ok((hist(&assign[..real.len()])?, hist(&assign[real.len()..])?))
}

/// Area under the divergence frontier between `p` and `q`.
pub fn mauve(p: &CategoricalDist, q: &CategoricalDist, c: f64, lambdas: usize) -> Result<f64> {
    p.aligned(q)?;
    if c.is_nan() || c <= 0.0 || lambdas == 0 {
        return Err(Error::domain("mauve needs c > 0 and at least one lambda"));
    }
    let mut curve: Vec<(f64, f64)> = (1..=lambdas)
        .map(|i| {
            let lam = i as f64 / (lambdas + 1) as f64;
            let r: Vec<f64> = p
                .probs
                .iter()
                .zip(&q.probs)
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect();
            (
                (-c * kl_raw(&q.probs, &r)).exp(),
                (-c * kl_raw(&p.probs, &r)).exp(),
            )
        })
        .collect();
    curve.push((0.0, 1.0));
    curve.push((1.0, 0.0));
    curve.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Entity-type multiset per record id.
pub type EntityTags = BTreeMap<String, Vec<String>>;

#[derive(Deserialize)]
struct EntityLine {
    id: String,
    #[serde(default)]
    entities: Vec<EntityMention>,
}

#[derive(Deserialize)]
struct EntityMention {
    #[serde(rename = "type")]
    kind: String,
}

/// Reads `{"id": ..., "entities": [{"type": ...}, ...]}` lines.
pub fn load_entities(path: &Path) -> Result<EntityTags> {
    let mut tags = EntityTags::new();
    for (line, e) in jsonl::read_lines::<EntityLine>(path)? {
        if tags
            .insert(
                e.id.clone(),
                e.entities.into_iter().map(|m| m.kind).collect(),
            )
            .is_some()
        {
            return Err(Error::validation(format!(
                "{}:{line}: duplicate id {:?}",
                path.display(),
                e.id
            )));
        }
    }
    Ok(tags)
}

fn entity_counts(tags: &EntityTags) -> BTreeMap<&str, f64> {
    let mut counts = BTreeMap::new();
    for kinds in tags.values() {
        for k in kinds {
            *counts.entry(k.as_str()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Pooled entity-type distributions, add-α smoothed over the union of types.
pub fn entity_distributions(
    real: &EntityTags,
    syn: &EntityTags,
    alpha: f64,
) -> Result<(CategoricalDist, CategoricalDist)> {
    let (rc, sc) = (entity_counts(real), entity_counts(syn));
    if rc.is_empty() || sc.is_empty() {
        return Err(Error::domain("entity tag files contain no entities"));
    }
    let types: BTreeSet<&str> = rc.keys().chain(sc.keys()).copied().collect();
    let categories: Vec<String> = types.iter().map(|t| t.to_string()).collect();
    let counts = |c: &BTreeMap<&str, f64>| {
        types
            .iter()
            .map(|t| c.get(t).copied().unwrap_or(0.0))
            .collect::<Vec<_>>()
    };
    Ok((
        CategoricalDist::smoothed(categories.clone(), &counts(&rc), alpha)?,
        CategoricalDist::smoothed(categories, &counts(&sc), alpha)?,
    ))
}

pub fn entity_divergence(real: &EntityTags, syn: &EntityTags, kind: Divergence) -> Result<f64> {
    let (p, q) = entity_distributions(real, syn, DEFAULT_ENTITY_ALPHA)?;
    divergence(kind, &p, &q)
}

fn token_lengths(c: &Corpus) -> Vec<usize> {
    c.records()
        .iter()
        .map(|r| tokenize(&r.text).len())
        .collect()
}

/// Token-length histograms over `bins` equal-width bins of the pooled range.
pub fn length_distributions(
    real: &Corpus,
    syn: &Corpus,
    bins: usize,
) -> Result<(CategoricalDist, CategoricalDist)> {
    if real.is_empty() || syn.is_empty() {
        return Err(Error::domain("length divergence needs non-empty corpora"));
    }
    if bins == 0 {
        return Err(Error::domain("bins must be >= 1"));
    }
    let (rl, sl) = (token_lengths(real), token_lengths(syn));
    let lo = *rl.iter().chain(&sl).min().unwrap() as f64;
    let hi = *rl.iter().chain(&sl).max().unwrap() as f64;
    let width = (hi - lo) / bins as f64;
    let bin_of = |l: usize| {
        if width == 0.0 {
            0
        } else {
            (((l as f64 - lo) / width) as usize).min(bins - 1)
        }
    };
    let hist = |ls: &[usize]| {
        let mut h = vec![0.0; bins];
        for &l in ls {
            h[bin_of(l)] += 1.0;
        }
        h
    };
    let categories: Vec<String> = (0..bins)
        .map(|b| {
            format!(
                "[{:.1},{:.1})",
                lo + b as f64 * width,
                lo + (b + 1) as f64 * width
            )
        })
        .collect();
    Ok((
        CategoricalDist::smoothed(categories.clone(), &hist(&rl), LENGTH_ALPHA)?,
        CategoricalDist::smoothed(categories, &hist(&sl), LENGTH_ALPHA)?,
    ))
}

pub fn length_divergence(
    real: &Corpus,
    syn: &Corpus,
    bins: usize,
    kind: Divergence,
) -> Result<f64> {
    let (p, q) = length_distributions(real, syn, bins)?;
    divergence(kind, &p, &q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityParams {
    pub mauve_c: f64,
    pub mauve_lambdas: usize,
    /// `None` selects `min(500, ⌊N/10⌋)`.
    pub mauve_clusters: Option<usize>,
    pub entity_alpha: f64,
    pub length_bins: usize,
    pub length_alpha: f64,
    pub divergence: Divergence,
    pub seed: u64,
}

impl Default for FidelityParams {
    fn default() -> Self {
        FidelityParams {
            mauve_c: DEFAULT_MAUVE_C,
            mauve_lambdas: DEFAULT_LAMBDAS,
            mauve_clusters: None,
            entity_alpha: DEFAULT_ENTITY_ALPHA,
            length_bins: DEFAULT_LENGTH_BINS,
            length_alpha: LENGTH_ALPHA,
            divergence: Divergence::Kl,
            seed: 42,
        }
    }
}

/// One side of a fidelity comparison: the corpus and whatever annotations exist for it.
#[derive(Clone, Copy)]
pub struct FidelitySide<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: Option<&'a EmbeddingMatrix>,
    pub entities: Option<&'a EntityTags>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityScores {
    pub mauve: Option<f64>,
    pub entity_divergence: Option<f64>,
    pub length_divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mauve: Option<f64>,
    pub entity_divergence: Option<f64>,
    pub length_divergence: f64,
    /// Same metrics for real vs. a held-out real split, when one is given.
    pub reference_floor: Option<FidelityScores>,
    pub params: FidelityParams,
}

pub fn compare(
    a: FidelitySide,
    b: FidelitySide,
    params: &FidelityParams,
) -> Result<FidelityScores> {
    let mauve_val = match (a.embeddings, b.embeddings) {
        (Some(ea), Some(eb)) => {
            let k = params
                .mauve_clusters
                .unwrap_or_else(|| default_clusters(ea.len() + eb.len()));
            let (p, q) = kmeans_quantize(ea, eb, k, params.seed)?;
            Some(mauve(&p, &q, params.mauve_c, params.mauve_lambdas)?)
        }
        _ => None,
    };
    let entity = match (a.entities, b.entities) {
        (Some(ta), Some(tb)) => {
            let (p, q) = entity_distributions(ta, tb, params.entity_alpha)?;
            Some(divergence(params.divergence, &p, &q)?)
        }
        _ => None,
    };
    let (p, q) = length_distributions(a.corpus, b.corpus, params.length_bins)?;
    Ok(FidelityScores {
        mauve: mauve_val,
        entity_divergence: entity,
        length_divergence: divergence(params.divergence, &p, &q)?,
    })
}

pub fn fidelity_report(
    real: FidelitySide,
    syn: FidelitySide,
    heldout: Option<FidelitySide>,
    params: FidelityParams,
) -> Result<FidelityReport> {
    let main = compare(real, syn, &params)?;
    let reference_floor = heldout.map(|h| compare(real, h, &params)).transpose()?;
    Ok(FidelityReport {
        mauve: main.mauve,
        entity_divergence: main.entity_divergence,
        length_divergence: main.length_divergence,
        reference_floor,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Record;
    use proptest::prelude::*;

    fn dist(probs: &[f64]) -> CategoricalDist {
        CategoricalDist::new(
            (0..probs.len()).map(|i| format!("c{i}")).collect(),
            probs.to_vec(),
        )
        .unwrap()
    }

    fn tags(kinds: &[(&str, usize)]) -> EntityTags {
        let mut t = EntityTags::new();
        let mut n = 0;
        for (k, count) in kinds {
            for _ in 0..*count {
                t.insert(format!("s{n}"), vec![k.to_string()]);
                n += 1;
            }
        }
        t
    }

    fn corpus(lengths: &[usize]) -> Corpus {
        Corpus::new(
            "c",
            lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| Record::new(format!("r{i}"), vec!["w"; l].join(" ")))
                .collect(),
        )
        .unwrap()
    }

    fn emb(rows: Vec<Vec<f64>>, prefix: &str) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingMatrix::new(ids, rows, Metric::Euclidean).unwrap()
    }

    /// Direct two-category KL for symmetric smoothed point masses.
    fn two_point_kl(n: f64, alpha: f64, k: f64) -> f64 {
        let big = (n + alpha) / (n + alpha * k);
        let small = alpha / (n + alpha * k);
        big * (big / small).ln() + small * (small / big).ln()
    }

    #[test]
    fn identical_distributions_have_unit_mauve() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert!(mauve(&p, &p, 5.0, 99).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn disjoint_mauve_matches_beta_integral() {
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.0, 1.0]);
        let exact = 14400.0 / 3628800.0;
        // Piecewise-linear frontier converges to the integral as the grid refines.
        assert!((mauve(&p, &q, 5.0, 99).unwrap() - exact).abs() < 2e-4);
        assert!((mauve(&p, &q, 5.0, 5000).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn mauve_rejects_mismatched_categories() {
        let p = dist(&[0.5, 0.5]);
        let q = CategoricalDist::new(vec!["a".into(), "b".into()], vec![0.5, 0.5]).unwrap();
        assert!(matches!(mauve(&p, &q, 5.0, 9), Err(Error::Validation(_))));
    }

    #[test]
    fn entity_identical_is_zero() {
        let t = tags(&[("DRUG", 5), ("ORG", 3)]);
        assert_eq!(entity_divergence(&t, &t, Divergence::Kl).unwrap(), 0.0);
    }

    #[test]
    fn entity_disjoint_two_types() {
        let real = tags(&[("DRUG", 100)]);
        let syn = tags(&[("ORG", 100)]);
        let v = entity_divergence(&real, &syn, Divergence::Kl).unwrap();
        assert!((v - two_point_kl(100.0, 0.5, 2.0)).abs() < 1e-12);
        assert!((v - 100.0 / 101.0 * 201f64.ln()).abs() < 1e-12);
        assert!((v - 5.2508).abs() < 1e-4);
    }

    #[test]
    fn entity_permutation_invariant() {
        let real = tags(&[("DRUG", 4), ("ORG", 2), ("PER", 1)]);
        let mut syn = EntityTags::new();
        for (i, (_, v)) in real.iter().rev().enumerate() {
            syn.insert(format!("x{i}"), v.clone());
        }
        assert_eq!(entity_divergence(&real, &syn, Divergence::Kl).unwrap(), 0.0);
    }

    #[test]
    fn entity_empty_is_error() {
        let empty = EntityTags::from([("a".to_string(), vec![])]);
        assert!(matches!(
            entity_divergence(&empty, &tags(&[("ORG", 1)]), Divergence::Kl),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn load_entities_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"entities\":[{\"type\":\"ORG\"},{\"type\":\"PER\"}]}\n{\"id\":\"b\",\"entities\":[]}\n",
        )
        .unwrap();
        let t = load_entities(&path).unwrap();
        assert_eq!(t["a"], ["ORG", "PER"]);
        assert!(t["b"].is_empty());
    }

    #[test]
    fn length_identical_is_zero() {
        let c = corpus(&[3, 5, 8, 13]);
        assert_eq!(length_divergence(&c, &c, 20, Divergence::Kl).unwrap(), 0.0);
    }

    #[test]
    fn length_disjoint_bins() {
        let real = corpus(&vec![10; 50]);
        let syn = corpus(&vec![1000; 50]);
        let v = length_divergence(&real, &syn, 20, Divergence::Kl).unwrap();
        assert!((v - two_point_kl(50.0, 0.5, 20.0)).abs() < 1e-12);
    }

    #[test]
    fn length_doubling_is_nearly_invariant() {
        // Every bin is occupied on both sides; only the additive smoothing
        // mass changes relative weight, and its effect shrinks with the counts.
        let a = [1, 3, 5, 7, 9, 2, 4, 6, 8, 10, 10];
        let b = [1, 2, 2, 4, 6, 6, 8, 9, 10, 3, 5];
        let big = |v: &[usize], m: usize| {
            v.iter()
                .cycle()
                .take(v.len() * m)
                .copied()
                .collect::<Vec<_>>()
        };
        let div = |m: usize| {
            length_divergence(
                &corpus(&big(&a, m)),
                &corpus(&big(&b, m)),
                5,
                Divergence::Kl,
            )
            .unwrap()
        };
        let (base, doubled) = (div(50), div(100));
        assert!(base > 0.0);
        assert!((doubled - base).abs() < 0.01 * base);
        let (p, q): ([f64; 5], [f64; 5]) = ([2.0, 2.0, 2.0, 2.0, 3.0], [3.0, 2.0, 3.0, 1.0, 2.0]);
        let unsmoothed: f64 = p.iter().zip(q).map(|(a, b)| a / 11.0 * (a / b).ln()).sum();
        assert!((div(1000) - unsmoothed).abs() < 1e-3 * unsmoothed);
    }

    #[test]
    fn quantize_identical_is_identical() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        let (p, q) = kmeans_quantize(&emb(rows.clone(), "a"), &emb(rows, "b"), 4, 1).unwrap();
        assert_eq!(p, q);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_separated_blobs() {
        let n = 30;
        let blob = |cx: f64| {
            (0..n)
                .map(|i| vec![cx + 0.01 * i as f64, 0.01 * (i % 3) as f64])
                .collect::<Vec<_>>()
        };
        let (p, q) = kmeans_quantize(&emb(blob(0.0), "a"), &emb(blob(100.0), "b"), 2, 3).unwrap();
        let s = 0.5 / (n as f64 + 1.0);
        let mut ps = p.probs.clone();
        ps.sort_by(f64::total_cmp);
        assert!((ps[0] - s).abs() < 1e-12 && (ps[1] - (1.0 - s)).abs() < 1e-12);
        assert!((p.probs[0] - q.probs[1]).abs() < 1e-12);
    }

    #[test]
    fn quantize_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                vec![
                    (i as f64 * 1.3).sin(),
                    (i as f64 * 0.3).cos(),
                    i as f64 / 100.0,
                ]
            })
            .collect();
        let (a, b) = (emb(rows[..50].to_vec(), "a"), emb(rows[50..].to_vec(), "b"));
        assert_eq!(
            kmeans_quantize(&a, &b, 7, 11).unwrap(),
            kmeans_quantize(&a, &b, 7, 11).unwrap()
        );
    }

    #[test]
    fn quantize_rejects_bad_k() {
        let a = emb(vec![vec![0.0], vec![1.0]], "a");
        assert!(kmeans_quantize(&a, &a, 1, 0).is_err());
        assert!(kmeans_quantize(&a, &a, 5, 0).is_err());
    }

    #[test]
    fn report_with_floor() {
        let real = corpus(&[3, 4, 5, 6, 7, 8]);
        let held = corpus(&[3, 4, 5, 6, 7, 9]);
        let syn = corpus(&[30, 40, 50, 6, 7, 8]);
        let side = |c| FidelitySide {
            corpus: c,
            embeddings: None,
            entities: None,
        };
        let r = fidelity_report(
            side(&real),
            side(&syn),
            Some(side(&held)),
            FidelityParams::default(),
        )
        .unwrap();
        assert!(r.mauve.is_none());
        let floor = r.reference_floor.unwrap();
        assert!(floor.length_divergence < r.length_divergence);
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn mauve_symmetric_and_bounded((p, q) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k)))) {
            let (p, q) = (dist(&p), dist(&q));
            let a = mauve(&p, &q, 5.0, 99).unwrap();
            let b = mauve(&q, &p, 5.0, 99).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn gibbs_inequality((p, q) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k)))) {
            let (p, q) = (dist(&p), dist(&q));
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(js_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
            if p.probs.iter().zip(&q.probs).any(|(a, b)| (a - b).abs() > 1e-6) {
                prop_assert!(kl_divergence(&p, &q).unwrap() > 0.0);
            }
        }
    }
}
