//! Deterministic English-like corpora with labelled topics and planted
//! outliers, for tests and demonstrations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Record};
use crate::error::{Error, Result};

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "was", "with", "for", "on", "is", "that", "after", "had",
    "were", "by", "this", "from", "at", "as", "but", "not", "no", "he", "she", "they", "it", "be",
    "an", "or",
];

const TOPICS: &[(&str, &[&str])] = &[
    (
        "clinical",
        &[
            "patient",
            "dose",
            "pain",
            "doctor",
            "nurse",
            "symptoms",
            "treatment",
            "ward",
            "fever",
            "tablet",
            "blood",
            "pressure",
            "clinic",
            "headache",
            "therapy",
            "nausea",
            "scan",
            "history",
            "chest",
            "relief",
        ],
    ),
    (
        "finance",
        &[
            "market", "shares", "price", "bank", "profit", "quarter", "investor", "rate", "fund",
            "growth", "revenue", "budget", "loan", "trading", "dividend", "earnings", "costs",
            "stock", "forecast", "capital",
        ],
    ),
    (
        "sports",
        &[
            "team", "match", "season", "coach", "goal", "player", "league", "score", "win",
            "final", "injury", "training", "fans", "stadium", "points", "game", "cup", "defence",
            "striker", "title",
        ],
    ),
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const RARE_ONSETS: &[&str] = &["qx", "zh", "kv", "xy", "jq", "vx"];
const RARE_VOWELS: &[&str] = &["yy", "oe", "uu", "ae"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_records: usize,
    pub n_outliers: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_records: 2000,
            n_outliers: 20,
            min_len: 12,
            max_len: 30,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub corpus: Corpus,
    /// Ids of the records drawn from the rare vocabulary.
    pub planted: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, onsets: &[&str], vowels: &[&str], syllables: usize) -> String {
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}",
                onsets.choose(rng).unwrap(),
                vowels.choose(rng).unwrap()
            )
        })
        .collect()
}

/// Zipf-like index into a list of `n`: rank `r` with weight `1/(r+1)`.
fn zipf_pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let h: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.gen::<f64>() * h;
    for r in 0..n {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return r;
        }
    }
    n - 1
}

fn sentence(rng: &mut ChaCha8Rng, len: usize, content: &[String], content_share: f64) -> String {
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            if rng.gen_bool(content_share) {
                content[zipf_pick(rng, content.len())].clone()
            } else {
                FUNCTION_WORDS[zipf_pick(rng, FUNCTION_WORDS.len())].to_string()
            }
        })
        .collect();
    if let Some(first) = words.first_mut() {
        let mut c = first.chars();
        if let Some(h) = c.next() {
            *first = h.to_uppercase().chain(c).collect();
        }
    }
    format!("{}.", words.join(" "))
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.n_outliers >= spec.n_records || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::validation(
            "fixture needs n_outliers < n_records and 1 <= min_len <= max_len",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let topic_vocab: Vec<Vec<String>> = TOPICS
        .iter()
        .map(|(_, words)| {
            let mut v: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            for _ in 0..60 {
                let syllables = 2 + rng.gen_range(0..2);
                v.push(pseudo_word(&mut rng, ONSETS, VOWELS, syllables));
            }
            v
        })
        .collect();
    let outlier_slots: std::collections::BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, spec.n_records, spec.n_outliers)
            .into_iter()
            .collect();

    let mut records = Vec::with_capacity(spec.n_records);
    let mut planted = Vec::new();
    for i in 0..spec.n_records {
        let id = format!("doc-{i:05}");
        if outlier_slots.contains(&i) {
            let vocab: Vec<String> = (0..12)
                .map(|_| pseudo_word(&mut rng, RARE_ONSETS, RARE_VOWELS, 3))
                .collect();
            let len = rng.gen_range(spec.max_len..=spec.max_len * 2);
            records.push(
                Record::new(id.clone(), sentence(&mut rng, len, &vocab, 0.9)).with_labels(["rare"]),
            );
            planted.push(id);
        } else {
            let topic = rng.gen_range(0..TOPICS.len());
            let len = rng.gen_range(spec.min_len..=spec.max_len);
            let text = sentence(&mut rng, len, &topic_vocab[topic], 0.55);
            records.push(Record::new(id, text).with_labels([TOPICS[topic].0]));
        }
    }
    Ok(Fixture {
        corpus: Corpus::new("fixture", records)?,
        planted,
    })
}
