//! Order-n token language models with additive smoothing.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::{tokenize, Corpus, Record};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub const MAX_ORDER: usize = 5;
pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_ALPHA: f64 = 1.0;

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;
const EMPTY: u32 = u32::MAX;

/// Fixed-width n-gram key: context ids left-aligned, slot `n - 1` holds the
/// predicted token (or `EMPTY` for a bare context), unused slots are `EMPTY`.
type Key = [u32; MAX_ORDER];

/// How per-token log-probabilities are combined into a record score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Mean over the padded stream (length-normalised).
    #[default]
    Mean,
    /// Plain sum, i.e. the log of the raw sequence probability.
    Sum,
}

#[derive(Clone, Debug)]
pub struct NgramModel {
    n: usize,
    alpha: f64,
    vocab: HashMap<String, u32>,
    context_counts: HashMap<Key, u64>,
    joint_counts: HashMap<Key, u64>,
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Vocabulary size including the reserved symbols.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, token: &str) -> u32 {
        self.vocab.get(token).copied().unwrap_or(UNK_ID)
    }

    fn key(&self, context: &[u32], token: u32) -> Key {
        let mut k = [EMPTY; MAX_ORDER];
        k[..context.len()].copy_from_slice(context);
        k[self.n - 1] = token;
        k
    }

    fn logprob_ids(&self, context: &[u32], token: u32) -> f64 {
        debug_assert_eq!(context.len(), self.n - 1);
        let ctx = self
            .context_counts
            .get(&self.key(context, EMPTY))
            .copied()
            .unwrap_or(0);
        let joint = if ctx == 0 {
            0
        } else {
            self.joint_counts
                .get(&self.key(context, token))
                .copied()
                .unwrap_or(0)
        };
        let v = self.vocab.len() as f64;
        ((joint as f64 + self.alpha) / (ctx as f64 + self.alpha * v)).ln()
    }

    pub fn context_count(&self, context: &[&str]) -> u64 {
        let ids = self.context_ids(context);
        self.context_counts
            .get(&self.key(&ids, EMPTY))
            .copied()
            .unwrap_or(0)
    }

    pub fn joint_count(&self, context: &[&str], token: &str) -> u64 {
        let ids = self.context_ids(context);
        self.joint_counts
            .get(&self.key(&ids, self.id(token)))
            .copied()
            .unwrap_or(0)
    }

    /// Last `n - 1` ids of `context`, left-padded with BOS.
    fn context_ids<S: AsRef<str>>(&self, context: &[S]) -> Vec<u32> {
        let want = self.n - 1;
        let tail = &context[context.len().saturating_sub(want)..];
        let mut ids = vec![BOS_ID; want - tail.len()];
        ids.extend(tail.iter().map(|t| self.id(t.as_ref())));
        ids
    }

    /// Natural-log smoothed probability of `token` after `context`.
    ///
    /// Out-of-vocabulary tokens (in either position) are scored as `<unk>`.
    pub fn token_logprob<S: AsRef<str>>(&self, context: &[S], token: &str) -> f64 {
        let ids = self.context_ids(context);
        self.logprob_ids(&ids, self.id(token))
    }

    /// Per-position log-probabilities of the padded stream (tokens then EOS).
    pub fn stream_logprobs<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut stream = vec![BOS_ID; self.n - 1];
        stream.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        stream.push(EOS_ID);
        (self.n - 1..stream.len())
            .map(|i| self.logprob_ids(&stream[i + 1 - self.n..i], stream[i]))
            .collect()
    }

    pub fn score_tokens<S: AsRef<str>>(&self, tokens: &[S], mode: ScoreMode) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::domain("cannot score an empty token sequence"));
        }
        let lp = self.stream_logprobs(tokens);
        let sum: f64 = lp.iter().sum();
        Ok(match mode {
            ScoreMode::Mean => sum / lp.len() as f64,
            ScoreMode::Sum => sum,
        })
    }

    pub fn dump(&self) -> NgramDump {
        let mut names = vec![String::new(); self.vocab.len()];
        for (t, &i) in &self.vocab {
            names[i as usize] = t.clone();
        }
        let render = |k: &Key, with_token: bool| -> String {
            let ctx: Vec<&str> = k[..self.n - 1]
                .iter()
                .map(|&i| names[i as usize].as_str())
                .collect();
            if with_token {
                format!("{} -> {}", ctx.join(" "), names[k[self.n - 1] as usize])
            } else {
                ctx.join(" ")
            }
        };
        NgramDump {
            n: self.n,
            alpha: self.alpha,
            vocab: names.clone(),
            context_counts: self
                .context_counts
                .iter()
                .map(|(k, &c)| (render(k, false), c))
                .collect(),
            joint_counts: self
                .joint_counts
                .iter()
                .map(|(k, &c)| (render(k, true), c))
                .collect(),
        }
    }
}

/// JSON-friendly view of a model's counts.
#[derive(Debug, Serialize)]
pub struct NgramDump {
    pub n: usize,
    pub alpha: f64,
    pub vocab: Vec<String>,
    pub context_counts: BTreeMap<String, u64>,
    pub joint_counts: BTreeMap<String, u64>,
}

fn check_params(n: usize, alpha: f64) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::domain(format!(
            "n-gram order must be in [1, {MAX_ORDER}], got {n}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!(
            "smoothing alpha must be > 0, got {alpha}"
        )));
    }
    Ok(())
}

pub fn train_ngram(corpus: &Corpus, n: usize, alpha: f64) -> Result<NgramModel> {
    let docs: Vec<Vec<String>> = corpus
        .records()
        .iter()
        .map(|r| tokenize(&r.text).into_inner())
        .collect();
    train_on_tokens(&docs, n, alpha)
}

/// Trains on pre-tokenised documents, one padded stream per document.
pub fn train_on_tokens<S: AsRef<str>>(docs: &[Vec<S>], n: usize, alpha: f64) -> Result<NgramModel> {
    check_params(n, alpha)?;
    if docs.is_empty() {
        return Err(Error::domain(
            "cannot train an n-gram model on an empty corpus",
        ));
    }
    let mut words: Vec<&str> = docs.iter().flatten().map(AsRef::as_ref).collect();
    words.sort_unstable();
    words.dedup();
    let mut vocab: HashMap<String, u32> = HashMap::with_capacity(words.len() + 3);
    for (i, t) in [UNK, BOS, EOS].into_iter().enumerate() {
        vocab.insert(t.to_string(), i as u32);
    }
    for w in words {
        let next = vocab.len() as u32;
        vocab.entry(w.to_string()).or_insert(next);
    }
    let mut model = NgramModel {
        n,
        alpha,
        vocab,
        context_counts: HashMap::new(),
        joint_counts: HashMap::new(),
    };
    let mut stream = Vec::new();
    for doc in docs {
        stream.clear();
        stream.resize(n - 1, BOS_ID);
        stream.extend(doc.iter().map(|t| model.vocab[t.as_ref()]));
        stream.push(EOS_ID);
        for i in n - 1..stream.len() {
            let ctx = &stream[i + 1 - n..i];
            let ck = model.key(ctx, EMPTY);
            let jk = model.key(ctx, stream[i]);
            *model.context_counts.entry(ck).or_default() += 1;
            *model.joint_counts.entry(jk).or_default() += 1;
        }
    }
    Ok(model)
}

pub fn token_logprob<S: AsRef<str>>(m: &NgramModel, context: &[S], token: &str) -> f64 {
    m.token_logprob(context, token)
}

/// Length-normalised (or summed) log-probability of a record.
pub fn record_score(m: &NgramModel, r: &Record, mode: ScoreMode) -> Result<f64> {
    let toks = tokenize(&r.text);
    if toks.is_empty() {
        return Err(Error::domain(format!(
            "record {:?} has no tokens to score",
            r.id
        )));
    }
    m.score_tokens(&toks, mode)
}
