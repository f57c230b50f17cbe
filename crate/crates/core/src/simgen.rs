//! Generators with known privacy behaviour, used to validate the audit
//! without a language model in the loop.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Record};
use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::plan::{AuditPlan, Trial};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimKind {
    /// Generation input verbatim, each whitespace token dropped with probability `dropout`.
    Copier { dropout: f64 },
    /// `|subset|` auxiliary records; ignores the generation input.
    Independent,
    /// Auxiliary sample plus each target verbatim with probability `p1`
    /// when it is in the generation input, `p0` otherwise.
    RandomizedResponse { p1: f64, p0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGeneratorSpec {
    #[serde(flatten)]
    pub kind: SimKind,
    pub seed: u64,
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

impl SimGeneratorSpec {
    pub fn new(kind: SimKind, seed: u64) -> Result<Self> {
        match kind {
            SimKind::Copier { dropout } => unit("dropout", dropout)?,
            SimKind::Independent => {}
            SimKind::RandomizedResponse { p1, p0 } => {
                unit("p1", p1)?;
                unit("p0", p0)?;
                if p1 < p0 {
                    return Err(Error::validation(format!("p1 ({p1}) must be >= p0 ({p0})")));
                }
            }
        }
        Ok(SimGeneratorSpec { kind, seed })
    }

    /// Randomized response whose inclusion probabilities realise exactly `epsilon`.
    pub fn rr_for_epsilon(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::validation(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        let e = epsilon.exp();
        SimGeneratorSpec::new(
            SimKind::RandomizedResponse {
                p1: e / (1.0 + e),
                p0: 1.0 / (1.0 + e),
            },
            seed,
        )
    }
}

/// `max(ln(p1/p0), ln((1−p0)/(1−p1)))`.
pub fn rr_epsilon(p1: f64, p0: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= p1 && p1 < 1.0) {
        return Err(Error::domain(format!(
            "need 0 < p0 <= p1 < 1, got p1={p1}, p0={p0}"
        )));
    }
    Ok((p1 / p0).ln().max(((1.0 - p0) / (1.0 - p1)).ln()))
}

fn trial_rng(seed: u64, trial_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(trial_id.as_bytes()))
}

fn drop_tokens(text: &str, p: f64, rng: &mut ChaCha8Rng) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let kept: Vec<&str> = tokens
        .iter()
        .copied()
        .filter(|_| !rng.gen_bool(p))
        .collect();
    if kept.is_empty() {
        tokens[rng.gen_range(0..tokens.len())].to_string()
    } else {
        kept.join(" ")
    }
}

fn aux_sample(aux: &[&Record], n: usize, rng: &mut ChaCha8Rng) -> Vec<Record> {
    if n <= aux.len() {
        let mut picks = index::sample(rng, aux.len(), n).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| aux[i].clone()).collect()
    } else {
        (0..n)
            .map(|_| aux[rng.gen_range(0..aux.len())].clone())
            .collect()
    }
}

fn renumber(trial_id: &str, records: Vec<Record>) -> Result<Corpus> {
    let records = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| Record {
            id: format!("syn-{i:05}"),
            ..r
        })
        .collect();
    Corpus::new(trial_id, records)
}

/// Synthetic corpus for one trial, seeded by the generator seed and the trial id.
pub fn generate_trial(
    spec: &SimGeneratorSpec,
    plan: &AuditPlan,
    trial: &Trial,
    corpus: &Corpus,
) -> Result<Corpus> {
    let idx = corpus.index();
    let lookup = |id: &String| {
        idx.get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Coverage {
                what: format!("records for {}", trial.trial_id),
                missing: vec![id.clone()],
            })
    };
    let mut rng = trial_rng(spec.seed, &trial.trial_id);
    let records = match spec.kind {
        SimKind::Copier { dropout } => trial
            .generation_input()
            .iter()
            .map(|id| {
                let r = lookup(id)?;
                Ok(Record {
                    text: if dropout > 0.0 {
                        drop_tokens(&r.text, dropout, &mut rng)
                    } else {
                        r.text.clone()
                    },
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?,
        SimKind::Independent | SimKind::RandomizedResponse { .. } => {
            let aux: Vec<&Record> = plan.aux_ids.iter().map(lookup).collect::<Result<_>>()?;
            if aux.is_empty() {
                return Err(Error::domain("plan has an empty auxiliary split"));
            }
            let mut out = aux_sample(&aux, trial.subset_ids.len().max(1), &mut rng);
            if let SimKind::RandomizedResponse { p1, p0 } = spec.kind {
                for t in &plan.targets {
                    let included = trial.member && *t == trial.target_id;
                    if rng.gen_bool(if included { p1 } else { p0 }) {
                        out.push(lookup(t)?.clone());
                    }
                }
            }
            out
        }
    };
    renumber(&trial.trial_id, records)
}

pub fn generate(
    spec: &SimGeneratorSpec,
    plan: &AuditPlan,
    corpus: &Corpus,
) -> Result<BTreeMap<String, Corpus>> {
    plan.trials
        .par_iter()
        .map(|t| Ok((t.trial_id.clone(), generate_trial(spec, plan, t, corpus)?)))
        .collect()
}
