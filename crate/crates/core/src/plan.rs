//! Stage-2 experiment design: the private/auxiliary split, membership trials
//! and reference sets, plus the manifest files exchanged with generators.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::DpBudget;
use crate::corpus::{load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::outlier::OutlierReport;

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SUBSET_FRACTION: f64 = 0.5;
pub const DEFAULT_REFS: usize = 4;
pub const MIN_REMAINDER: usize = 30;

pub const PLAN_FILE: &str = "plan.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const REFERENCES_FILE: &str = "references.jsonl";
pub const KEY_FILE: &str = "key.jsonl";
pub const SYNTHETIC_DIR: &str = "synthetic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    /// Sorted ids drawn from the private split; never contains a target.
    pub subset_ids: Vec<String>,
    pub target_id: String,
    pub member: bool,
}

impl Trial {
    /// Ids the generator receives: the subset, plus the target for members, sorted.
    pub fn generation_input(&self) -> Vec<String> {
        let mut ids = self.subset_ids.clone();
        if self.member {
            ids.push(self.target_id.clone());
            ids.sort();
        }
        ids
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub ref_id: String,
    /// Targets added on top of the auxiliary split.
    pub included_targets: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub n_trials: usize,
    pub subset_fraction: f64,
    pub m_refs: usize,
    /// How the 1:2 split keeps label distributions aligned.
    pub stratification: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditPlan {
    pub seed: u64,
    pub prv_ids: Vec<String>,
    pub aux_ids: Vec<String>,
    pub targets: Vec<String>,
    pub trials: Vec<Trial>,
    pub references: Vec<ReferenceSet>,
    pub claimed_budget: Option<DpBudget>,
    pub params: PlanParams,
}

/// Everything in `plan.json`: the plan minus trials and references.
#[derive(Serialize, Deserialize)]
struct PlanMeta {
    seed: u64,
    prv_ids: Vec<String>,
    aux_ids: Vec<String>,
    targets: Vec<String>,
    claimed_budget: Option<DpBudget>,
    params: PlanParams,
}

#[derive(Serialize, Deserialize)]
struct TrialLine {
    trial_id: String,
    input_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct KeyLine {
    trial_id: String,
    member: bool,
    target_id: String,
}

/// Splits `indices` 1:2 into (private, auxiliary), stratified by label set.
///
/// Records are grouped by their full label set, shuffled within each group,
/// and every third position of the concatenation (spread evenly) goes to the
/// private side, so each group contributes its share within one record.
fn stratified_split(
    corpus: &Corpus,
    indices: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        let key = corpus.records()[i]
            .labels
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join("\u{1f}");
        strata.entry(key).or_default().push(i);
    }
    let mut ordered = Vec::with_capacity(indices.len());
    for group in strata.values_mut() {
        group.shuffle(rng);
        ordered.extend_from_slice(group);
    }
    let total = ordered.len();
    let n_prv = (total as f64 / 3.0).round() as usize;
    let (mut prv, mut aux) = (Vec::new(), Vec::new());
    for (p, &i) in ordered.iter().enumerate() {
        if (p + 1) * n_prv / total > p * n_prv / total {
            prv.push(i);
        } else {
            aux.push(i);
        }
    }
    prv.sort_unstable();
    aux.sort_unstable();
    (prv, aux)
}

pub fn build_plan(
    corpus: &Corpus,
    outliers: &OutlierReport,
    n_trials: usize,
    subset_fraction: f64,
    m_refs: usize,
    seed: u64,
    budget: Option<DpBudget>,
) -> Result<AuditPlan> {
    if outliers.targets.is_empty() {
        return Err(Error::domain(
            "no attack targets; run detect_outliers first",
        ));
    }
    if n_trials == 0 {
        return Err(Error::domain("n_trials must be >= 1"));
    }
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "subset_fraction must lie in (0, 1], got {subset_fraction}"
        )));
    }
    if m_refs == 0 || !m_refs.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "m_refs must be a positive even number, got {m_refs}"
        )));
    }
    let index = corpus.index();
    let unknown: Vec<String> = outliers
        .targets
        .iter()
        .filter(|t| !index.contains_key(t.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Coverage {
            what: "outlier targets in corpus".into(),
            missing: unknown,
        });
    }
    let mut targets = outliers.targets.clone();
    targets.sort();
    targets.dedup();
    let target_set: HashSet<&str> = targets.iter().map(String::as_str).collect();
    let remainder: Vec<usize> = (0..corpus.len())
        .filter(|&i| !target_set.contains(corpus.records()[i].id.as_str()))
        .collect();
    if remainder.len() < MIN_REMAINDER {
        return Err(Error::domain(format!(
            "too few records after removing targets: {} < {MIN_REMAINDER}",
            remainder.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (prv, aux) = stratified_split(corpus, &remainder, &mut rng);
    let id_of = |i: usize| corpus.records()[i].id.clone();
    let prv_ids: Vec<String> = prv.into_iter().map(id_of).collect();
    let aux_ids: Vec<String> = aux.into_iter().map(id_of).collect();

    let subset_len =
        ((subset_fraction * prv_ids.len() as f64).round() as usize).clamp(1, prv_ids.len());
    let width = (n_trials - 1).to_string().len().max(3);
    let trials = (0..n_trials)
        .map(|i| {
            let mut subset_ids: Vec<String> = index::sample(&mut rng, prv_ids.len(), subset_len)
                .into_iter()
                .map(|j| prv_ids[j].clone())
                .collect();
            subset_ids.sort();
            let member = rng.gen_bool(0.5);
            let target_id = targets[rng.gen_range(0..targets.len())].clone();
            Trial {
                trial_id: format!("trial-{i:0width$}"),
                subset_ids,
                target_id,
                member,
            }
        })
        .collect();

    let mut references: Vec<ReferenceSet> = (0..m_refs)
        .map(|j| ReferenceSet {
            ref_id: format!("ref-{j}"),
            included_targets: BTreeSet::new(),
        })
        .collect();
    for t in &targets {
        for j in index::sample(&mut rng, m_refs, m_refs / 2) {
            references[j].included_targets.insert(t.clone());
        }
    }

    Ok(AuditPlan {
        seed,
        prv_ids,
        aux_ids,
        targets,
        trials,
        references,
        claimed_budget: budget,
        params: PlanParams {
            n_trials,
            subset_fraction,
            m_refs,
            stratification: "label-set".into(),
        },
    })
}

/// Writes `plan.json`, `trials.jsonl`, `references.jsonl` and `key.jsonl`.
///
/// `trials.jsonl` carries only sorted generation-input ids; membership and
/// the trial's target live exclusively in `key.jsonl`.
pub fn export_manifests(plan: &AuditPlan, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = PlanMeta {
        seed: plan.seed,
        prv_ids: plan.prv_ids.clone(),
        aux_ids: plan.aux_ids.clone(),
        targets: plan.targets.clone(),
        claimed_budget: plan.claimed_budget,
        params: plan.params.clone(),
    };
    jsonl::write_json(&dir.join(PLAN_FILE), &meta)?;
    let trials: Vec<TrialLine> = plan
        .trials
        .iter()
        .map(|t| TrialLine {
            trial_id: t.trial_id.clone(),
            input_ids: t.generation_input(),
        })
        .collect();
    jsonl::write_lines(&dir.join(TRIALS_FILE), &trials)?;
    jsonl::write_lines(&dir.join(REFERENCES_FILE), &plan.references)?;
    let key: Vec<KeyLine> = plan
        .trials
        .iter()
        .map(|t| KeyLine {
            trial_id: t.trial_id.clone(),
            member: t.member,
            target_id: t.target_id.clone(),
        })
        .collect();
    jsonl::write_lines(&dir.join(KEY_FILE), &key)
}

/// Reassembles a plan from the files written by [`export_manifests`].
///
/// Trial order follows `key.jsonl`; `trials.jsonl` is looked up by id.
pub fn import_plan(dir: &Path) -> Result<AuditPlan> {
    let meta: PlanMeta = jsonl::read_json(&dir.join(PLAN_FILE))?;
    let trial_path = dir.join(TRIALS_FILE);
    let mut inputs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (line, t) in jsonl::read_lines::<TrialLine>(&trial_path)? {
        if inputs.insert(t.trial_id.clone(), t.input_ids).is_some() {
            return Err(Error::validation(format!(
                "{}:{line}: duplicate trial {:?}",
                trial_path.display(),
                t.trial_id
            )));
        }
    }
    let mut trials = Vec::new();
    let mut missing = Vec::new();
    for (_, k) in jsonl::read_lines::<KeyLine>(&dir.join(KEY_FILE))? {
        let Some(input) = inputs.remove(&k.trial_id) else {
            missing.push(k.trial_id);
            continue;
        };
        let subset_ids = if k.member {
            input.into_iter().filter(|id| *id != k.target_id).collect()
        } else {
            input
        };
        trials.push(Trial {
            trial_id: k.trial_id,
            subset_ids,
            target_id: k.target_id,
            member: k.member,
        });
    }
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: format!("trial manifests in {}", trial_path.display()),
            missing,
        });
    }
    if !inputs.is_empty() {
        return Err(Error::validation(format!(
            "trials without key entries: {}",
            inputs.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let references = jsonl::read_lines::<ReferenceSet>(&dir.join(REFERENCES_FILE))?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    Ok(AuditPlan {
        seed: meta.seed,
        prv_ids: meta.prv_ids,
        aux_ids: meta.aux_ids,
        targets: meta.targets,
        trials,
        references,
        claimed_budget: meta.claimed_budget,
        params: meta.params,
    })
}

#[derive(Clone, Debug, Default)]
pub struct SyntheticSet {
    pub corpora: BTreeMap<String, Corpus>,
    /// Files in the synthetic directory that match no trial.
    pub ignored: Vec<String>,
}

/// Reads `dir/synthetic/<trial_id>.jsonl` for every trial in the plan.
pub fn import_synthetic(plan: &AuditPlan, dir: &Path) -> Result<SyntheticSet> {
    let syn_dir = dir.join(SYNTHETIC_DIR);
    let mut missing = Vec::new();
    let mut corpora = BTreeMap::new();
    for t in &plan.trials {
        let path = syn_dir.join(format!("{}.jsonl", t.trial_id));
        if !path.is_file() {
            missing.push(t.trial_id.clone());
            continue;
        }
        let corpus = load_corpus(&path)?;
        if corpus.is_empty() {
            return Err(Error::validation(format!(
                "synthetic corpus {} is empty",
                path.display()
            )));
        }
        corpora.insert(t.trial_id.clone(), corpus);
    }
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: format!("synthetic corpora in {}", syn_dir.display()),
            missing,
        });
    }
    let known: HashSet<String> = plan
        .trials
        .iter()
        .map(|t| format!("{}.jsonl", t.trial_id))
        .collect();
    let mut ignored = Vec::new();
    for entry in std::fs::read_dir(&syn_dir).map_err(|e| Error::io(&syn_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&syn_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !known.contains(&name) {
            log::warn!("ignoring unexpected file {}", entry.path().display());
            ignored.push(name);
        }
    }
    ignored.sort();
    Ok(SyntheticSet { corpora, ignored })
}

/// Writes one synthetic corpus per trial under `dir/synthetic/`.
pub fn write_synthetic(dir: &Path, corpora: &BTreeMap<String, Corpus>) -> Result<()> {
    let syn_dir = dir.join(SYNTHETIC_DIR);
    std::fs::create_dir_all(&syn_dir).map_err(|e| Error::io(&syn_dir, e))?;
    for (trial_id, c) in corpora {
        crate::corpus::save_corpus(c, &syn_dir.join(format!("{trial_id}.jsonl")))?;
    }
    Ok(())
}
