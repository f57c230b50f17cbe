//! Stage-3 membership scoring and ROC aggregation.
//!
//! Each trial's synthetic corpus gets its own n-gram model; the attack score
//! of a target is its record score under that model minus the mean score
//! under the reference models.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Record, TokenSeq};
use crate::error::{Error, Result};
use crate::ngram::{self, NgramModel, ScoreMode};
use crate::plan::{AuditPlan, Trial};

pub const GRID_POINTS: usize = 101;
pub const DEFAULT_REPEATS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub trial_id: String,
    pub target_id: String,
    pub member: bool,
    pub p_syn: f64,
    pub p_ref_mean: f64,
    pub delta: f64,
}

impl ScoredTrial {
    pub fn from_scores(
        trial_id: impl Into<String>,
        target_id: impl Into<String>,
        member: bool,
        p_syn: f64,
        ref_scores: &[f64],
    ) -> Self {
        let p_ref_mean = ref_scores.iter().sum::<f64>() / ref_scores.len() as f64;
        ScoredTrial {
            trial_id: trial_id.into(),
            target_id: target_id.into(),
            member,
            p_syn,
            p_ref_mean,
            delta: p_syn - p_ref_mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n: usize,
    pub alpha: f64,
    pub mode: ScoreMode,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            n: ngram::DEFAULT_ORDER,
            alpha: ngram::DEFAULT_ALPHA,
            mode: ScoreMode::Mean,
        }
    }
}

/// Every score the attack can ask for, computed once.
///
/// Negative pairs are resampled per repeat, so each trial model scores every
/// target up front.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    trials: Vec<Trial>,
    target_ids: Vec<String>,
    /// `p_syn[trial][target]`.
    p_syn: Vec<Vec<f64>>,
    /// `ref_scores[target][reference]`.
    ref_scores: Vec<Vec<f64>>,
}

fn target_tokens(source: &Corpus, plan: &AuditPlan) -> Result<Vec<TokenSeq>> {
    let records = source.select(&plan.targets)?;
    records
        .iter()
        .map(|r| {
            let t = tokenize(&r.text);
            if t.is_empty() {
                Err(Error::domain(format!("target {:?} has no tokens", r.id)))
            } else {
                Ok(t)
            }
        })
        .collect()
}

fn tokenized(records: &[Record]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| tokenize(&r.text).into_inner())
        .collect()
}

impl ScoreTable {
    /// Builds the table, asking `synthetic` for each trial's corpus.
    ///
    /// `synthetic` is called once per trial (in parallel) and the corpus is
    /// dropped after scoring, so very large trial counts need not be held in
    /// memory.
    pub fn build<F>(
        plan: &AuditPlan,
        source: &Corpus,
        cfg: AttackConfig,
        synthetic: F,
    ) -> Result<Self>
    where
        F: Fn(&Trial) -> Result<Corpus> + Sync,
    {
        if plan.targets.is_empty() {
            return Err(Error::domain("plan has no targets"));
        }
        let targets = target_tokens(source, plan)?;
        let aux = tokenized(&source.select(&plan.aux_ids)?);
        let target_index: BTreeMap<&str, usize> = plan
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();

        let ref_models: Vec<NgramModel> = plan
            .references
            .par_iter()
            .map(|r| {
                let mut docs = aux.clone();
                for t in &r.included_targets {
                    let idx = *target_index.get(t.as_str()).ok_or_else(|| {
                        Error::validation(format!(
                            "reference {} includes unknown target {t:?}",
                            r.ref_id
                        ))
                    })?;
                    docs.push(targets[idx].clone().into_inner());
                }
                ngram::train_on_tokens(&docs, cfg.n, cfg.alpha)
            })
            .collect::<Result<_>>()?;
        if ref_models.is_empty() {
            return Err(Error::domain("plan has no reference sets"));
        }
        let ref_scores = targets
            .iter()
            .map(|t| {
                ref_models
                    .iter()
                    .map(|m| m.score_tokens(t, cfg.mode))
                    .collect()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;

        let p_syn = plan
            .trials
            .par_iter()
            .map(|trial| {
                let corpus = synthetic(trial)?;
                if corpus.is_empty() {
                    return Err(Error::validation(format!(
                        "synthetic corpus for {} is empty",
                        trial.trial_id
                    )));
                }
                let model = ngram::train_ngram(&corpus, cfg.n, cfg.alpha)?;
                targets
                    .iter()
                    .map(|t| model.score_tokens(t, cfg.mode))
                    .collect()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;

        Ok(ScoreTable {
            trials: plan.trials.clone(),
            target_ids: plan.targets.clone(),
            p_syn,
            ref_scores,
        })
    }

    pub fn from_synthetic(
        plan: &AuditPlan,
        synthetic: &BTreeMap<String, Corpus>,
        source: &Corpus,
        cfg: AttackConfig,
    ) -> Result<Self> {
        let missing: Vec<String> = plan
            .trials
            .iter()
            .filter(|t| !synthetic.contains_key(&t.trial_id))
            .map(|t| t.trial_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Coverage {
                what: "synthetic corpora".into(),
                missing,
            });
        }
        Self::build(plan, source, cfg, |t| Ok(synthetic[&t.trial_id].clone()))
    }

    fn scored(&self, trial_idx: usize, target_idx: usize) -> ScoredTrial {
        let trial = &self.trials[trial_idx];
        ScoredTrial::from_scores(
            &trial.trial_id,
            &self.target_ids[target_idx],
            trial.member,
            self.p_syn[trial_idx][target_idx],
            &self.ref_scores[target_idx],
        )
    }

    /// Scores every trial: members against their own target, non-members
    /// against a target drawn uniformly from the target set by `rng`.
    pub fn assign<R: Rng>(&self, rng: &mut R) -> Vec<ScoredTrial> {
        let index: BTreeMap<&str, usize> = self
            .target_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        (0..self.trials.len())
            .map(|i| {
                let t = if self.trials[i].member {
                    index[self.trials[i].target_id.as_str()]
                } else {
                    rng.gen_range(0..self.target_ids.len())
                };
                self.scored(i, t)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// RNG for repeat `repeat` of an evaluation seeded with `seed`.
pub fn repeat_rng(seed: u64, repeat: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat);
    rng
}

/// Scores all trials with negatives drawn under the plan seed.
pub fn score_trials(
    plan: &AuditPlan,
    synthetic: &BTreeMap<String, Corpus>,
    source: &Corpus,
    cfg: AttackConfig,
) -> Result<Vec<ScoredTrial>> {
    let table = ScoreTable::from_synthetic(plan, synthetic, source, cfg)?;
    Ok(table.assign(&mut repeat_rng(plan.seed, 0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn check_scores(scores: &[(f64, bool)]) -> Result<(usize, usize)> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::domain(format!("non-finite attack score {s}")));
    }
    let pos = scores.iter().filter(|(_, m)| *m).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::domain(
            "ROC needs at least one member and one non-member score",
        ));
    }
    Ok((pos, neg))
}

/// ROC by threshold sweep over distinct scores (higher = member), with
/// trapezoidal AUC. Tied scores move along a diagonal, giving them half credit.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve> {
    let (pos, neg) = check_scores(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Mann–Whitney U / (n₁·n₀) via average ranks.
pub fn mann_whitney_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let (pos, neg) = check_scores(scores)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]].0 == scores[idx[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg_rank * idx[i..j].iter().filter(|&&k| scores[k].1).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// `GRID_POINTS` evenly spaced FPR values from 0 to 1.
pub fn fpr_grid() -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

/// Linear interpolation of a monotone ROC polyline at `fpr`.
///
/// On a vertical segment the highest TPR at that FPR is returned.
pub fn interpolate_tpr(points: &[(f64, f64)], fpr: f64) -> f64 {
    let Some(last_le) = points.iter().rposition(|&(f, _)| f <= fpr) else {
        return match points.first() {
            Some(&(f0, t0)) if f0 > 0.0 => t0 * fpr / f0,
            _ => 0.0,
        };
    };
    let (f0, t0) = points[last_le];
    match points.get(last_le + 1) {
        Some(&(f1, t1)) if f1 > f0 => t0 + (t1 - t0) * (fpr - f0) / (f1 - f0),
        _ => t0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub grid: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_lo: Vec<f64>,
    pub tpr_hi: Vec<f64>,
    pub auc_mean: f64,
    pub auc_ci: (f64, f64),
    pub auc_repeats: Vec<f64>,
    pub n_repeats: usize,
}

/// Linear-interpolated percentile of `values` (sorted in place), `q` in [0, 100].
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Mean curve and 2.5/97.5 percentile band over repeated ROC curves.
///
/// The band is widened to contain the mean where the percentile band alone
/// would exclude it.
pub fn aggregate_curves(curves: &[RocCurve]) -> Result<RocResult> {
    if curves.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 repeats for a confidence band, got {}",
            curves.len()
        )));
    }
    let grid = fpr_grid();
    let per_curve: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| {
            grid.iter()
                .map(|&f| interpolate_tpr(&c.points, f))
                .collect()
        })
        .collect();
    let r = curves.len() as f64;
    let mut tpr_mean = Vec::with_capacity(grid.len());
    let mut tpr_lo = Vec::with_capacity(grid.len());
    let mut tpr_hi = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let mut col: Vec<f64> = per_curve.iter().map(|c| c[g]).collect();
        let mean = (col.iter().sum::<f64>() / r).clamp(0.0, 1.0);
        tpr_lo.push(percentile(&mut col, 2.5).min(mean).max(0.0));
        tpr_hi.push(percentile(&mut col, 97.5).max(mean).min(1.0));
        tpr_mean.push(mean);
    }
    let auc_repeats: Vec<f64> = curves.iter().map(|c| c.auc).collect();
    let mut sorted = auc_repeats.clone();
    let auc_mean = auc_repeats.iter().sum::<f64>() / r;
    let auc_ci = (
        percentile(&mut sorted, 2.5).min(auc_mean),
        percentile(&mut sorted, 97.5).max(auc_mean),
    );
    Ok(RocResult {
        grid,
        tpr_mean,
        tpr_lo,
        tpr_hi,
        auc_mean,
        auc_ci,
        auc_repeats,
        n_repeats: curves.len(),
    })
}

/// Repeats the evaluation `repeats` times, resampling negative targets with
/// an independent RNG stream per repeat.
pub fn roc_with_ci(table: &ScoreTable, repeats: usize, seed: u64) -> Result<RocResult> {
    if repeats < 2 {
        return Err(Error::domain(format!(
            "repeats must be >= 2, got {repeats}"
        )));
    }
    let curves = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            let scored = table.assign(&mut repeat_rng(seed, r));
            let pairs: Vec<(f64, bool)> = scored.iter().map(|s| (s.delta, s.member)).collect();
            roc_auc(&pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_curves(&curves)
}

/// Mean TPR of `r` at `fpr`, linearly interpolated on the grid.
pub fn tpr_at_fpr(r: &RocResult, fpr: f64) -> f64 {
    let pts: Vec<(f64, f64)> = r
        .grid
        .iter()
        .copied()
        .zip(r.tpr_mean.iter().copied())
        .collect();
    interpolate_tpr(&pts, fpr)
}
