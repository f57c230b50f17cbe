//! (ε, δ)-DP limits on membership-inference ROC curves.
//!
//! Any test distinguishing neighbouring inputs of an (ε, δ)-DP mechanism
//! satisfies `TPR ≤ δ + e^ε·FPR` and `1 − FPR ≤ δ + e^ε·(1 − TPR)`; the
//! region bounded by both is the trade-off curve drawn over audit ROCs.

use serde::{Deserialize, Serialize};

use crate::attack::RocResult;
use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::validation(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::validation(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(DpBudget { epsilon, delta })
    }
}

/// Largest TPR any attack may reach at `fpr` against a `b`-DP mechanism.
pub fn tpr_bound(b: DpBudget, fpr: f64) -> f64 {
    let fpr = fpr.clamp(0.0, 1.0);
    let direct = b.delta + b.epsilon.exp() * fpr;
    // 1 − e^{−ε}(1 − δ − fpr), rearranged so that ε = 0 reproduces fpr exactly.
    let complement = -(-b.epsilon).exp_m1() + (-b.epsilon).exp() * (b.delta + fpr);
    direct.min(complement).min(1.0).max(fpr)
}

/// Smallest ε consistent with observing `(fpr, tpr)` at slack `delta`.
///
/// Returns `f64::INFINITY` when no finite ε explains the point (e.g. perfect
/// recall at a non-trivial FPR); it serialises as `"unbounded"`.
pub fn empirical_epsilon(fpr: f64, tpr: f64, delta: f64) -> f64 {
    let log_ratio = |num: f64, den: f64| -> f64 {
        if num <= 0.0 {
            0.0
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            (num / den).ln().max(0.0)
        }
    };
    let upper = log_ratio(tpr - delta, fpr);
    let lower = log_ratio(1.0 - delta - fpr, 1.0 - tpr);
    upper.max(lower).max(0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    #[default]
    LowerCi,
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Statistic::Mean),
            "lower_ci" | "lower-ci" => Ok(Statistic::LowerCi),
            other => Err(Error::validation(format!("unknown statistic {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationPoint {
    pub fpr: f64,
    pub tpr_observed: f64,
    pub tpr_bound: f64,
    #[serde(with = "epsilon_serde")]
    pub empirical_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub budget: DpBudget,
    pub statistic: Statistic,
    pub violated: bool,
    pub worst_gap: f64,
    /// Largest finite-or-unbounded empirical ε over the grid.
    #[serde(with = "epsilon_serde")]
    pub max_empirical_epsilon: f64,
    pub points: Vec<ViolationPoint>,
}

/// Compares the chosen ROC statistic against the trade-off bound at every grid point.
///
/// Equality with the bound is not a violation.
pub fn check_violation(roc: &RocResult, b: DpBudget, statistic: Statistic) -> ViolationReport {
    let observed = match statistic {
        Statistic::Mean => &roc.tpr_mean,
        Statistic::LowerCi => &roc.tpr_lo,
    };
    let points: Vec<ViolationPoint> = roc
        .grid
        .iter()
        .zip(observed)
        .map(|(&fpr, &tpr)| ViolationPoint {
            fpr,
            tpr_observed: tpr,
            tpr_bound: tpr_bound(b, fpr),
            empirical_epsilon: empirical_epsilon(fpr, tpr, b.delta),
        })
        .collect();
    let violated = points.iter().any(|p| p.tpr_observed > p.tpr_bound);
    let worst_gap = points
        .iter()
        .map(|p| p.tpr_observed - p.tpr_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_empirical_epsilon = points
        .iter()
        .map(|p| p.empirical_epsilon)
        .fold(0.0, f64::max);
    ViolationReport {
        budget: b,
        statistic,
        violated,
        worst_gap,
        max_empirical_epsilon,
        points,
    }
}

/// Serialises non-finite ε values as the string `"unbounded"`.
pub mod epsilon_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("unbounded")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "unbounded" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got {t:?}"
            ))),
        }
    }
}
