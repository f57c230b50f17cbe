//! Privacy auditing and quality scoring for synthetic text corpora.
//!
//! The audit pipeline runs outlier detection ([`outlier`]), builds a
//! membership-trial plan ([`plan`]), scores each trial with n-gram models
//! ([`ngram`], [`attack`]) and compares the resulting ROC curve against the
//! (ε, δ)-DP trade-off region ([`bounds`]). [`fidelity`], [`quality`] and
//! [`leakage`] score the corpora themselves; [`simgen`] provides generators
//! with known privacy behaviour for validating the audit end to end.

pub mod attack;
pub mod bounds;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod fidelity;
pub mod fixture;
pub mod jsonl;
pub mod leakage;
pub mod ngram;
pub mod outlier;
pub mod plan;
pub mod quality;
pub mod simgen;

pub use error::{Error, Result};
