//! Similarity primitives and the similarity-to-probability transform.

use serde::{Deserialize, Serialize};

use crate::corpus::{Detection, EmbeddingTable};
use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Floor applied to similarities before exponentiation.
pub const SIMPROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    CosineClamped,
    Simprob,
    CnnModel,
}

/// A relatedness value in [0, 1] tagged with the scorer that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelatednessScore<T> {
    value: T,
    mode: ScoreMode,
}

impl<T: Scalar> RelatednessScore<T> {
    pub fn new(value: T, mode: ScoreMode) -> Result<Self> {
        if !(value >= T::zero() && value <= T::one()) {
            return Err(Error::invalid(format!(
                "relatedness score {value} is outside [0, 1]"
            )));
        }
        Ok(RelatednessScore { value, mode })
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn mode(&self) -> ScoreMode {
        self.mode
    }
}

/// How several visual-context labels are combined against one caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextJoin {
    /// All labels joined by single spaces into one text.
    #[default]
    Concatenated,
    /// Each label scored separately, best one wins.
    PerObject,
}

impl std::str::FromStr for ContextJoin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concatenated" => Ok(ContextJoin::Concatenated),
            "per_object" | "per-object" => Ok(ContextJoin::PerObject),
            _ => Err(Error::invalid(format!("unknown context join {s:?}"))),
        }
    }
}

pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroVector(None));
    }
    Ok(dot(u, v) / (nu * nv))
}

/// `clamp(sim, 1e-6, 1) ^ mean(confidences)`.
pub fn simprob<T: Scalar>(sim: T, confidences: &[T]) -> Result<T> {
    if confidences.is_empty() {
        return Err(Error::invalid("simprob needs at least one confidence"));
    }
    let s = sim.max(T::of(SIMPROB_FLOOR)).min(T::one());
    let p = confidences.iter().copied().sum::<T>() / T::of(confidences.len() as f64);
    Ok(s.powf(p))
}

/// Labels joined by single spaces, in the given order.
pub fn join_labels(contexts: &[Detection]) -> String {
    contexts
        .iter()
        .map(|d| d.label.trim())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn context_similarity<T: Scalar>(
    caption: &str,
    contexts: &[Detection],
    emb: &EmbeddingTable<T>,
    mode: ContextJoin,
) -> Result<T> {
    if contexts.is_empty() {
        return Err(Error::invalid("no visual context to compare against"));
    }
    let cap = emb.require(caption)?;
    match mode {
        ContextJoin::Concatenated => cosine(emb.require(&join_labels(contexts))?, cap),
        ContextJoin::PerObject => {
            let mut best: Option<T> = None;
            for d in contexts {
                let c = cosine(emb.require(d.label.trim())?, cap)?;
                best = Some(best.map_or(c, |b| b.max(c)));
            }
            Ok(best.expect("contexts is nonempty"))
        }
    }
}
