//! Inference-time aggregation of weak learners.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::nn::{Network, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum VotingScheme {
    /// Argmax of the mean probability vector.
    Average,
    /// Majority of per-model argmax votes.
    Hard,
    /// Per-model argmax votes weighted by that model's confidence.
    Weighted,
}

impl VotingScheme {
    pub const ALL: [VotingScheme; 3] = [VotingScheme::Average, VotingScheme::Hard, VotingScheme::Weighted];

    pub fn name(&self) -> &'static str {
        match self {
            VotingScheme::Average => "average",
            VotingScheme::Hard => "hard",
            VotingScheme::Weighted => "weighted",
        }
    }
}

impl fmt::Display for VotingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VotingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId(format!("voting scheme `{}`", s)))
    }
}

/// Order-independent sum: sorting first makes the rounding identical for
/// every permutation of the inputs.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Mean probability vector of one sample over the models.
pub fn mean_probs(probs: &[&[f64]]) -> Vec<f64> {
    let classes = probs[0].len();
    let n = probs.len() as f64;
    (0..classes)
        .map(|c| sorted_sum(probs.iter().map(|p| p[c]).collect()) / n)
        .collect()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class with the largest score; ties go to the class with the highest mean
/// probability, then the lowest index.
fn pick(scores: &[f64], mean: &[f64]) -> usize {
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for (c, &s) in scores.iter().enumerate() {
        if s == top && best.is_none_or(|b| mean[c] > mean[b]) {
            best = Some(c);
        }
    }
    best.unwrap_or(0)
}

/// Votes one sample given each model's probability vector. Returns the class
/// and the aggregate confidence: the mean probability of the class
/// (average), its vote share (hard) or its share of the total confidence
/// mass (weighted).
pub fn vote(probs: &[&[f64]], scheme: VotingScheme) -> (usize, f64) {
    assert!(!probs.is_empty(), "vote needs at least one model");
    let mean = mean_probs(probs);
    let classes = mean.len();
    match scheme {
        VotingScheme::Average => {
            let c = argmax_first(&mean);
            (c, mean[c])
        }
        VotingScheme::Hard | VotingScheme::Weighted => {
            let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); classes];
            for p in probs {
                let c = argmax_first(p);
                per_class[c].push(if scheme == VotingScheme::Hard { 1.0 } else { p[c] });
            }
            let scores: Vec<f64> = per_class.into_iter().map(sorted_sum).collect();
            let c = pick(&scores, &mean);
            let total = sorted_sum(scores.clone());
            (c, scores[c] / total)
        }
    }
}

/// Probability matrices of every model on `x`, converted to `f64`.
pub fn model_probs<T: Scalar>(models: &[&Network<T>], x: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    models
        .iter()
        .map(|m| Ok(m.forward(x)?.data().iter().map(|v| v.as_f64()).collect()))
        .collect()
}

/// Votes every row from precomputed per-model probability matrices
/// (`probs[m]` is `rows x classes`, row-major).
pub fn vote_rows(probs: &[Vec<f64>], classes: usize, scheme: VotingScheme) -> Vec<(usize, f64)> {
    let rows = probs.first().map_or(0, |p| p.len() / classes);
    (0..rows)
        .map(|r| {
            let per: Vec<&[f64]> = probs.iter().map(|p| &p[r * classes..(r + 1) * classes]).collect();
            vote(&per, scheme)
        })
        .collect()
}

/// Ensemble prediction `(class, confidence)` for every row of `x`.
pub fn predict<T: Scalar>(models: &[&Network<T>], x: &Tensor<T>, scheme: VotingScheme) -> Result<Vec<(usize, f64)>> {
    if models.is_empty() {
        return Err(Error::InvalidSpec("ensemble without models".into()));
    }
    let probs = model_probs(models, x)?;
    Ok(vote_rows(&probs, models[0].classes(), scheme))
}
