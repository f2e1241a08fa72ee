//! Next-vote prediction: per-item raw probabilities from the trained model,
//! renormalized so that exactly one next vote is modeled, and ranked.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{ModelVariant, TrainedModel};
use crate::transforms::{build_evidence_bag, build_evidence_expanded, BinScheme};

/// A normalized next-vote distribution with its ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `probs[j - 1]` for item `j`; sums to 1.
    pub probs: Vec<f64>,
    /// Items by descending probability, ties by ascending index.
    pub ranking: Vec<usize>,
    ranks: Vec<usize>,
}

impl Prediction {
    /// Renormalizes raw per-item scores. Scores must be positive and finite.
    pub fn from_raw(raw: &[f64]) -> Self {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let mut ranking: Vec<usize> = (1..=probs.len()).collect();
        ranking.sort_by(|&a, &b| {
            probs[b - 1]
                .partial_cmp(&probs[a - 1])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut ranks = vec![0; probs.len()];
        for (r, &item) in ranking.iter().enumerate() {
            ranks[item - 1] = r + 1;
        }
        Prediction { probs, ranking, ranks }
    }

    pub fn prob(&self, item: usize) -> f64 {
        self.probs[item - 1]
    }

    /// 1-based rank of `item`.
    pub fn rank_of(&self, item: usize) -> usize {
        self.ranks[item - 1]
    }
}

pub fn select_bin(scheme: &BinScheme, partial_len: usize) -> usize {
    scheme.select(partial_len)
}

fn check_items(model: &TrainedModel, partial: &[usize]) -> Result<()> {
    let item_count = model.item_count();
    match partial.iter().find(|&&v| v == 0 || v > item_count) {
        Some(&index) => Err(Error::ItemOutOfRange { index, item_count }),
        None => Ok(()),
    }
}

/// Unnormalized P(next vote = j | partial) for every item.
pub fn raw_scores(model: &TrainedModel, partial: &[usize]) -> Result<Vec<f64>> {
    check_items(model, partial)?;
    Ok(match &model.variant {
        ModelVariant::Baseline { forest } => forest.raw_scores(&build_evidence_bag(partial)),
        ModelVariant::Binned { scheme, forests } => {
            forests[select_bin(scheme, partial.len())].raw_scores(&build_evidence_bag(partial))
        }
        ModelVariant::Expanded { scheme, forest } => {
            forest.raw_scores(&build_evidence_expanded(partial, *scheme))
        }
        ModelVariant::Cluster { model } => model.predict_all(&build_evidence_bag(partial)),
    })
}

pub fn predict_next(model: &TrainedModel, partial: &[usize]) -> Result<Prediction> {
    Ok(Prediction::from_raw(&raw_scores(model, partial)?))
}

/// The `top_n` best items with their probabilities.
pub fn recommend(model: &TrainedModel, partial: &[usize], top_n: usize) -> Result<Vec<(usize, f64)>> {
    recommend_filtered(model, partial, top_n, false)
}

/// Like [`recommend`]; with `exclude_seen` items already in `partial` are skipped,
/// so fewer than `top_n` entries may come back.
pub fn recommend_filtered(model: &TrainedModel, partial: &[usize], top_n: usize, exclude_seen: bool) -> Result<Vec<(usize, f64)>> {
    if top_n == 0 || top_n > model.item_count() {
        return Err(Error::InvalidConfig(format!(
            "top-N must lie in 1..={}, got {top_n}",
            model.item_count()
        )));
    }
    let prediction = predict_next(model, partial)?;
    Ok(prediction
        .ranking
        .iter()
        .filter(|item| !(exclude_seen && partial.contains(item)))
        .take(top_n)
        .map(|&item| (item, prediction.prob(item)))
        .collect())
}
