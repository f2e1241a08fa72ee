//! Held-out scoring: CF accuracy with an exponential half-life over list position,
//! and the mean log-probability of each actual next vote.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::SessionDataset;
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::recommender::predict_next;

pub const DEFAULT_HALF_LIFE: f64 = 10.0;

/// Probability that a user looks at list position `k` (0-based): 2^(-k/α).
pub fn halflife_weight(k: usize, alpha: f64) -> f64 {
    (-(k as f64) / alpha).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub alpha: f64,
    /// Average over all votes (`true`) or per session first, then over sessions.
    pub per_vote: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { alpha: DEFAULT_HALF_LIFE, per_vote: true }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("half-life must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One user's recommendation list: `hits[k]` says whether position `k` is an item
/// the user prefers; `preferred` is the size of the preferred set.
#[derive(Debug, Clone, PartialEq)]
pub struct ListOutcome {
    pub hits: Vec<bool>,
    pub preferred: usize,
}

/// Mean over users of the half-life utility of each list, divided by the best
/// achievable utility for that user.
pub fn cf_accuracy_list(lists: &[ListOutcome], alpha: f64) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for list in lists {
        if list.preferred == 0 {
            return Err(Error::InvalidConfig("a user with no preferred items cannot be scored".into()));
        }
        let gained: f64 = list
            .hits
            .iter()
            .enumerate()
            .filter(|(_, &hit)| hit)
            .map(|(k, _)| halflife_weight(k, alpha))
            .sum();
        let best: f64 = (0..list.preferred).map(|k| halflife_weight(k, alpha)).sum();
        total += gained / best;
    }
    Ok(total / lists.len() as f64)
}

/// Contribution of an actual vote found at 1-based `rank`: 2^(1/α) · 2^(-rank/α).
pub fn vote_credit(rank: usize, alpha: f64) -> f64 {
    halflife_weight(rank - 1, alpha)
}

/// Scored outcome of one test vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteOutcome {
    /// 1-based rank of the actual vote.
    pub rank: usize,
    /// Natural log of its renormalized probability.
    pub log_prob: f64,
}

/// Predicts every vote of every test session from the votes before it, in order.
pub fn score_votes(model: &TrainedModel, test: &SessionDataset) -> Result<Vec<Vec<VoteOutcome>>> {
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    if test.catalog.fingerprint() != model.catalog.fingerprint() {
        return Err(Error::CatalogMismatch("test corpus uses a different item catalog than the model".into()));
    }
    test.histories
        .par_iter()
        .map(|h| {
            let votes = h.votes();
            (0..votes.len())
                .map(|j| {
                    let prediction = predict_next(model, &votes[..j])?;
                    Ok(VoteOutcome { rank: prediction.rank_of(votes[j]), log_prob: prediction.prob(votes[j]).ln() })
                })
                .collect()
        })
        .collect()
}

pub fn cf_accuracy_pervote(model: &TrainedModel, test: &SessionDataset, alpha: f64) -> Result<f64> {
    let outcomes = score_votes(model, test)?;
    let (sum, n) = outcomes
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), o| (s + vote_credit(o.rank, alpha), n + 1));
    Ok(sum / n as f64)
}

pub fn log_score(model: &TrainedModel, test: &SessionDataset) -> Result<f64> {
    let outcomes = score_votes(model, test)?;
    let (sum, n) = outcomes.iter().flatten().fold((0.0, 0usize), |(s, n), o| (s + o.log_prob, n + 1));
    Ok(sum / n as f64)
}

/// Scores at one history position `j` (1-based) across all sessions long enough to have it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub position: usize,
    pub votes: usize,
    pub cf_accuracy: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cf_accuracy: f64,
    pub mean_log_prob: f64,
    pub vote_count: usize,
    pub session_count: usize,
    pub alpha: f64,
    pub per_vote: bool,
    pub positions: Vec<PositionRow>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: &[Vec<VoteOutcome>], cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let vote_count: usize = outcomes.iter().map(Vec::len).sum();
        if vote_count == 0 {
            return Err(Error::EmptyInput);
        }
        let mut positions: Vec<PositionRow> = Vec::new();
        let (mut credit, mut log_sum, mut session_mean_sum) = (0.0, 0.0, 0.0);
        for session in outcomes {
            let mut session_credit = 0.0;
            for (j, o) in session.iter().enumerate() {
                let c = vote_credit(o.rank, cfg.alpha);
                session_credit += c;
                log_sum += o.log_prob;
                if positions.len() <= j {
                    positions.push(PositionRow { position: j + 1, votes: 0, cf_accuracy: 0.0, mean_log_prob: 0.0 });
                }
                let row = &mut positions[j];
                row.votes += 1;
                row.cf_accuracy += c;
                row.mean_log_prob += o.log_prob;
            }
            credit += session_credit;
            if !session.is_empty() {
                session_mean_sum += session_credit / session.len() as f64;
            }
        }
        for row in &mut positions {
            row.cf_accuracy /= row.votes as f64;
            row.mean_log_prob /= row.votes as f64;
        }
        let cf_accuracy = if cfg.per_vote {
            credit / vote_count as f64
        } else {
            session_mean_sum / outcomes.len() as f64
        };
        Ok(EvalReport {
            cf_accuracy,
            mean_log_prob: log_sum / vote_count as f64,
            vote_count,
            session_count: outcomes.len(),
            alpha: cfg.alpha,
            per_vote: cfg.per_vote,
            positions,
        })
    }

    /// Flat `key=value` lines; position rows only when `with_positions`.
    pub fn to_key_value(&self, with_positions: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cf_accuracy={}", self.cf_accuracy);
        let _ = writeln!(out, "mean_log_prob={}", self.mean_log_prob);
        let _ = writeln!(out, "votes={}", self.vote_count);
        let _ = writeln!(out, "sessions={}", self.session_count);
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "per_vote={}", self.per_vote);
        if with_positions {
            for row in &self.positions {
                let p = row.position;
                let _ = writeln!(out, "position.{p}.votes={}", row.votes);
                let _ = writeln!(out, "position.{p}.cf_accuracy={}", row.cf_accuracy);
                let _ = writeln!(out, "position.{p}.mean_log_prob={}", row.mean_log_prob);
            }
        }
        out
    }

    pub fn to_json(&self, with_positions: bool) -> String {
        let mut report = self.clone();
        if !with_positions {
            report.positions.clear();
        }
        let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
        text.push('\n');
        text
    }
}

/// CF accuracy and log score in a single pass over the test sessions.
pub fn evaluate(model: &TrainedModel, test: &SessionDataset, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    EvalReport::from_outcomes(&score_votes(model, test)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halflife() {
        assert_eq!(halflife_weight(0, 10.0), 1.0);
        assert_eq!(halflife_weight(10, 10.0), 0.5);
        assert_eq!(halflife_weight(20, 10.0), 0.25);
    }

    #[test]
    fn list_accuracy() {
        let one = |hit_at: usize| {
            let mut hits = vec![false; 20];
            hits[hit_at] = true;
            ListOutcome { hits, preferred: 1 }
        };
        assert_eq!(cf_accuracy_list(&[one(0)], 10.0).unwrap(), 1.0);
        assert_eq!(cf_accuracy_list(&[one(10)], 10.0).unwrap(), 0.5);
        let both = ListOutcome { hits: vec![true, true, false], preferred: 2 };
        let none = ListOutcome { hits: vec![false; 3], preferred: 2 };
        assert_eq!(cf_accuracy_list(&[both, none], 10.0).unwrap(), 0.5);
        assert!(cf_accuracy_list(&[ListOutcome { hits: vec![true], preferred: 0 }], 10.0).is_err());
        assert!(cf_accuracy_list(&[], 10.0).is_err());
    }

    #[test]
    fn vote_credit_values() {
        assert_eq!(vote_credit(1, 10.0), 1.0);
        assert_eq!(vote_credit(11, 10.0), 0.5);
        let direct = 2f64.powf(1.0 / 10.0) * 2f64.powf(-7.0 / 10.0);
        assert!((vote_credit(7, 10.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn report_modes_and_positions() {
        let o = |rank| VoteOutcome { rank, log_prob: -1.0 };
        let outcomes = vec![vec![o(1), o(11)], vec![o(1)]];
        let per_vote = EvalReport::from_outcomes(&outcomes, &EvalConfig::default()).unwrap();
        assert!((per_vote.cf_accuracy - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!((per_vote.vote_count, per_vote.session_count), (3, 2));
        assert_eq!(per_vote.positions[0].votes, 2);
        assert_eq!(per_vote.positions[1].cf_accuracy, 0.5);
        let per_session = EvalReport::from_outcomes(&outcomes, &EvalConfig { per_vote: false, ..EvalConfig::default() }).unwrap();
        assert!((per_session.cf_accuracy - (0.75 + 1.0) / 2.0).abs() < 1e-15);
        let text = per_vote.to_key_value(true);
        assert!(text.starts_with("cf_accuracy="));
        assert!(text.contains("position.2.cf_accuracy=0.5\n"));
        assert!(!per_vote.to_key_value(false).contains("position."));
        assert!(EvalReport::from_outcomes(&[], &EvalConfig::default()).is_err());
        assert!(EvalConfig { alpha: 0.0, per_vote: true }.validate().is_err());
    }
}
