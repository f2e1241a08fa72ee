//! Latent-class (naïve Bayes with a hidden class) model over bag-of-votes cases,
//! fitted with EM.
//!
//! The joint for a case is P(C = c) · Π_k P(x_k | C = c). EM runs plain
//! maximum-likelihood iterations, so the log-likelihood never decreases; the served
//! model comes from one last M-step that adds `s` pseudo-counts to each outcome
//! (`s` is the configured smoothing), keeping item probabilities inside (0, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variables::{BinaryCase, CaseSet, Role, VariableSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub class_count: usize,
    pub max_iterations: usize,
    /// EM stops once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub smoothing: f64,
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            class_count: 4,
            max_iterations: 200,
            tolerance: 1e-6,
            seed: 0,
            smoothing: 1.0,
            restarts: 1,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::InvalidConfig("cluster model needs at least one class".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("EM tolerance must be positive".into()));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::InvalidConfig("EM smoothing must be positive".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("EM needs at least one iteration and one restart".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub class_prior: Vec<f64>,
    /// `item_prob[c][k - 1]` = P(x_k = x1 | C = c).
    pub item_prob: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn new(class_prior: Vec<f64>, item_prob: Vec<Vec<f64>>) -> Result<Self> {
        let model = ClusterModel { class_prior, item_prob };
        model.validate()?;
        Ok(model)
    }

    pub fn class_count(&self) -> usize {
        self.class_prior.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_prob.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::MalformedModel(format!("cluster model: {why}")));
        if self.class_prior.is_empty() || self.class_prior.len() != self.item_prob.len() {
            return bad("class prior and item table disagree on the class count".into());
        }
        let sum: f64 = self.class_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_prior.iter().any(|&p| !(p >= 0.0)) {
            return bad(format!("class prior sums to {sum}"));
        }
        let items = self.item_count();
        for row in &self.item_prob {
            if row.len() != items {
                return bad("ragged item table".into());
            }
            if let Some(p) = row.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
                return bad(format!("item probability {p} outside (0, 1)"));
            }
        }
        Ok(())
    }

    fn log_tables(&self) -> LogTables {
        LogTables::new(&self.class_prior, &self.item_prob)
    }

    /// ln P(C = c, case) for every class.
    pub fn log_joint(&self, case: &BinaryCase) -> Vec<f64> {
        self.log_tables().log_joint(&items_of(case))
    }

    /// P(C = c | case) for every class.
    pub fn responsibilities(&self, case: &BinaryCase) -> Vec<f64> {
        let mut row = self.log_joint(case);
        normalize_log(&mut row);
        row
    }

    /// P(x_item = x1 | evidence on every other item).
    pub fn predict(&self, evidence: &BinaryCase, item: usize) -> f64 {
        self.predict_all(evidence)[item - 1]
    }

    /// [`ClusterModel::predict`] for every item at once.
    pub fn predict_all(&self, evidence: &BinaryCase) -> Vec<f64> {
        let tables = self.log_tables();
        let present = items_of(evidence);
        let full = tables.log_joint(&present);
        let mut is_present = vec![false; self.item_count()];
        for &k in &present {
            is_present[k] = true;
        }
        let mut weights = vec![0.0; self.class_count()];
        (0..self.item_count())
            .map(|k| {
                // drop item k's own factor from each class's log joint
                for (c, w) in weights.iter_mut().enumerate() {
                    let p = self.item_prob[c][k];
                    *w = full[c] - if is_present[k] { p.ln() } else { (-p).ln_1p() };
                }
                normalize_log(&mut weights);
                weights.iter().zip(&self.item_prob).map(|(w, row)| w * row[k]).sum()
            })
            .collect()
    }

    /// Σ over cases of ln Σ_c P(C = c, case).
    pub fn log_likelihood(&self, data: &CaseSet) -> f64 {
        let tables = self.log_tables();
        let per_case: Vec<f64> = data
            .cases
            .par_iter()
            .map(|case| log_sum_exp(&tables.log_joint(&items_of(case))))
            .collect();
        per_case.iter().sum()
    }
}

pub fn cluster_predict(model: &ClusterModel, evidence: &BinaryCase, item: usize) -> f64 {
    model.predict(evidence, item)
}

pub fn cluster_loglik(model: &ClusterModel, data: &CaseSet) -> f64 {
    model.log_likelihood(data)
}

/// Per-class log tables: ln(1 - p) summed over items with p < 1, and
/// ln p - ln(1 - p) per item. Items with p = 1 are tracked separately so that
/// maximum-likelihood iterates with probabilities of exactly 0 or 1 stay exact.
struct LogTables {
    log_prior: Vec<f64>,
    base: Vec<f64>,
    gain: Vec<Vec<f64>>,
    /// Per class: the items with p = 1 and their count; a case lacking any of them
    /// has probability 0 under that class.
    is_certain: Vec<Vec<bool>>,
    certain: Vec<usize>,
}

impl LogTables {
    fn new(class_prior: &[f64], item_prob: &[Vec<f64>]) -> Self {
        let base = item_prob.iter().map(|row| row.iter().filter(|&&p| p < 1.0).map(|p| (-p).ln_1p()).sum()).collect();
        let gain = item_prob
            .iter()
            .map(|row| row.iter().map(|&p| if p < 1.0 { p.ln() - (-p).ln_1p() } else { 0.0 }).collect())
            .collect();
        let is_certain: Vec<Vec<bool>> = item_prob.iter().map(|row| row.iter().map(|&p| p >= 1.0).collect()).collect();
        let certain = is_certain.iter().map(|row| row.iter().filter(|&&b| b).count()).collect();
        let log_prior = class_prior.iter().map(|p| p.ln()).collect();
        LogTables { log_prior, base, gain, is_certain, certain }
    }

    fn log_joint(&self, present: &[usize]) -> Vec<f64> {
        (0..self.log_prior.len())
            .map(|c| {
                let mut missing = self.certain[c];
                let mut sum = self.log_prior[c] + self.base[c];
                for &k in present {
                    if self.is_certain[c][k] {
                        missing -= 1;
                    }
                    sum += self.gain[c][k];
                }
                if missing > 0 {
                    f64::NEG_INFINITY
                } else {
                    sum
                }
            })
            .collect()
    }
}

/// Zero-based item positions of the positive item variables.
fn items_of(case: &BinaryCase) -> Vec<usize> {
    case.positives()
        .iter()
        .filter(|v| v.role == Role::Item)
        .map(|v| v.item - 1)
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_log(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = (*x - z).exp();
    }
}

/// Result of [`em_fit`]: the smoothed model and the log-likelihood of each
/// maximum-likelihood EM iterate.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: ClusterModel,
    pub log_likelihood: Vec<f64>,
}

fn m_step(cases: &[Vec<usize>], resp: &[Vec<f64>], items: usize, classes: usize, smoothing: f64) -> ClusterModel {
    let n = cases.len();
    let mut weight = vec![0.0; classes];
    let mut hits = vec![vec![0.0; items]; classes];
    for (present, r) in cases.iter().zip(resp) {
        for c in 0..classes {
            weight[c] += r[c];
            for &k in present {
                hits[c][k] += r[c];
            }
        }
    }
    let class_prior = if n == 0 {
        vec![1.0 / classes as f64; classes]
    } else {
        weight.iter().map(|w| w / n as f64).collect()
    };
    // an empty class keeps an uninformative table; its prior weight is zero anyway
    let item_prob = hits
        .into_iter()
        .zip(&weight)
        .map(|(row, &w)| {
            row.into_iter()
                .map(|h| if w + smoothing > 0.0 { ((h + smoothing) / (w + 2.0 * smoothing)).clamp(0.0, 1.0) } else { 0.5 })
                .collect()
        })
        .collect();
    ClusterModel { class_prior, item_prob }
}

fn fit_once(cases: &[Vec<usize>], items: usize, cfg: &EmConfig, seed: u64) -> EmFit {
    let classes = cfg.class_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resp: Vec<Vec<f64>> = cases
        .iter()
        .map(|_| {
            let mut row: Vec<f64> = (0..classes).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
            row
        })
        .collect();

    let mut model = m_step(cases, &resp, items, classes, 0.0);
    let mut log_likelihood: Vec<f64> = Vec::new();
    for iteration in 0..cfg.max_iterations {
        let tables = model.log_tables();
        let (lls, rows): (Vec<f64>, Vec<Vec<f64>>) = cases
            .par_iter()
            .map(|present| {
                let mut row = tables.log_joint(present);
                let ll = log_sum_exp(&row);
                normalize_log(&mut row);
                (ll, row)
            })
            .unzip();
        let ll: f64 = lls.iter().sum();
        let previous = log_likelihood.last().copied();
        log_likelihood.push(ll);
        resp = rows;
        if previous.is_some_and(|p| ll - p < cfg.tolerance) || iteration + 1 == cfg.max_iterations {
            break;
        }
        model = m_step(cases, &resp, items, classes, 0.0);
    }
    EmFit { model: m_step(cases, &resp, items, classes, cfg.smoothing), log_likelihood }
}

/// Fits the model with EM, keeping the best of `cfg.restarts` seeded runs.
///
/// Every run starts from random responsibilities. The trace holds the
/// log-likelihood of each unsmoothed iterate; the returned model is the smoothed
/// M-step from the responsibilities of the last one.
pub fn em_fit(data: &CaseSet, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    let VariableSpace::Bag { items } = data.space else {
        return Err(Error::InvalidConfig("cluster models are fitted on bag-of-votes cases".into()));
    };
    let cases: Vec<Vec<usize>> = data.cases.iter().map(items_of).collect();
    let mut best: Option<EmFit> = None;
    for restart in 0..cfg.restarts {
        let fit = fit_once(&cases, items, cfg, cfg.seed.wrapping_add(restart as u64));
        if best.as_ref().is_none_or(|b| fit.log_likelihood.last() > b.log_likelihood.last()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
