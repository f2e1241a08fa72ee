//! Synthetic corpora and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqcf::{ItemCatalog, SessionDataset, VoteHistory};

pub fn dataset(items: usize, histories: Vec<Vec<usize>>) -> SessionDataset {
    SessionDataset::new(ItemCatalog::numbered(items), histories.into_iter().map(VoteHistory::new).collect()).unwrap()
}

/// Geometric length on {1, 2, ...} with the given mean.
pub fn geometric_len(rng: &mut impl Rng, mean: f64) -> usize {
    let stop = 1.0 / mean;
    let mut n = 1;
    while !rng.random_bool(stop) {
        n += 1;
    }
    n
}

fn sample(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// First-order Markov chain with skewed transitions: in each row, successor rank r
/// (over a per-row random order of the items) gets weight 2^-r. Sessions start
/// uniformly.
pub struct MarkovChain {
    pub start: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn skewed(items: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skew_row = |rng: &mut ChaCha8Rng| {
            let mut order: Vec<usize> = (0..items).collect();
            for i in (1..items).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let mut row = vec![0.0; items];
            for (r, &k) in order.iter().enumerate() {
                row[k] = 0.5f64.powi(r as i32);
            }
            row
        };
        let start = vec![1.0; items];
        let rows = (0..items).map(|_| skew_row(&mut rng)).collect();
        MarkovChain { start, rows }
    }

    pub fn sessions(&self, count: usize, mean_len: f64, seed: u64) -> SessionDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let histories = (0..count)
            .map(|_| {
                let len = geometric_len(&mut rng, mean_len);
                let mut votes = vec![sample(&mut rng, &self.start)];
                while votes.len() < len {
                    let last = *votes.last().unwrap();
                    votes.push(sample(&mut rng, &self.rows[last]));
                }
                votes.into_iter().map(|v| v + 1).collect()
            })
            .collect();
        dataset(self.start.len(), histories)
    }
}

/// Sessions over 20 items whose content depends on their length: sessions of
/// length <= `short_max` draw 90% of their votes from items 1-5, longer sessions
/// 90% from items 6-20. Votes are otherwise iid and uniform within each group.
pub fn length_dependent_sessions(count: usize, short_max: usize, seed: u64) -> SessionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let histories = (0..count)
        .map(|_| {
            let len = geometric_len(&mut rng, 4.0);
            let favour_low = len <= short_max;
            (0..len)
                .map(|_| {
                    let low = rng.random_bool(0.9) == favour_low;
                    if low {
                        rng.random_range(1..=5)
                    } else {
                        rng.random_range(6..=20)
                    }
                })
                .collect()
        })
        .collect();
    dataset(20, histories)
}

/// Three items; every session starts with 1 or 3 and item 2 always follows item 1.
pub fn bigram_fixture(count: usize, seed: u64) -> SessionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let histories = (0..count)
        .map(|_| {
            let mut votes = vec![if rng.random_bool(0.5) { 1 } else { 3 }];
            let len = 1 + rng.random_range(1..4);
            while votes.len() < len {
                let next = match votes.last().unwrap() {
                    1 => 2,
                    _ => {
                        if rng.random_bool(0.5) {
                            1
                        } else {
                            3
                        }
                    }
                };
                votes.push(next);
            }
            votes
        })
        .collect();
    dataset(3, histories)
}

/// Empirical next-item counts after each item, `counts[prev][next]` (1-based, index 0 unused).
pub fn bigram_counts(data: &SessionDataset) -> Vec<Vec<usize>> {
    let n = data.item_count();
    let mut counts = vec![vec![0; n + 1]; n + 1];
    for h in &data.histories {
        for w in h.votes().windows(2) {
            counts[w[0]][w[1]] += 1;
        }
    }
    counts
}

/// ln n! as a plain sum of logs, independent of the library's factorial routine.
pub fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn leaf_score(n1: u64, n0: u64) -> f64 {
    ln_fact(n1) + ln_fact(n0) - ln_fact(n1 + n0 + 1)
}

/// A small dense fixture: `rows[i]` holds the predictor values, `target[i]` the target.
pub struct TreeFixture {
    pub predictors: usize,
    pub rows: Vec<Vec<bool>>,
    pub target: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    /// Best score over every tree with depth <= the depth bound.
    pub optimum: f64,
    /// Best and worst score reachable by per-node greedy choices (ties explored).
    pub greedy_max: f64,
    pub greedy_min: f64,
    /// Some optimal tree has a strictly positive gain at each of its splits.
    pub monotone_chain: bool,
}

impl TreeFixture {
    fn counts(&self, cases: &[usize]) -> (u64, u64) {
        let n1 = cases.iter().filter(|&&i| self.target[i]).count() as u64;
        (n1, cases.len() as u64 - n1)
    }

    fn partition(&self, cases: &[usize], var: usize) -> (Vec<usize>, Vec<usize>) {
        cases.iter().partition(|&&i| !self.rows[i][var])
    }

    /// (score, every split of this optimal subtree gains) for the best tree over `cases`.
    fn optimum(&self, cases: &[usize], used: &mut Vec<usize>, depth: usize, ln_kappa: f64) -> (f64, bool) {
        let (n1, n0) = self.counts(cases);
        let leaf = ln_kappa + leaf_score(n1, n0);
        let mut best = (leaf, true);
        if depth == 0 {
            return best;
        }
        for var in 0..self.predictors {
            if used.contains(&var) {
                continue;
            }
            let (absent, present) = self.partition(cases, var);
            used.push(var);
            let a = self.optimum(&absent, used, depth - 1, ln_kappa);
            let p = self.optimum(&present, used, depth - 1, ln_kappa);
            used.pop();
            let (a1, a0) = self.counts(&absent);
            let (p1, p0) = self.counts(&present);
            let gain = ln_kappa + leaf_score(a1, a0) + leaf_score(p1, p0) - leaf_score(n1, n0);
            let score = a.0 + p.0;
            let chain = gain > 0.0 && a.1 && p.1;
            if score > best.0 + 1e-12 || ((score - best.0).abs() <= 1e-12 && chain && !best.1) {
                best = (score, chain);
            }
        }
        best
    }

    /// (max, min) scores of trees built by splitting every node on one of its
    /// best strictly improving variables until no improving split remains.
    fn greedy(&self, cases: &[usize], used: &mut Vec<usize>, ln_kappa: f64) -> (f64, f64) {
        let (n1, n0) = self.counts(cases);
        let leaf = ln_kappa + leaf_score(n1, n0);
        let gains: Vec<(usize, f64)> = (0..self.predictors)
            .filter(|v| !used.contains(v))
            .map(|var| {
                let (absent, present) = self.partition(cases, var);
                let (a1, a0) = self.counts(&absent);
                let (p1, p0) = self.counts(&present);
                (var, ln_kappa + leaf_score(a1, a0) + leaf_score(p1, p0) - leaf_score(n1, n0))
            })
            .collect();
        let top = gains.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
        if !(top > 1e-12) {
            return (leaf, leaf);
        }
        let mut out = (f64::NEG_INFINITY, f64::INFINITY);
        for &(var, gain) in &gains {
            if (gain - top).abs() > 1e-9 {
                continue;
            }
            let (absent, present) = self.partition(cases, var);
            used.push(var);
            let a = self.greedy(&absent, used, ln_kappa);
            let p = self.greedy(&present, used, ln_kappa);
            used.pop();
            out.0 = out.0.max(a.0 + p.0);
            out.1 = out.1.min(a.1 + p.1);
        }
        out
    }

    pub fn oracle(&self, depth: usize, kappa: f64) -> OracleScores {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        let ln_kappa = kappa.ln();
        let (optimum, monotone_chain) = self.optimum(&all, &mut Vec::new(), depth, ln_kappa);
        let (greedy_max, greedy_min) = self.greedy(&all, &mut Vec::new(), ln_kappa);
        OracleScores { optimum, greedy_max, greedy_min, monotone_chain }
    }

    /// Bag-space cases: predictor p is item p + 2, the target is item 1.
    pub fn to_case_set(&self) -> seqcf::CaseSet {
        use seqcf::{BinaryCase, VariableId, VariableSpace};
        let cases = self
            .rows
            .iter()
            .zip(&self.target)
            .map(|(row, &t)| {
                let mut vars: Vec<VariableId> =
                    row.iter().enumerate().filter(|(_, &on)| on).map(|(p, _)| VariableId::item(p + 2)).collect();
                if t {
                    vars.push(VariableId::item(1));
                }
                BinaryCase::new(vars)
            })
            .collect();
        seqcf::CaseSet::new(VariableSpace::Bag { items: self.predictors + 1 }, cases).unwrap()
    }

    /// Random fixture whose target is a noisy boolean function of the predictors.
    pub fn random(seed: u64, predictors: usize, cases: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let density: Vec<f64> = (0..predictors).map(|_| rng.random_range(0.2..0.8)).collect();
        let table: Vec<f64> = (0..1 << predictors).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
        let rows: Vec<Vec<bool>> =
            (0..cases).map(|_| density.iter().map(|&d| rng.random_bool(d)).collect()).collect();
        let target = rows
            .iter()
            .map(|row| {
                let key = row.iter().enumerate().fold(0, |k, (i, &b)| k | ((b as usize) << i));
                rng.random_bool(table[key])
            })
            .collect();
        TreeFixture { predictors, rows, target }
    }
}
