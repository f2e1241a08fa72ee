//! The three history transformations: bag-of-votes, length binning (with optional
//! prefix expansion) and per-vote data expansion with lag and cache variables.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{SessionDataset, VoteHistory};
use crate::error::{Error, Result};
use crate::variables::{BinaryCase, CaseSet, VariableId, VariableSpace};

/// Order-free case: each distinct item in `votes` is positive.
pub fn bag_of_votes_case(votes: &[usize]) -> BinaryCase {
    BinaryCase::new(votes.iter().map(|&v| VariableId::item(v)).collect())
}

pub fn bag_of_votes(data: &SessionDataset) -> CaseSet {
    CaseSet {
        space: VariableSpace::Bag { items: data.item_count() },
        cases: data.histories.par_iter().map(|h| bag_of_votes_case(h.votes())).collect(),
    }
}

/// Closed interval of history lengths; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBin {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl LengthBin {
    pub fn contains(&self, len: usize) -> bool {
        len >= self.lo && self.hi.is_none_or(|hi| len <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinScheme {
    pub bins: Vec<LengthBin>,
    pub prefix_mode: bool,
}

impl BinScheme {
    pub fn new(bins: Vec<LengthBin>, prefix_mode: bool) -> Result<Self> {
        let scheme = BinScheme { bins, prefix_mode };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn single(prefix_mode: bool) -> Self {
        BinScheme { bins: vec![LengthBin { lo: 1, hi: None }], prefix_mode }
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    /// Contiguous ascending intervals starting at 1; only the last is unbounded.
    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(format!("bin scheme {:?}: {why}", self.bins)));
        let Some(last) = self.bins.last() else {
            return bad("no bins");
        };
        if last.hi.is_some() {
            return bad("last bin must be unbounded");
        }
        let mut next_lo = 1;
        for bin in &self.bins {
            if bin.lo != next_lo {
                return bad("bins are not contiguous from length 1");
            }
            match bin.hi {
                Some(hi) if hi < bin.lo => return bad("empty interval"),
                Some(hi) => next_lo = hi + 1,
                None if !std::ptr::eq(bin, last) => return bad("only the last bin may be unbounded"),
                None => {}
            }
        }
        Ok(())
    }

    /// Index of the bin holding `len`. Length 0 maps to the first bin.
    pub fn select(&self, len: usize) -> usize {
        self.bins
            .iter()
            .position(|b| b.contains(len))
            .unwrap_or(if len == 0 { 0 } else { self.bins.len() - 1 })
    }
}

/// Splits history lengths into `bin_count` intervals holding roughly equal numbers
/// of (original) votes.
///
/// Distinct lengths are visited in ascending order, accumulating vote mass. A bin
/// closes at the first length where its mass reaches the remaining mass divided by
/// the remaining bin count, or earlier when every remaining bin would otherwise be
/// left without a distinct length.
pub fn compute_bin_bounds(train: &SessionDataset, bin_count: usize, prefix_mode: bool) -> Result<BinScheme> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bin_count == 0 {
        return Err(Error::InvalidConfig("bin count must be at least 1".into()));
    }
    let mut mass: BTreeMap<usize, usize> = BTreeMap::new();
    for h in &train.histories {
        *mass.entry(h.len()).or_default() += h.len();
    }
    if bin_count > mass.len() {
        return Err(Error::TooManyBins { bins: bin_count, distinct: mass.len() });
    }
    let lengths: Vec<(usize, usize)> = mass.into_iter().collect();
    let mut remaining: usize = lengths.iter().map(|&(_, m)| m).sum();
    let mut bins = Vec::with_capacity(bin_count);
    let mut lo = 1;
    let mut acc = 0;
    for (i, &(len, m)) in lengths.iter().enumerate() {
        if bins.len() + 1 == bin_count {
            break;
        }
        acc += m;
        let open_bins = bin_count - bins.len();
        let lengths_left = lengths.len() - i - 1;
        let quota = remaining as f64 / open_bins as f64;
        if acc as f64 >= quota || lengths_left == open_bins - 1 {
            bins.push(LengthBin { lo, hi: Some(len) });
            remaining -= acc;
            acc = 0;
            lo = len + 1;
        }
    }
    bins.push(LengthBin { lo, hi: None });
    BinScheme::new(bins, prefix_mode)
}

/// Distributes bag-of-votes cases over the bins of `scheme`.
///
/// Each history goes to the bin containing its length. In prefix mode it also
/// contributes, to every earlier bin, the case built from its first `hi` votes.
pub fn bin_assign(data: &SessionDataset, scheme: &BinScheme) -> Vec<CaseSet> {
    let space = VariableSpace::Bag { items: data.item_count() };
    let mut bins: Vec<CaseSet> = scheme.bins.iter().map(|_| CaseSet { space, cases: Vec::new() }).collect();
    for h in &data.histories {
        let own = scheme.select(h.len());
        if scheme.prefix_mode {
            for (b, bin) in scheme.bins[..own].iter().enumerate() {
                let hi = bin.hi.expect("only the last bin is unbounded");
                bins[b].cases.push(bag_of_votes_case(h.prefix(hi)));
            }
        }
        bins[own].cases.push(bag_of_votes_case(h.votes()));
    }
    bins
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionScheme {
    pub history_len: usize,
}

impl ExpansionScheme {
    pub fn new(history_len: usize) -> Result<Self> {
        if history_len == 0 {
            return Err(Error::InvalidConfig("history length must be at least 1".into()));
        }
        Ok(ExpansionScheme { history_len })
    }

    pub fn space(&self, items: usize) -> VariableSpace {
        VariableSpace::Expanded { items, history_len: self.history_len }
    }
}

/// Lag and cache variables describing the position right after `prefix`.
fn context_variables(prefix: &[usize], scheme: ExpansionScheme, out: &mut Vec<VariableId>) {
    for (d, &v) in prefix.iter().rev().take(scheme.history_len).enumerate() {
        out.push(VariableId::lag(v, d + 1));
    }
    out.extend(prefix.iter().map(|&v| VariableId::cache(v)));
}

/// One case per vote: the vote's target variable plus lag and cache variables
/// describing everything before it.
pub fn expand_history(history: &VoteHistory, scheme: ExpansionScheme) -> Vec<BinaryCase> {
    let votes = history.votes();
    (0..votes.len())
        .map(|j| {
            let mut vars = vec![VariableId::target(votes[j])];
            context_variables(&votes[..j], scheme, &mut vars);
            BinaryCase::new(vars)
        })
        .collect()
}

pub fn expand(data: &SessionDataset, scheme: ExpansionScheme) -> CaseSet {
    let cases: Vec<Vec<BinaryCase>> = data.histories.par_iter().map(|h| expand_history(h, scheme)).collect();
    CaseSet {
        space: scheme.space(data.item_count()),
        cases: cases.into_iter().flatten().collect(),
    }
}

/// Bag-space evidence for predicting the vote after `prefix`.
pub fn build_evidence_bag(prefix: &[usize]) -> BinaryCase {
    bag_of_votes_case(prefix)
}

/// Expanded-space evidence for predicting the vote after `prefix`; no targets are set.
pub fn build_evidence_expanded(prefix: &[usize], scheme: ExpansionScheme) -> BinaryCase {
    let mut vars = Vec::new();
    context_variables(prefix, scheme, &mut vars);
    BinaryCase::new(vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemCatalog;

    // Movie example items.
    const M: usize = 1;
    const S: usize = 2;
    const F: usize = 3;
    const P: usize = 4;

    fn dataset(histories: &[&[usize]]) -> SessionDataset {
        let items = histories.iter().flat_map(|h| h.iter()).copied().max().unwrap_or(1);
        let histories = histories.iter().map(|h| VoteHistory::new(h.to_vec())).collect();
        SessionDataset::new(ItemCatalog::numbered(items), histories).unwrap()
    }

    fn with_lengths(lens: &[usize]) -> SessionDataset {
        let histories: Vec<Vec<usize>> = lens.iter().map(|&n| (1..=n).collect()).collect();
        let refs: Vec<&[usize]> = histories.iter().map(Vec::as_slice).collect();
        dataset(&refs)
    }

    fn bounds(scheme: &BinScheme) -> Vec<(usize, Option<usize>)> {
        scheme.bins.iter().map(|b| (b.lo, b.hi)).collect()
    }

    #[test]
    fn bag_of_votes_definition() {
        let case = bag_of_votes_case(&[M, P, S]);
        assert_eq!(case.positives(), [VariableId::item(M), VariableId::item(S), VariableId::item(P)]);
        assert!(!case.is_positive(VariableId::item(F)));
        assert_eq!(bag_of_votes_case(&[3, 3, 3]).positives(), [VariableId::item(3)]);
        let reference = bag_of_votes_case(&[2, 4, 1]);
        for perm in [[2, 1, 4], [4, 2, 1], [1, 4, 2], [4, 1, 2], [1, 2, 4]] {
            assert_eq!(bag_of_votes_case(&perm), reference);
        }
    }

    #[test]
    fn bin_bounds_examples() {
        let data = with_lengths(&[2, 2, 2, 3, 3]);
        assert_eq!(bounds(&compute_bin_bounds(&data, 2, true).unwrap()), [(1, Some(2)), (3, None)]);
        assert_eq!(bounds(&compute_bin_bounds(&data, 1, true).unwrap()), [(1, None)]);
        let data = with_lengths(&[1, 1, 1, 1, 9]);
        assert_eq!(bounds(&compute_bin_bounds(&data, 2, true).unwrap()), [(1, Some(1)), (2, None)]);
    }

    #[test]
    fn bin_bounds_errors() {
        let data = with_lengths(&[2, 2, 3]);
        assert!(matches!(compute_bin_bounds(&data, 3, true), Err(Error::TooManyBins { bins: 3, distinct: 2 })));
        assert!(compute_bin_bounds(&data, 0, true).is_err());
    }

    #[test]
    fn bins_are_never_empty() {
        let data = with_lengths(&[1, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 40, 41, 42]);
        for b in 1..=14 {
            let Ok(scheme) = compute_bin_bounds(&data, b, false) else {
                assert!(b > 13);
                continue;
            };
            assert_eq!(scheme.bin_count(), b);
            let assigned = bin_assign(&data, &scheme);
            assert!(assigned.iter().all(|set| !set.is_empty()), "B={b}: {:?}", bounds(&scheme));
        }
    }

    #[test]
    fn scheme_validation() {
        let bin = |lo, hi| LengthBin { lo, hi };
        assert!(BinScheme::new(vec![bin(1, Some(5)), bin(6, None)], true).is_ok());
        assert!(BinScheme::new(vec![bin(1, Some(5)), bin(7, None)], true).is_err());
        assert!(BinScheme::new(vec![bin(2, None)], true).is_err());
        assert!(BinScheme::new(vec![bin(1, Some(5))], true).is_err());
        assert!(BinScheme::new(vec![bin(1, None), bin(2, None)], true).is_err());
        assert!(BinScheme::new(vec![], true).is_err());
    }

    #[test]
    fn select_bin() {
        let bin = |lo, hi| LengthBin { lo, hi };
        let scheme = BinScheme::new(vec![bin(1, Some(5)), bin(6, Some(10)), bin(11, None)], true).unwrap();
        assert_eq!(scheme.select(7), 1);
        assert_eq!(scheme.select(0), 0);
        assert_eq!(scheme.select(500), 2);
        assert_eq!(scheme.select(5), 0);
        assert_eq!(scheme.select(11), 2);
    }

    #[test]
    fn prefix_mode_length_ninety() {
        let bin = |lo, hi| LengthBin { lo, hi };
        let bins = vec![bin(1, Some(5)), bin(6, Some(10)), bin(11, Some(100)), bin(101, None)];
        let votes: Vec<usize> = (1..=90).collect();
        let data = dataset(&[&votes]);

        let prefixed = bin_assign(&data, &BinScheme::new(bins.clone(), true).unwrap());
        assert_eq!(prefixed[0].cases, [bag_of_votes_case(&votes[..5])]);
        assert_eq!(prefixed[1].cases, [bag_of_votes_case(&votes[..10])]);
        assert_eq!(prefixed[2].cases, [bag_of_votes_case(&votes)]);
        assert!(prefixed[3].is_empty());

        let plain = bin_assign(&data, &BinScheme::new(bins, false).unwrap());
        let counts: Vec<usize> = plain.iter().map(CaseSet::len).collect();
        assert_eq!(counts, [0, 0, 1, 0]);
    }

    #[test]
    fn prefix_mode_bin_cardinality() {
        let lens = [1, 2, 2, 3, 4, 5, 7, 8, 12, 30];
        let data = with_lengths(&lens);
        let scheme = compute_bin_bounds(&data, 3, true).unwrap();
        let assigned = bin_assign(&data, &scheme);
        for (bin, set) in scheme.bins.iter().zip(&assigned) {
            let expected = lens.iter().filter(|&&n| n >= bin.lo).count();
            assert_eq!(set.len(), expected, "{bin:?}");
        }
    }

    #[test]
    fn expansion_of_the_movie_sequence() {
        let scheme = ExpansionScheme::new(1).unwrap();
        let cases = expand_history(&VoteHistory::new(vec![M, P, S]), scheme);
        use VariableId as V;
        assert_eq!(cases[0], BinaryCase::new(vec![V::target(M)]));
        assert_eq!(cases[1], BinaryCase::new(vec![V::target(P), V::lag(M, 1), V::cache(M)]));
        assert_eq!(
            cases[2],
            BinaryCase::new(vec![V::target(S), V::lag(P, 1), V::cache(M), V::cache(P)])
        );
    }

    #[test]
    fn expansion_edge_cases() {
        use VariableId as V;
        let scheme = ExpansionScheme::new(3).unwrap();
        assert_eq!(expand_history(&VoteHistory::new(vec![5]), scheme), [BinaryCase::new(vec![V::target(5)])]);
        let cases = expand_history(&VoteHistory::new(vec![7, 7]), ExpansionScheme::new(2).unwrap());
        assert_eq!(cases[1], BinaryCase::new(vec![V::target(7), V::lag(7, 1), V::cache(7)]));
        let cases = expand_history(&VoteHistory::new(vec![1, 2, 3, 1]), ExpansionScheme::new(2).unwrap());
        assert_eq!(
            cases[3],
            BinaryCase::new(vec![V::target(1), V::lag(3, 1), V::lag(2, 2), V::cache(1), V::cache(2), V::cache(3)])
        );
        assert!(ExpansionScheme::new(0).is_err());
    }

    #[test]
    fn evidence() {
        use VariableId as V;
        let scheme = ExpansionScheme::new(1).unwrap();
        assert!(build_evidence_expanded(&[], scheme).positives().is_empty());
        assert!(build_evidence_bag(&[]).positives().is_empty());
        assert_eq!(
            build_evidence_expanded(&[1, 4], scheme),
            BinaryCase::new(vec![V::lag(4, 1), V::cache(1), V::cache(4)])
        );
        assert_eq!(build_evidence_bag(&[1, 4]), BinaryCase::new(vec![V::item(1), V::item(4)]));
    }

    #[test]
    fn dataset_level_transforms() {
        let data = dataset(&[&[1, 4], &[2, 4, 1]]);
        let bag = bag_of_votes(&data);
        assert_eq!(bag.space, VariableSpace::Bag { items: 4 });
        assert_eq!(bag.len(), 2);
        let expanded = expand(&data, ExpansionScheme::new(1).unwrap());
        assert_eq!(expanded.len(), 5);
        assert_eq!(expanded.space.len(), 12);
        assert!(CaseSet::new(expanded.space, expanded.cases.clone()).is_ok());
    }
}
