//! Probabilistic decision trees over sparse binary cases, grown greedily under a
//! Bayesian score: the Beta(1,1) marginal likelihood of every leaf plus a model
//! prior κ^f, with f the number of leaves.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::variables::{BinaryCase, CaseSet, VariableId, VariableSpace};

pub const DEFAULT_KAPPA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub kappa: f64,
}

impl ScoreParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::InvalidConfig(format!("kappa must lie in (0, 1], got {kappa}")));
        }
        Ok(ScoreParams { kappa })
    }

    pub fn ln_kappa(&self) -> f64 {
        self.kappa.ln()
    }
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { kappa: DEFAULT_KAPPA }
    }
}

/// Target counts at a leaf: `n1` cases with the target on, `n0` with it off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafCounts {
    pub n1: u64,
    pub n0: u64,
}

impl LeafCounts {
    pub fn new(n1: u64, n0: u64) -> Self {
        LeafCounts { n1, n0 }
    }

    pub fn total(&self) -> u64 {
        self.n1 + self.n0
    }

    /// Posterior mean under the flat prior, (n1 + 1) / (n + 2).
    pub fn predictive(&self) -> f64 {
        (self.n1 as f64 + 1.0) / (self.total() as f64 + 2.0)
    }
}

/// ln[n1! n0! / (n1 + n0 + 1)!], the log marginal likelihood of a Bernoulli leaf
/// under a uniform prior on its parameter.
pub fn leaf_log_marginal(counts: LeafCounts) -> f64 {
    ln_factorial(counts.n1) + ln_factorial(counts.n0) - ln_factorial(counts.total() + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(LeafCounts),
    /// `absent` is followed when `var` is x0, `present` when it is x1.
    Split {
        var: VariableId,
        absent: Box<Node>,
        present: Box<Node>,
    },
}

impl Node {
    fn leaf_counts(&self, out: &mut Vec<LeafCounts>) {
        match self {
            Node::Leaf(c) => out.push(*c),
            Node::Split { absent, present, .. } => {
                absent.leaf_counts(out);
                present.leaf_counts(out);
            }
        }
    }

    /// Total counts of the leaves below this node.
    pub fn counts(&self) -> LeafCounts {
        match self {
            Node::Leaf(c) => *c,
            Node::Split { absent, present, .. } => {
                let (a, p) = (absent.counts(), present.counts());
                LeafCounts::new(a.n1 + p.n1, a.n0 + p.n0)
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Split { absent, present, .. } => 1 + absent.depth().max(present.depth()),
        }
    }

    fn check_paths(&self, target: VariableId, path: &mut Vec<VariableId>) -> std::result::Result<(), String> {
        if let Node::Split { var, absent, present } = self {
            if *var == target {
                return Err(format!("tree for {target} splits on its own target"));
            }
            if path.contains(var) {
                return Err(format!("variable {var} repeats on a path"));
            }
            path.push(*var);
            absent.check_paths(target, path)?;
            present.check_paths(target, path)?;
            path.pop();
        }
        Ok(())
    }
}

// Nested text form: {"split": "lag:4:1", "x0": {..}, "x1": {..}} or {"leaf": [n1, n0]}.
impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            Node::Leaf(c) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("leaf", &[c.n1, c.n0])?;
                map.end()
            }
            Node::Split { var, absent, present } => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("split", var)?;
                map.serialize_entry("x0", absent)?;
                map.serialize_entry("x1", present)?;
                map.end()
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum NodeRepr {
    Leaf { leaf: [u64; 2] },
    Split { split: VariableId, x0: Box<Node>, x1: Box<Node> },
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(match NodeRepr::deserialize(deserializer)? {
            NodeRepr::Leaf { leaf: [n1, n0] } => Node::Leaf(LeafCounts::new(n1, n0)),
            NodeRepr::Split { split, x0, x1 } => Node::Split { var: split, absent: x0, present: x1 },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub target: VariableId,
    pub root: Node,
}

impl DecisionTree {
    pub fn single_leaf(target: VariableId, counts: LeafCounts) -> Self {
        DecisionTree { target, root: Node::Leaf(counts) }
    }

    pub fn leaves(&self) -> Vec<LeafCounts> {
        let mut out = Vec::new();
        self.root.leaf_counts(&mut out);
        out
    }

    /// Free parameters: one per binary leaf.
    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn validate(&self) -> Result<()> {
        self.root
            .check_paths(self.target, &mut Vec::new())
            .map_err(Error::MalformedModel)
    }

    pub fn leaf_for(&self, evidence: &BinaryCase) -> LeafCounts {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(c) => return *c,
                Node::Split { var, absent, present } => {
                    node = if evidence.is_positive(*var) { present } else { absent };
                }
            }
        }
    }

    /// P(target = x1 | evidence); absent variables count as x0.
    pub fn predict(&self, evidence: &BinaryCase) -> f64 {
        self.leaf_for(evidence).predictive()
    }

    /// f·ln κ plus the summed leaf log marginals.
    pub fn log_score(&self, params: ScoreParams) -> f64 {
        let leaves = self.leaves();
        leaves.len() as f64 * params.ln_kappa() + leaves.iter().copied().map(leaf_log_marginal).sum::<f64>()
    }
}

pub fn tree_predict(tree: &DecisionTree, evidence: &BinaryCase) -> f64 {
    tree.predict(evidence)
}

pub fn tree_log_score(tree: &DecisionTree, params: ScoreParams) -> f64 {
    tree.log_score(params)
}

/// One tree per item, `trees[j - 1]` predicting item `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub space: VariableSpace,
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    /// Every tree a single leaf with no data, predicting 0.5 everywhere.
    pub fn untrained(space: VariableSpace) -> Self {
        let trees = (1..=space.items())
            .map(|j| DecisionTree::single_leaf(space.target_of(j), LeafCounts::default()))
            .collect();
        Forest { space, trees }
    }

    pub fn item_count(&self) -> usize {
        self.trees.len()
    }

    pub fn tree(&self, item: usize) -> &DecisionTree {
        &self.trees[item - 1]
    }

    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(DecisionTree::leaf_count).sum()
    }

    pub fn log_score(&self, params: ScoreParams) -> f64 {
        self.trees.iter().map(|t| t.log_score(params)).sum()
    }

    /// Raw per-item probabilities for the given evidence, item order.
    pub fn raw_scores(&self, evidence: &BinaryCase) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(evidence)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.len() != self.space.items() {
            return Err(Error::MalformedModel(format!(
                "forest has {} trees for {} items",
                self.trees.len(),
                self.space.items()
            )));
        }
        for (j, tree) in self.trees.iter().enumerate() {
            if tree.target != self.space.target_of(j + 1) {
                return Err(Error::MalformedModel(format!("tree {} predicts {}", j + 1, tree.target)));
            }
            tree.validate()?;
            let mut splits = Vec::new();
            collect_splits(&tree.root, &mut splits);
            if let Some(bad) = splits.iter().find(|v| !self.space.contains(**v)) {
                return Err(Error::MalformedModel(format!("split variable {bad} is outside the space")));
            }
        }
        Ok(())
    }
}

fn collect_splits(node: &Node, out: &mut Vec<VariableId>) {
    if let Node::Split { var, absent, present } = node {
        out.push(*var);
        collect_splits(absent, out);
        collect_splits(present, out);
    }
}

/// Cases as sorted dense variable indices, shared by every tree of a forest.
struct IndexedCases {
    offsets: Vec<usize>,
    vars: Vec<u32>,
}

impl IndexedCases {
    fn new(data: &CaseSet) -> Self {
        let mut offsets = Vec::with_capacity(data.len() + 1);
        let mut vars = Vec::new();
        offsets.push(0);
        for case in &data.cases {
            // positives are sorted by VariableId, whose order the dense index preserves
            vars.extend(case.positives().iter().map(|v| {
                data.space.index_of(*v).expect("case variables belong to the case space") as u32
            }));
            offsets.push(vars.len());
        }
        IndexedCases { offsets, vars }
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn case(&self, i: usize) -> &[u32] {
        &self.vars[self.offsets[i]..self.offsets[i + 1]]
    }

    fn has(&self, i: usize, var: u32) -> bool {
        self.case(i).binary_search(&var).is_ok()
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    delta: f64,
    var: u32,
}

struct FrontierLeaf {
    slot: usize,
    cases: Vec<u32>,
    counts: LeafCounts,
    used: Vec<u32>,
    path: Vec<bool>,
    best: Option<Candidate>,
}

enum Slot {
    Leaf(LeafCounts),
    Split { var: u32, absent: usize, present: usize },
}

struct Grower<'a> {
    cases: &'a IndexedCases,
    target_on: Vec<bool>,
    is_candidate: Vec<bool>,
    ln_kappa: f64,
    on: Vec<u32>,
    off: Vec<u32>,
    touched: Vec<u32>,
}

impl Grower<'_> {
    fn counts(&self, cases: &[u32]) -> LeafCounts {
        let n1 = cases.iter().filter(|&&i| self.target_on[i as usize]).count() as u64;
        LeafCounts::new(n1, cases.len() as u64 - n1)
    }

    /// Best strictly improving split of a leaf; equal deltas go to the smaller variable.
    /// Work is proportional to the positives of the leaf's cases.
    fn best_split(&mut self, leaf: &FrontierLeaf) -> Option<Candidate> {
        // pure leaves never gain from a split: ln[(a+b+1)/((a+1)(b+1))] <= 0 <= -ln κ
        if leaf.counts.n1 == 0 || leaf.counts.n0 == 0 {
            return None;
        }
        for &i in &leaf.cases {
            let on = self.target_on[i as usize];
            for &v in self.cases.case(i as usize) {
                if !self.is_candidate[v as usize] || leaf.used.contains(&v) {
                    continue;
                }
                let slot = v as usize;
                if self.on[slot] == 0 && self.off[slot] == 0 {
                    self.touched.push(v);
                }
                if on {
                    self.on[slot] += 1;
                } else {
                    self.off[slot] += 1;
                }
            }
        }
        let parent = leaf_log_marginal(leaf.counts);
        let mut best: Option<Candidate> = None;
        for &v in &self.touched {
            let slot = v as usize;
            let present = LeafCounts::new(self.on[slot] as u64, self.off[slot] as u64);
            let absent = LeafCounts::new(leaf.counts.n1 - present.n1, leaf.counts.n0 - present.n0);
            self.on[slot] = 0;
            self.off[slot] = 0;
            let delta = self.ln_kappa + leaf_log_marginal(present) + leaf_log_marginal(absent) - parent;
            if delta > 0.0 {
                let better = match best {
                    None => true,
                    Some(b) => delta > b.delta || (delta == b.delta && v < b.var),
                };
                if better {
                    best = Some(Candidate { delta, var: v });
                }
            }
        }
        self.touched.clear();
        best
    }

    fn grow(&mut self, space: &VariableSpace, target: VariableId) -> DecisionTree {
        let all: Vec<u32> = (0..self.cases.len() as u32).collect();
        let mut slots = vec![Slot::Leaf(self.counts(&all))];
        let mut root = FrontierLeaf {
            slot: 0,
            counts: self.counts(&all),
            cases: all,
            used: Vec::new(),
            path: Vec::new(),
            best: None,
        };
        root.best = self.best_split(&root);
        let mut frontier = vec![root];

        while let Some(pick) = pick_leaf(&frontier) {
            let leaf = frontier.swap_remove(pick);
            let var = leaf.best.expect("picked leaves have a split").var;
            let (present, absent): (Vec<u32>, Vec<u32>) =
                leaf.cases.iter().partition(|&&i| self.cases.has(i as usize, var));
            let mut used = leaf.used.clone();
            used.push(var);
            let mut children = [(absent, false), (present, true)].map(|(cases, bit)| {
                let counts = self.counts(&cases);
                slots.push(Slot::Leaf(counts));
                let mut path = leaf.path.clone();
                path.push(bit);
                FrontierLeaf { slot: slots.len() - 1, cases, counts, used: used.clone(), path, best: None }
            });
            slots[leaf.slot] = Slot::Split { var, absent: children[0].slot, present: children[1].slot };
            for child in &mut children {
                child.best = self.best_split(child);
            }
            frontier.extend(children);
        }

        DecisionTree { target, root: build_node(&slots, 0, space) }
    }
}

/// Highest delta; ties go to the smaller variable, then the shallower, then the leftmost leaf.
fn pick_leaf(frontier: &[FrontierLeaf]) -> Option<usize> {
    let mut pick: Option<usize> = None;
    for (i, leaf) in frontier.iter().enumerate() {
        let Some(cand) = leaf.best else { continue };
        let better = match pick {
            None => true,
            Some(p) => {
                let (other, best) = (&frontier[p], frontier[p].best.unwrap());
                cand.delta
                    .partial_cmp(&best.delta)
                    .unwrap_or(Ordering::Equal)
                    .then(best.var.cmp(&cand.var))
                    .then(other.path.len().cmp(&leaf.path.len()))
                    .then(other.path.cmp(&leaf.path))
                    == Ordering::Greater
            }
        };
        if better {
            pick = Some(i);
        }
    }
    pick
}

fn build_node(slots: &[Slot], at: usize, space: &VariableSpace) -> Node {
    match slots[at] {
        Slot::Leaf(c) => Node::Leaf(c),
        Slot::Split { var, absent, present } => Node::Split {
            var: space.variable(var as usize),
            absent: Box::new(build_node(slots, absent, space)),
            present: Box::new(build_node(slots, present, space)),
        },
    }
}

fn grow_indexed(
    cases: &IndexedCases,
    space: &VariableSpace,
    target: VariableId,
    candidates: &[VariableId],
    params: ScoreParams,
) -> DecisionTree {
    let target_index = space.index_of(target).expect("target belongs to the space") as u32;
    let mut is_candidate = vec![false; space.len()];
    for v in candidates {
        if *v != target {
            if let Some(i) = space.index_of(*v) {
                is_candidate[i] = true;
            }
        }
    }
    let mut grower = Grower {
        cases,
        target_on: (0..cases.len()).map(|i| cases.has(i, target_index)).collect(),
        is_candidate,
        ln_kappa: params.ln_kappa(),
        on: vec![0; space.len()],
        off: vec![0; space.len()],
        touched: Vec::new(),
    };
    grower.grow(space, target)
}

/// Greedily grows a tree for `target`: starting from one leaf, repeatedly applies
/// the split with the largest strictly positive score gain until none is left.
pub fn grow_tree(target: VariableId, candidates: &[VariableId], data: &CaseSet, params: ScoreParams) -> Result<DecisionTree> {
    if !data.space.contains(target) {
        return Err(Error::InvalidConfig(format!("target {target} is not in the case space")));
    }
    if candidates.contains(&target) {
        return Err(Error::InvalidConfig(format!("target {target} listed as its own predictor")));
    }
    if let Some(bad) = candidates.iter().find(|v| !data.space.contains(**v)) {
        return Err(Error::InvalidConfig(format!("candidate {bad} is not in the case space")));
    }
    let cases = IndexedCases::new(data);
    Ok(grow_indexed(&cases, &data.space, target, candidates, params))
}

/// One tree per item, trained independently (and in parallel) on `data`.
pub fn learn_forest(data: &CaseSet, params: ScoreParams) -> Forest {
    let space = data.space;
    let cases = IndexedCases::new(data);
    let trees = (1..=space.items())
        .into_par_iter()
        .map(|j| grow_indexed(&cases, &space, space.target_of(j), &space.candidates_for(j), params))
        .collect();
    Forest { space, trees }
}
