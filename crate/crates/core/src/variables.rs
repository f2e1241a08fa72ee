//! Binary variables, sparse cases and the variable spaces they live in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// What a binary variable records about an item.
///
/// The declaration order is the tie-break order used when the tree learner
/// compares equally scored splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    /// The item occurs in the (bag-of-votes) history.
    Item,
    /// The item is the vote being predicted.
    Target,
    /// The item was the vote `lag` positions back.
    Lag,
    /// The item occurred anywhere earlier in the history.
    Cache,
}

/// A binary variable. `lag` is non-zero exactly for [`Role::Lag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId {
    pub role: Role,
    pub item: usize,
    pub lag: usize,
}

impl VariableId {
    pub fn item(item: usize) -> Self {
        VariableId { role: Role::Item, item, lag: 0 }
    }

    pub fn target(item: usize) -> Self {
        VariableId { role: Role::Target, item, lag: 0 }
    }

    pub fn lag(item: usize, lag: usize) -> Self {
        assert!(lag >= 1, "lag offsets start at 1");
        VariableId { role: Role::Lag, item, lag }
    }

    pub fn cache(item: usize) -> Self {
        VariableId { role: Role::Cache, item, lag: 0 }
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Item => write!(f, "item:{}", self.item),
            Role::Target => write!(f, "target:{}", self.item),
            Role::Lag => write!(f, "lag:{}:{}", self.item, self.lag),
            Role::Cache => write!(f, "cache:{}", self.item),
        }
    }
}

impl FromStr for VariableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::MalformedModel(format!("bad variable {s:?}"));
        let mut parts = s.split(':');
        let role = parts.next().ok_or_else(bad)?;
        let item: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        if item == 0 {
            return Err(bad());
        }
        let var = match role {
            "item" => VariableId::item(item),
            "target" => VariableId::target(item),
            "cache" => VariableId::cache(item),
            "lag" => {
                let lag: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
                if lag == 0 {
                    return Err(bad());
                }
                VariableId::lag(item, lag)
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(var)
    }
}

impl Serialize for VariableId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariableId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The set of variables a case set is expressed in.
///
/// Variables have a dense index whose order agrees with [`VariableId`]'s `Ord`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableSpace {
    /// One `item` variable per item.
    Bag { items: usize },
    /// `target`, `lag` (offsets `1..=history_len`) and `cache` variables per item.
    Expanded { items: usize, history_len: usize },
}

impl VariableSpace {
    pub fn items(&self) -> usize {
        match *self {
            VariableSpace::Bag { items } | VariableSpace::Expanded { items, .. } => items,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            VariableSpace::Bag { items } => items,
            VariableSpace::Expanded { items, history_len } => items * (history_len + 2),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, var: VariableId) -> bool {
        self.index_of(var).is_some()
    }

    pub fn index_of(&self, var: VariableId) -> Option<usize> {
        let items = self.items();
        if var.item == 0 || var.item > items {
            return None;
        }
        let k = var.item - 1;
        match (*self, var.role) {
            (VariableSpace::Bag { .. }, Role::Item) => Some(k),
            (VariableSpace::Expanded { .. }, Role::Target) => Some(k),
            (VariableSpace::Expanded { history_len, .. }, Role::Lag) => {
                (var.lag >= 1 && var.lag <= history_len).then(|| items + k * history_len + var.lag - 1)
            }
            (VariableSpace::Expanded { history_len, .. }, Role::Cache) => {
                Some(items * (history_len + 1) + k)
            }
            _ => None,
        }
    }

    pub fn variable(&self, index: usize) -> VariableId {
        let items = self.items();
        match *self {
            VariableSpace::Bag { .. } => VariableId::item(index + 1),
            VariableSpace::Expanded { history_len, .. } => {
                if index < items {
                    VariableId::target(index + 1)
                } else if index < items * (history_len + 1) {
                    let rel = index - items;
                    VariableId::lag(rel / history_len + 1, rel % history_len + 1)
                } else {
                    VariableId::cache(index - items * (history_len + 1) + 1)
                }
            }
        }
    }

    /// The variable a tree for `item` predicts.
    pub fn target_of(&self, item: usize) -> VariableId {
        match self {
            VariableSpace::Bag { .. } => VariableId::item(item),
            VariableSpace::Expanded { .. } => VariableId::target(item),
        }
    }

    /// Predictor candidates for `item`'s tree, in ascending order: every other item
    /// variable in bag space, every lag and cache variable in expanded space.
    pub fn candidates_for(&self, item: usize) -> Vec<VariableId> {
        match *self {
            VariableSpace::Bag { items } => (1..=items).filter(|&k| k != item).map(VariableId::item).collect(),
            VariableSpace::Expanded { items, .. } => (items..self.len()).map(|i| self.variable(i)).collect(),
        }
    }
}

/// A sparse binary case: the listed variables are x1, every other variable is x0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BinaryCase {
    positives: Vec<VariableId>,
}

impl BinaryCase {
    pub fn new(mut positives: Vec<VariableId>) -> Self {
        positives.sort_unstable();
        positives.dedup();
        BinaryCase { positives }
    }

    pub fn positives(&self) -> &[VariableId] {
        &self.positives
    }

    pub fn is_positive(&self, var: VariableId) -> bool {
        self.positives.binary_search(&var).is_ok()
    }

    pub fn targets(&self) -> impl Iterator<Item = VariableId> + '_ {
        self.positives.iter().copied().filter(|v| v.role == Role::Target)
    }

    /// The case without its target variables.
    pub fn predictors(&self) -> BinaryCase {
        BinaryCase {
            positives: self.positives.iter().copied().filter(|v| v.role != Role::Target).collect(),
        }
    }
}

impl fmt::Display for BinaryCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, var) in self.positives.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{var}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    pub space: VariableSpace,
    pub cases: Vec<BinaryCase>,
}

impl CaseSet {
    pub fn new(space: VariableSpace, cases: Vec<BinaryCase>) -> Result<Self, Error> {
        for case in &cases {
            if let Some(bad) = case.positives().iter().find(|v| !space.contains(**v)) {
                return Err(Error::InvalidConfig(format!("variable {bad} is not in the case space")));
            }
        }
        Ok(CaseSet { space, cases })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Debug dump, one case per line.
    pub fn write_dump<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        for case in &self.cases {
            writeln!(writer, "{case}")?;
        }
        Ok(())
    }
}
