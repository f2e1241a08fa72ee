//! Session-trace ingest: the item catalog, vote histories and train/test splitting.
//!
//! A session file holds one session per line. Tokens are separated by spaces or
//! tabs and appear in time order; lines starting with `#` are comments. Tokens are
//! opaque strings mapped to dense 1-based item indices in order of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Bidirectional map between external item tokens and indices `1..=item_count`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ItemCatalog {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for ItemCatalog {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        ItemCatalog { tokens, index }
    }
}

impl From<ItemCatalog> for Vec<String> {
    fn from(catalog: ItemCatalog) -> Self {
        catalog.tokens
    }
}

impl ItemCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Catalog whose tokens are the decimal strings `"1"..="n"`, so token and index coincide.
    pub fn numbered(n: usize) -> Self {
        (1..=n).map(|i| i.to_string()).collect::<Vec<_>>().into()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = ItemCatalog::new();
        for (i, token) in tokens.into_iter().enumerate() {
            let token = token.into();
            if catalog.index.contains_key(&token) {
                return Err(Error::MalformedCatalog {
                    line: i + 1,
                    reason: format!("duplicate token {token:?}"),
                });
            }
            catalog.intern(&token);
        }
        Ok(catalog)
    }

    /// The number of items, γ.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_owned());
        let i = self.tokens.len();
        self.index.insert(token.to_owned(), i);
        i
    }

    /// Hex SHA-256 over the ordered token list; identifies a catalog inside model files.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update((token.len() as u64).to_le_bytes());
            hasher.update(token.as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Reads `index<TAB>token` lines. Indices must be exactly `1..=n` in order.
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::MalformedCatalog {
                line: lineno + 1,
                reason,
            };
            let (index, token) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected index<TAB>token".into()))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad index {index:?}")))?;
            if index != tokens.len() + 1 {
                return Err(malformed(format!(
                    "expected index {}, found {index}",
                    tokens.len() + 1
                )));
            }
            if token.is_empty() || token.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(malformed(format!("bad token {token:?}")));
            }
            tokens.push(token.to_owned());
        }
        ItemCatalog::from_tokens(tokens)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        for (i, token) in self.tokens.iter().enumerate() {
            writeln!(writer, "{}\t{}", i + 1, token)?;
        }
        Ok(())
    }
}

/// One user's (or session's) ordered votes, as 1-based item indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteHistory(Vec<usize>);

impl VoteHistory {
    /// Panics if `votes` is empty; histories always hold at least one vote.
    pub fn new(votes: Vec<usize>) -> Self {
        assert!(!votes.is_empty(), "a vote history holds at least one vote");
        VoteHistory(votes)
    }

    pub fn votes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prefix(&self, len: usize) -> &[usize] {
        &self.0[..len.min(self.0.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionDataset {
    pub catalog: ItemCatalog,
    pub histories: Vec<VoteHistory>,
}

impl SessionDataset {
    /// Checks every index against the catalog.
    pub fn new(catalog: ItemCatalog, histories: Vec<VoteHistory>) -> Result<Self> {
        let item_count = catalog.len();
        for history in &histories {
            if let Some(&index) = history.votes().iter().find(|&&v| v == 0 || v > item_count) {
                return Err(Error::ItemOutOfRange { index, item_count });
            }
        }
        Ok(SessionDataset { catalog, histories })
    }

    pub fn item_count(&self) -> usize {
        self.catalog.len()
    }

    pub fn total_votes(&self) -> usize {
        self.histories.iter().map(VoteHistory::len).sum()
    }

    pub fn session_count(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    /// Writes the sessions back in the line format, using catalog tokens.
    pub fn write_sessions<W: Write>(&self, mut writer: W) -> Result<()> {
        for history in &self.histories {
            let line: Vec<&str> = history
                .votes()
                .iter()
                .map(|&v| self.catalog.token(v).expect("indices validated at construction"))
                .collect();
            writeln!(writer, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Parses a session file.
///
/// With `catalog = None` a fresh catalog is built from the tokens seen. With
/// `Some(catalog)` the catalog is frozen and unseen tokens are an error.
pub fn parse_sessions<R: BufRead>(mut reader: R, catalog: Option<&ItemCatalog>) -> Result<SessionDataset> {
    let mut building = ItemCatalog::new();
    let mut histories = Vec::new();
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lineno += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| Error::MalformedToken {
            line: lineno,
            token: String::from_utf8_lossy(&buf).trim().to_owned(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut votes = Vec::new();
        for token in line.split([' ', '\t']).filter(|t| !t.is_empty()) {
            if token.chars().any(char::is_control) {
                return Err(Error::MalformedToken {
                    line: lineno,
                    token: token.to_owned(),
                });
            }
            let index = match catalog {
                Some(frozen) => frozen.index_of(token).ok_or_else(|| Error::UnknownToken {
                    line: lineno,
                    token: token.to_owned(),
                })?,
                None => building.intern(token),
            };
            votes.push(index);
        }
        histories.push(VoteHistory::new(votes));
    }
    if histories.is_empty() {
        return Err(Error::EmptyInput);
    }
    let catalog = catalog.cloned().unwrap_or(building);
    Ok(SessionDataset { catalog, histories })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Splits whole sessions into (train, test). Each side keeps the input order.
pub fn split_train_test(data: &SessionDataset, spec: SplitSpec) -> Result<(SessionDataset, SessionDataset)> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "test fraction {} is outside (0, 1)",
            spec.test_fraction
        )));
    }
    let n = data.session_count();
    let test_count = (n as f64 * spec.test_fraction).round() as usize;
    if test_count == 0 || test_count == n {
        return Err(Error::InvalidSplit(format!(
            "fraction {} of {n} sessions leaves one side empty",
            spec.test_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut is_test = vec![false; n];
    for &i in &order[..test_count] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (history, &t) in data.histories.iter().zip(&is_test) {
        if t { &mut test } else { &mut train }.push(history.clone());
    }
    Ok((
        SessionDataset { catalog: data.catalog.clone(), histories: train },
        SessionDataset { catalog: data.catalog.clone(), histories: test },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub session_count: usize,
    pub item_count: usize,
    pub total_votes: usize,
    pub mean_length: f64,
    pub median_length: f64,
    pub max_length: usize,
}

pub fn corpus_stats(data: &SessionDataset) -> Result<CorpusStats> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut lengths: Vec<usize> = data.histories.iter().map(VoteHistory::len).collect();
    lengths.sort_unstable();
    let n = lengths.len();
    let total: usize = lengths.iter().sum();
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    Ok(CorpusStats {
        session_count: n,
        item_count: data.item_count(),
        total_votes: total,
        mean_length: total as f64 / n as f64,
        median_length: median,
        max_length: lengths[n - 1],
    })
}
