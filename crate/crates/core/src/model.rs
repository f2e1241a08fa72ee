//! Trained model families, end-to-end training, and the model document format.
//!
//! A model file is one JSON document:
//!
//! ```text
//! { "format": "seqcf-model", "version": 1,
//!   "catalog_fingerprint": "<sha256>", "catalog": ["tok1", ...],
//!   "config": { ...training settings... },
//!   "model": { "kind": "baseline" | "binned" | "expanded" | "cluster", ... } }
//! ```
//!
//! Trees nest as `{"split": "<var>", "x0": <node>, "x1": <node>}` with leaves
//! `{"leaf": [n1, n0]}`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{ItemCatalog, SessionDataset};
use crate::cluster::{em_fit, ClusterModel, EmConfig};
use crate::error::{Error, Result};
use crate::transforms::{bag_of_votes, bin_assign, compute_bin_bounds, expand, BinScheme, ExpansionScheme};
use crate::tree::{learn_forest, Forest, ScoreParams, DEFAULT_KAPPA};
use crate::variables::VariableSpace;

pub const FORMAT_NAME: &str = "seqcf-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Bag,
    Bin,
    Expand,
    Cluster,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Bag => "bag",
            Transform::Bin => "bin",
            Transform::Expand => "expand",
            Transform::Cluster => "cluster",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" => Ok(Transform::Bag),
            "bin" => Ok(Transform::Bin),
            "expand" => Ok(Transform::Expand),
            "cluster" => Ok(Transform::Cluster),
            _ => Err(Error::InvalidConfig(format!("unknown transform {s:?}"))),
        }
    }
}

/// Training settings. Fields that do not apply to `transform` are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub transform: Transform,
    pub kappa: f64,
    pub bins: Option<usize>,
    pub prefix_mode: Option<bool>,
    pub history_len: Option<usize>,
    pub em: Option<EmConfig>,
}

impl TrainConfig {
    pub fn baseline() -> Self {
        TrainConfig { transform: Transform::Bag, kappa: DEFAULT_KAPPA, bins: None, prefix_mode: None, history_len: None, em: None }
    }

    pub fn binned(bins: usize, prefix_mode: bool) -> Self {
        TrainConfig { transform: Transform::Bin, bins: Some(bins), prefix_mode: Some(prefix_mode), ..Self::baseline() }
    }

    pub fn expanded(history_len: usize) -> Self {
        TrainConfig { transform: Transform::Expand, history_len: Some(history_len), ..Self::baseline() }
    }

    pub fn cluster(em: EmConfig) -> Self {
        TrainConfig { transform: Transform::Cluster, em: Some(em), ..Self::baseline() }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = (self.bins.is_some(), self.prefix_mode.is_some(), self.history_len.is_some(), self.em.is_some());
        let expected = match self.transform {
            Transform::Bag => (false, false, false, false),
            Transform::Bin => (true, true, false, false),
            Transform::Expand => (false, false, true, false),
            Transform::Cluster => (false, false, false, true),
        };
        if fields != expected {
            return Err(Error::InvalidConfig(format!(
                "settings {:?} do not fit the {} transform",
                self, self.transform
            )));
        }
        if self.transform != Transform::Cluster {
            ScoreParams::new(self.kappa)?;
        }
        if let Some(em) = &self.em {
            em.validate()?;
        }
        if self.bins == Some(0) {
            return Err(Error::InvalidConfig("bin count must be at least 1".into()));
        }
        if self.history_len == Some(0) {
            return Err(Error::InvalidConfig("history length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    Baseline { forest: Forest },
    Binned { scheme: BinScheme, forests: Vec<Forest> },
    Expanded { scheme: ExpansionScheme, forest: Forest },
    Cluster { model: ClusterModel },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub catalog: ItemCatalog,
    pub config: TrainConfig,
    pub variant: ModelVariant,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    catalog_fingerprint: String,
    catalog: ItemCatalog,
    config: TrainConfig,
    model: ModelVariant,
}

/// Per-forest training summary: case count and learned leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestSummary {
    pub cases: u64,
    pub leaves: usize,
}

impl TrainedModel {
    pub fn item_count(&self) -> usize {
        self.catalog.len()
    }

    pub fn forests(&self) -> Vec<&Forest> {
        match &self.variant {
            ModelVariant::Baseline { forest } | ModelVariant::Expanded { forest, .. } => vec![forest],
            ModelVariant::Binned { forests, .. } => forests.iter().collect(),
            ModelVariant::Cluster { .. } => vec![],
        }
    }

    /// One entry per forest (one per bin for binned models).
    pub fn summary(&self) -> Vec<ForestSummary> {
        self.forests()
            .into_iter()
            .map(|f| ForestSummary {
                cases: f.trees.first().map_or(0, |t| t.root.counts().total()),
                leaves: f.leaf_count(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let items = self.item_count();
        let check_forest = |forest: &Forest, space: VariableSpace| -> Result<()> {
            if forest.space != space {
                return Err(Error::MalformedModel(format!(
                    "forest space {:?} does not match {:?}",
                    forest.space, space
                )));
            }
            forest.validate()
        };
        match &self.variant {
            ModelVariant::Baseline { forest } => check_forest(forest, VariableSpace::Bag { items }),
            ModelVariant::Binned { scheme, forests } => {
                scheme.validate()?;
                if forests.len() != scheme.bin_count() {
                    return Err(Error::MalformedModel(format!(
                        "{} forests for {} bins",
                        forests.len(),
                        scheme.bin_count()
                    )));
                }
                forests.iter().try_for_each(|f| check_forest(f, VariableSpace::Bag { items }))
            }
            ModelVariant::Expanded { scheme, forest } => {
                ExpansionScheme::new(scheme.history_len)?;
                check_forest(forest, scheme.space(items))
            }
            ModelVariant::Cluster { model } => {
                model.validate()?;
                if model.item_count() != items {
                    return Err(Error::MalformedModel(format!(
                        "cluster model covers {} items, catalog has {items}",
                        model.item_count()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let doc = ModelDocument {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            catalog_fingerprint: self.catalog.fingerprint(),
            catalog: self.catalog.clone(),
            config: self.config.clone(),
            model: self.variant.clone(),
        };
        let mut writer = std::io::BufWriter::new(writer);
        serde_json::to_writer_pretty(&mut writer, &doc).map_err(|e| Error::MalformedModel(e.to_string()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn to_document(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.save(&mut out)?;
        Ok(out)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_reader(std::io::BufReader::new(reader));
        de.disable_recursion_limit();
        let doc = ModelDocument::deserialize(&mut de).map_err(|e| Error::MalformedModel(e.to_string()))?;
        de.end().map_err(|e| Error::MalformedModel(e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::MalformedModel(format!("unexpected format {:?}", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::MalformedModel(format!("unsupported version {}", doc.version)));
        }
        if ItemCatalog::from_tokens(doc.catalog.tokens().to_vec())?.fingerprint() != doc.catalog_fingerprint {
            return Err(Error::CatalogMismatch("model catalog does not match its recorded fingerprint".into()));
        }
        let model = TrainedModel { catalog: doc.catalog, config: doc.config, variant: doc.model };
        model.config.validate()?;
        model.validate()?;
        Ok(model)
    }
}

/// Trains the model family selected by `config` on `data`.
pub fn train_model(data: &SessionDataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let params = ScoreParams::new(config.kappa).unwrap_or_default();
    let variant = match config.transform {
        Transform::Bag => ModelVariant::Baseline { forest: learn_forest(&bag_of_votes(data), params) },
        Transform::Bin => {
            let scheme = compute_bin_bounds(data, config.bins.unwrap_or(1), config.prefix_mode.unwrap_or(true))?;
            let forests = bin_assign(data, &scheme).iter().map(|cases| learn_forest(cases, params)).collect();
            ModelVariant::Binned { scheme, forests }
        }
        Transform::Expand => {
            let scheme = ExpansionScheme::new(config.history_len.unwrap_or(1))?;
            ModelVariant::Expanded { scheme, forest: learn_forest(&expand(data, scheme), params) }
        }
        Transform::Cluster => {
            let em = config.em.unwrap_or_default();
            ModelVariant::Cluster { model: em_fit(&bag_of_votes(data), &em)?.model }
        }
    };
    Ok(TrainedModel { catalog: data.catalog.clone(), config: config.clone(), variant })
}
