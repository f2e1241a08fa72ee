//! Collaborative filtering as next-vote prediction over ordered vote histories.
//!
//! Histories are turned into sparse binary cases by one of three transformations
//! ([`transforms`]): an order-free bag of votes, length bins with optional prefix
//! expansion, or per-vote expansion with lag and cache variables. A forest of
//! Bayesian-scored probabilistic decision trees ([`tree`]) or a latent-class model
//! ([`cluster`]) is learned from the cases; [`recommender`] turns it into ranked
//! next-vote distributions and [`evaluation`] scores them on held-out sessions.

pub mod catalog;
pub mod cluster;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod recommender;
pub mod transforms;
pub mod tree;
pub mod variables;

pub use catalog::{corpus_stats, parse_sessions, split_train_test, CorpusStats, ItemCatalog, SessionDataset, SplitSpec, VoteHistory};
pub use cluster::{cluster_loglik, cluster_predict, em_fit, ClusterModel, EmConfig, EmFit};
pub use error::{Error, Result};
pub use evaluation::{cf_accuracy_list, cf_accuracy_pervote, evaluate, halflife_weight, log_score, EvalConfig, EvalReport, ListOutcome};
pub use model::{train_model, ModelVariant, TrainConfig, TrainedModel, Transform};
pub use recommender::{predict_next, recommend, recommend_filtered, select_bin, Prediction};
pub use transforms::{
    bag_of_votes, bag_of_votes_case, bin_assign, build_evidence_bag, build_evidence_expanded, compute_bin_bounds, expand,
    expand_history, BinScheme, ExpansionScheme, LengthBin,
};
pub use tree::{grow_tree, leaf_log_marginal, learn_forest, tree_log_score, tree_predict, DecisionTree, Forest, LeafCounts, Node, ScoreParams};
pub use variables::{BinaryCase, CaseSet, Role, VariableId, VariableSpace};
