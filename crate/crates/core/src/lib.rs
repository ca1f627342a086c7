//! Group probability-weighted tree sums.
//!
//! Heterogeneous tabular data often splits into known groups (age bands,
//! collection sites) that reward separate models yet share structure. This
//! crate first fits a classifier for group-membership probabilities
//! P(G = g | X), then uses those probabilities as soft instance weights
//! when fitting a greedy tree-sum (or plain tree) outcome model per group,
//! so each group's model borrows strength from similar out-of-group rows
//! while staying a small, auditable rule set.
//!
//! The crate also ships the pooled and per-group baselines, the
//! specificity-at-sensitivity metric family, the two-stage hyperparameter
//! selection protocol, CSV ingestion with configurable missing-value
//! policies, model (de)serialization, and a synthetic four-cluster
//! experiment comparing all methods.

pub mod dataset;
pub mod error;
pub mod figs;
pub mod ingest;
pub mod membership;
pub mod metrics;
pub mod model_file;
pub mod pipeline;
pub mod render;
pub mod schema;
pub mod select;
pub mod sim;
pub mod tree;

pub use dataset::{class_weights, split_dataset, ClassWeights, Dataset, Features, SplitSpec};
pub use error::{Error, Result};
pub use figs::{fit_figs, fit_figs_with_trace, TreeSumModel};
pub use ingest::{load_csv, read_csv, Materializer, RawTable};
pub use membership::{
    fit_gbt, fit_logistic, GradientBoostedModel, LogisticModel, MembershipModel, MembershipSpec,
};
pub use metrics::{
    accuracy, avg_precision, f1_score, roc_auc, spec_at_sens, MetricReport, SENSITIVITY_LEVELS,
};
pub use model_file::{from_model_file, to_model_file, LoadedModel, ModelFile};
pub use pipeline::{
    compute_instance_weights, fit_pipeline, fit_pipeline_with_membership,
    fit_with_group_probabilities, GFigsModel, Learner, PipelineConfig, SplitBudget, Variant,
    POOLED_GROUP,
};
pub use render::{render_model, render_tree};
pub use schema::{ColumnKind, ColumnSpec, FeatureSchema, ImputePolicy};
pub use select::{
    run_selection, two_stage_select, Selection, SelectionCriterion, SelectionGrid,
    SelectionReport, ValidationScore,
};
pub use sim::{gen_sim_data, run_sim_experiment, SimConfig, SimExperimentReport};
pub use tree::{best_split, fit_cart, weighted_impurity, Node, SplitCandidate, Tree};
