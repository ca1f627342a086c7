//! Versioned JSON model files.
//!
//! A model file embeds everything needed to reproduce predictions: the
//! fitted preprocessing (schema, medians, category layouts), the optional
//! membership model, and the per-group trees with splits referencing
//! features by name. Serialization is canonical: loading a file and saving
//! it again reproduces the bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::figs::TreeSumModel;
use crate::ingest::Materializer;
use crate::membership::{
    GradientBoostedModel, GroupClassifier, LogisticModel, MembershipModel, MembershipSpec,
};
use crate::pipeline::{GFigsModel, PipelineConfig};
use crate::tree::{Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NodeFile {
    Split { feature: String, threshold: f64, left: usize, right: usize },
    Leaf { delta_risk: f64, weight_sum: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<NodeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModelFile {
    pub label: String,
    pub intercept: f64,
    pub total_splits: usize,
    pub trees: Vec<TreeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierFile {
    Logistic {
        features: Vec<String>,
        dropped: Vec<String>,
        means: Vec<f64>,
        stds: Vec<f64>,
        coefficients: Vec<f64>,
        intercept: f64,
        c: f64,
    },
    Boosted {
        trees: Vec<TreeFile>,
        n_trees_config: usize,
        learning_rate: f64,
        max_depth: usize,
        initial_log_odds: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFile {
    pub groups: Vec<String>,
    pub excluded_features: Vec<String>,
    pub spec: MembershipSpec,
    pub classifiers: Vec<ClassifierFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub fingerprint: String,
    pub pipeline: PipelineConfig,
    pub outcome_column: String,
    pub group_column: Option<String>,
    pub preprocessing: Materializer,
    pub feature_names: Vec<String>,
    pub membership_feature_names: Vec<String>,
    pub membership: Option<MembershipFile>,
    pub groups: Vec<GroupModelFile>,
}

/// A model file resolved back into executable form.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub model: GFigsModel,
    pub materializer: Materializer,
    pub outcome_column: String,
    pub group_column: Option<String>,
}

fn tree_to_file(tree: &Tree, feature_names: &[String]) -> Result<TreeFile> {
    let nodes = tree
        .nodes
        .iter()
        .map(|node| match node {
            Node::Internal { feature, threshold, left, right } => {
                let name = feature_names.get(*feature).ok_or_else(|| {
                    Error::Schema(format!("split feature index {feature} out of range"))
                })?;
                Ok(NodeFile::Split {
                    feature: name.clone(),
                    threshold: *threshold,
                    left: *left,
                    right: *right,
                })
            }
            Node::Leaf { value, weight_sum, n } => Ok(NodeFile::Leaf {
                delta_risk: *value,
                weight_sum: *weight_sum,
                n: *n,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TreeFile { nodes })
}

fn tree_from_file(file: &TreeFile, feature_names: &[String]) -> Result<Tree> {
    let mut split_count = 0;
    let nodes = file
        .nodes
        .iter()
        .map(|node| match node {
            NodeFile::Split { feature, threshold, left, right } => {
                let idx = feature_names.iter().position(|n| n == feature).ok_or_else(|| {
                    Error::Schema(format!("feature {feature:?} does not resolve against the schema"))
                })?;
                if *left >= file.nodes.len() || *right >= file.nodes.len() {
                    return Err(Error::Format("tree child index out of range".into()));
                }
                split_count += 1;
                Ok(Node::Internal { feature: idx, threshold: *threshold, left: *left, right: *right })
            }
            NodeFile::Leaf { delta_risk, weight_sum, n } => Ok(Node::Leaf {
                value: *delta_risk,
                weight_sum: *weight_sum,
                n: *n,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    if nodes.is_empty() {
        return Err(Error::Format("tree has no nodes".into()));
    }
    Ok(Tree { nodes, split_count })
}

fn membership_to_file(
    m: &MembershipModel,
    membership_feature_names: &[String],
) -> Result<MembershipFile> {
    let name_of = |j: usize| -> Result<String> {
        membership_feature_names
            .get(j)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("membership feature index {j} out of range")))
    };
    let classifiers = m
        .classifiers()
        .into_iter()
        .map(|(_, clf)| match clf {
            GroupClassifier::Logistic(l) => Ok(ClassifierFile::Logistic {
                features: l.features.iter().map(|&j| name_of(j)).collect::<Result<Vec<_>>>()?,
                dropped: l.dropped.iter().map(|&j| name_of(j)).collect::<Result<Vec<_>>>()?,
                means: l.means.clone(),
                stds: l.stds.clone(),
                coefficients: l.coefficients.clone(),
                intercept: l.intercept,
                c: l.c,
            }),
            GroupClassifier::Boosted(b) => Ok(ClassifierFile::Boosted {
                trees: b
                    .trees
                    .iter()
                    .map(|t| tree_to_file(t, membership_feature_names))
                    .collect::<Result<Vec<_>>>()?,
                n_trees_config: b.n_trees_config,
                learning_rate: b.learning_rate,
                max_depth: b.max_depth,
                initial_log_odds: b.initial_log_odds,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MembershipFile {
        groups: m.groups.clone(),
        excluded_features: m.excluded_features.clone(),
        spec: m.spec,
        classifiers,
    })
}

pub fn to_model_file(
    model: &GFigsModel,
    materializer: &Materializer,
    outcome_column: &str,
    group_column: Option<&str>,
) -> Result<ModelFile> {
    let groups = model
        .groups
        .iter()
        .map(|(label, tsm)| {
            let trees = tsm
                .trees
                .iter()
                .map(|t| tree_to_file(t, &model.feature_names))
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupModelFile {
                label: label.clone(),
                intercept: tsm.intercept,
                total_splits: tsm.total_splits,
                trees,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let membership = model
        .membership
        .as_ref()
        .map(|m| membership_to_file(m, &model.membership_feature_names))
        .transpose()?;
    Ok(ModelFile {
        format_version: FORMAT_VERSION,
        fingerprint: model.config.fingerprint(),
        pipeline: model.config.clone(),
        outcome_column: outcome_column.to_string(),
        group_column: group_column.map(str::to_string),
        preprocessing: materializer.clone(),
        feature_names: model.feature_names.clone(),
        membership_feature_names: model.membership_feature_names.clone(),
        membership,
        groups,
    })
}

fn membership_from_file(
    file: &MembershipFile,
    membership_feature_names: &[String],
) -> Result<MembershipModel> {
    let resolve = |name: &str| -> Result<usize> {
        membership_feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("feature {name:?} does not resolve against the schema")))
    };
    let classifiers = file
        .classifiers
        .iter()
        .map(|clf| match clf {
            ClassifierFile::Logistic {
                features,
                dropped,
                means,
                stds,
                coefficients,
                intercept,
                c,
            } => {
                let features = features.iter().map(|n| resolve(n)).collect::<Result<Vec<_>>>()?;
                let dropped = dropped.iter().map(|n| resolve(n)).collect::<Result<Vec<_>>>()?;
                Ok(GroupClassifier::Logistic(LogisticModel {
                    features,
                    dropped,
                    means: means.clone(),
                    stds: stds.clone(),
                    coefficients: coefficients.clone(),
                    intercept: *intercept,
                    c: *c,
                }))
            }
            ClassifierFile::Boosted {
                trees,
                n_trees_config,
                learning_rate,
                max_depth,
                initial_log_odds,
            } => {
                let trees = trees
                    .iter()
                    .map(|t| tree_from_file(t, membership_feature_names))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GroupClassifier::Boosted(GradientBoostedModel {
                    trees,
                    n_trees_config: *n_trees_config,
                    learning_rate: *learning_rate,
                    max_depth: *max_depth,
                    initial_log_odds: *initial_log_odds,
                }))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    MembershipModel::from_classifiers(
        file.groups.clone(),
        file.excluded_features.clone(),
        file.spec,
        classifiers,
    )
}

pub fn from_model_file(file: &ModelFile) -> Result<LoadedModel> {
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut groups = BTreeMap::new();
    for group in &file.groups {
        let trees = group
            .trees
            .iter()
            .map(|t| tree_from_file(t, &file.feature_names))
            .collect::<Result<Vec<_>>>()?;
        groups.insert(
            group.label.clone(),
            TreeSumModel {
                intercept: group.intercept,
                trees,
                total_splits: group.total_splits,
                n_features: file.feature_names.len(),
            },
        );
    }
    let membership = file
        .membership
        .as_ref()
        .map(|m| membership_from_file(m, &file.membership_feature_names))
        .transpose()?;
    let model = GFigsModel {
        config: file.pipeline.clone(),
        feature_names: file.feature_names.clone(),
        membership_feature_names: file.membership_feature_names.clone(),
        groups,
        membership,
    };
    Ok(LoadedModel {
        model,
        materializer: file.preprocessing.clone(),
        outcome_column: file.outcome_column.clone(),
        group_column: file.group_column.clone(),
    })
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<ModelFile> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelFile> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
