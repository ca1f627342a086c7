//! The two-stage pipeline: membership probabilities combined with class
//! weights into instance weights, one outcome model fitted per group, and
//! group-routed prediction. Also provides the pooled and per-group
//! (separate) baseline variants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{class_weights, ClassWeights, Dataset};
use crate::error::{Error, Result};
use crate::figs::{fit_figs, TreeSumModel};
use crate::membership::{MembershipModel, MembershipSpec};
use crate::tree::fit_cart;

/// Key under which the single model of a pooled pipeline is stored.
pub const POOLED_GROUP: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Figs,
    Cart,
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Learner::Figs => write!(f, "figs"),
            Learner::Cart => write!(f, "cart"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// One model on all rows; the group column is ignored.
    Pooled,
    /// One model per group, fitted only on that group's rows.
    #[serde(alias = "sep")]
    Separate,
    /// One model per group, fitted on all rows weighted by membership
    /// probability.
    GroupWeighted,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Pooled => write!(f, "pooled"),
            Variant::Separate => write!(f, "sep"),
            Variant::GroupWeighted => write!(f, "group-weighted"),
        }
    }
}

/// Split budget per outcome model: one number for every group, or an
/// explicit per-group map (as produced by hyperparameter selection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitBudget {
    Uniform(usize),
    PerGroup(BTreeMap<String, usize>),
}

impl SplitBudget {
    pub fn for_group(&self, group: &str) -> Result<usize> {
        match self {
            SplitBudget::Uniform(k) => Ok(*k),
            SplitBudget::PerGroup(map) => map
                .get(group)
                .copied()
                .ok_or_else(|| Error::Config(format!("no split budget for group {group:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = match self {
            SplitBudget::Uniform(k) => *k < 1,
            SplitBudget::PerGroup(map) => map.is_empty() || map.values().any(|&k| k < 1),
        };
        if bad {
            return Err(Error::Config("split budgets must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub learner: Learner,
    pub variant: Variant,
    pub max_splits: SplitBudget,
    /// Membership model specification; required iff `variant` is
    /// group-weighted.
    pub membership: Option<MembershipSpec>,
    pub class_weighting: bool,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.max_splits.validate()?;
        match (self.variant, &self.membership) {
            (Variant::GroupWeighted, None) => Err(Error::Config(
                "group-weighted variant requires a membership model spec".into(),
            )),
            (Variant::Pooled | Variant::Separate, Some(_)) => Err(Error::Config(
                "membership model spec is only valid for the group-weighted variant".into(),
            )),
            _ => Ok(()),
        }
    }

    /// One-line summary embedded in model files.
    pub fn fingerprint(&self) -> String {
        let budget = match &self.max_splits {
            SplitBudget::Uniform(k) => k.to_string(),
            SplitBudget::PerGroup(map) => map
                .iter()
                .map(|(g, k)| format!("{g}:{k}"))
                .collect::<Vec<_>>()
                .join(","),
        };
        let membership = self
            .membership
            .as_ref()
            .map_or_else(|| "none".to_string(), |m| m.to_string());
        format!(
            "learner={} variant={} max_splits={} membership={} class_weighting={} seed={}",
            self.learner, self.variant, budget, membership, self.class_weighting, self.seed
        )
    }
}

/// A fitted pipeline: per-group tree-sum models plus whatever is needed to
/// route and audit predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GFigsModel {
    pub config: PipelineConfig,
    pub feature_names: Vec<String>,
    pub membership_feature_names: Vec<String>,
    pub groups: BTreeMap<String, TreeSumModel>,
    pub membership: Option<MembershipModel>,
}

impl GFigsModel {
    /// Predict the outcome probability for a feature row. `group` is
    /// ignored by pooled models and required otherwise.
    pub fn predict(&self, x: &[f64], group: Option<&str>) -> Result<f64> {
        let model = match self.config.variant {
            Variant::Pooled => self.groups.get(POOLED_GROUP).ok_or_else(|| {
                Error::Format("pooled model is missing its single entry".into())
            })?,
            _ => {
                let g = group.ok_or_else(|| {
                    Error::Routing("this model routes by group; pass a group label".into())
                })?;
                self.groups
                    .get(g)
                    .ok_or_else(|| Error::Routing(format!("unknown group label {g:?}")))?
            }
        };
        model.predict_proba(x)
    }

    /// Predictions for every row of a dataset, routed by its group column.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.n_rows())
            .map(|i| {
                let g = data.group.as_ref().map(|g| g[i].as_str());
                self.predict(data.row(i), g)
            })
            .collect()
    }

    pub fn total_splits(&self) -> usize {
        self.groups.values().map(|m| m.total_splits).sum()
    }
}

/// Instance weights for one group's outcome model: for every training row,
/// the class weight of its outcome times its membership probability for
/// `group`, times any base weight.
pub fn compute_instance_weights(
    train: &Dataset,
    membership: &MembershipModel,
    group: &str,
    class_w: &ClassWeights,
) -> Result<Vec<f64>> {
    let probs = membership.predict_group_column(train, group)?;
    Ok((0..train.n_rows())
        .map(|i| train.weights[i] * class_w.weight_for(train.y[i]) * probs[i])
        .collect())
}

/// Fit the configured pipeline, fitting the membership model (if any) on
/// the training data itself.
pub fn fit_pipeline(train: &Dataset, cfg: &PipelineConfig) -> Result<GFigsModel> {
    fit_pipeline_with_membership(train, None, cfg)
}

/// Fit the pipeline with an externally fitted membership model, e.g. one
/// estimated on the tuning partition as the selection protocol requires.
pub fn fit_pipeline_with_membership(
    train: &Dataset,
    membership: Option<MembershipModel>,
    cfg: &PipelineConfig,
) -> Result<GFigsModel> {
    cfg.validate()?;
    match cfg.variant {
        Variant::Pooled => fit_pooled(train, cfg),
        Variant::Separate => fit_separate(train, cfg),
        Variant::GroupWeighted => {
            let membership = match membership {
                Some(m) => m,
                None => {
                    let spec = cfg.membership.as_ref().expect("validated");
                    MembershipModel::fit(train, spec)?
                }
            };
            let groups = train.group_labels();
            if membership.groups != groups {
                return Err(Error::Validation(format!(
                    "membership model groups {:?} do not match training groups {:?}",
                    membership.groups, groups
                )));
            }
            let mut probs = BTreeMap::new();
            for g in &groups {
                probs.insert(g.clone(), membership.predict_group_column(train, g)?);
            }
            let mut model = fit_with_group_probabilities(train, &probs, cfg)?;
            model.membership = Some(membership);
            Ok(model)
        }
    }
}

/// Fit the group-weighted variant from precomputed per-group membership
/// probabilities (one probability per training row per group).
pub fn fit_with_group_probabilities(
    train: &Dataset,
    group_probs: &BTreeMap<String, Vec<f64>>,
    cfg: &PipelineConfig,
) -> Result<GFigsModel> {
    cfg.max_splits.validate()?;
    let groups = require_groups(train)?;
    let class_w = effective_class_weights(train, cfg)?;
    let mut models = BTreeMap::new();
    for g in &groups {
        check_group_has_positive(train, g)?;
        let probs = group_probs
            .get(g)
            .ok_or_else(|| Error::Validation(format!("no probabilities for group {g:?}")))?;
        if probs.len() != train.n_rows() {
            return Err(Error::Validation("probability column length mismatch".into()));
        }
        let weights: Vec<f64> = (0..train.n_rows())
            .map(|i| train.weights[i] * class_w.weight_for(train.y[i]) * probs[i])
            .collect();
        let model = fit_learner(train, &weights, cfg.learner, cfg.max_splits.for_group(g)?)?;
        models.insert(g.clone(), model);
    }
    Ok(GFigsModel {
        config: cfg.clone(),
        feature_names: train.feature_names.clone(),
        membership_feature_names: train.membership_feature_names.clone(),
        groups: models,
        membership: None,
    })
}

fn fit_pooled(train: &Dataset, cfg: &PipelineConfig) -> Result<GFigsModel> {
    let class_w = effective_class_weights(train, cfg)?;
    let weights: Vec<f64> = (0..train.n_rows())
        .map(|i| train.weights[i] * class_w.weight_for(train.y[i]))
        .collect();
    let model = fit_learner(train, &weights, cfg.learner, cfg.max_splits.for_group(POOLED_GROUP)?)?;
    let mut groups = BTreeMap::new();
    groups.insert(POOLED_GROUP.to_string(), model);
    Ok(GFigsModel {
        config: cfg.clone(),
        feature_names: train.feature_names.clone(),
        membership_feature_names: train.membership_feature_names.clone(),
        groups,
        membership: None,
    })
}

fn fit_separate(train: &Dataset, cfg: &PipelineConfig) -> Result<GFigsModel> {
    let groups = require_groups(train)?;
    let class_w = effective_class_weights(train, cfg)?;
    let mut models = BTreeMap::new();
    for g in &groups {
        check_group_has_positive(train, g)?;
        let rows = train.group_rows(g);
        let sub = train.subset(&rows);
        let weights: Vec<f64> = (0..sub.n_rows())
            .map(|i| sub.weights[i] * class_w.weight_for(sub.y[i]))
            .collect();
        let model = fit_learner(&sub, &weights, cfg.learner, cfg.max_splits.for_group(g)?)?;
        models.insert(g.clone(), model);
    }
    Ok(GFigsModel {
        config: cfg.clone(),
        feature_names: train.feature_names.clone(),
        membership_feature_names: train.membership_feature_names.clone(),
        groups: models,
        membership: None,
    })
}

fn require_groups(train: &Dataset) -> Result<Vec<String>> {
    let groups = train.group_labels();
    if groups.is_empty() {
        return Err(Error::Validation(
            "this variant needs a group column in the training data".into(),
        ));
    }
    Ok(groups)
}

/// Class weights are computed once on the full training outcome vector and
/// reused identically by every variant.
fn effective_class_weights(train: &Dataset, cfg: &PipelineConfig) -> Result<ClassWeights> {
    if cfg.class_weighting {
        class_weights(&train.y)
    } else {
        Ok(ClassWeights::uniform())
    }
}

fn check_group_has_positive(train: &Dataset, group: &str) -> Result<()> {
    let has_positive = train
        .group
        .as_ref()
        .map(|gcol| {
            gcol.iter()
                .zip(&train.y)
                .any(|(g, &y)| g == group && y == 1)
        })
        .unwrap_or(false);
    if !has_positive {
        return Err(Error::DegenerateClass(format!(
            "group {group:?} has zero positive outcomes"
        )));
    }
    Ok(())
}

fn fit_learner(
    data: &Dataset,
    weights: &[f64],
    learner: Learner,
    max_splits: usize,
) -> Result<TreeSumModel> {
    let x = data.features();
    let targets: Vec<f64> = data.y.iter().map(|&v| f64::from(v)).collect();
    match learner {
        Learner::Figs => fit_figs(x, &targets, weights, max_splits),
        Learner::Cart => {
            let tree = fit_cart(x, &targets, weights, max_splits)?;
            if tree.split_count == 0 {
                // a splitless tree is just its root mean
                let value = match &tree.nodes[0] {
                    crate::tree::Node::Leaf { value, .. } => *value,
                    _ => unreachable!(),
                };
                Ok(TreeSumModel::constant(value, x.n_cols()))
            } else {
                let total_splits = tree.split_count;
                Ok(TreeSumModel {
                    intercept: 0.0,
                    trees: vec![tree],
                    total_splits,
                    n_features: x.n_cols(),
                })
            }
        }
    }
}
