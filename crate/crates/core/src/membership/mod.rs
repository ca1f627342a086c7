//! Group-membership models: classifiers estimating P(G = g | X) from the
//! membership feature view, used downstream as instance weights.
//!
//! Two groups share a single binary model (the probabilities complement
//! each other); more than two groups get independent one-vs-rest models, so
//! their probabilities carry no sum constraint. Random forests and plain
//! CART are deliberately not offered: forest probabilities separate groups
//! too sharply and CART's within-node class proportions are too coarse for
//! useful weights.

pub mod gbt;
pub mod logistic;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};
pub use gbt::{fit_gbt, fit_gbt_with_trace, GradientBoostedModel};
pub use logistic::{fit_logistic, fit_logistic_warm, LogisticModel};

/// Membership probabilities are kept inside the open interval.
const PROBABILITY_FLOOR: f64 = 1e-12;

/// Which classifier family to fit, with its regularization knob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum MembershipSpec {
    /// L2-regularized logistic regression with inverse strength `c`.
    Logreg { c: f64 },
    /// Gradient-boosted trees with `n` boosting stages
    /// (depth 3, learning rate 0.1).
    Gbt { n: usize },
}

impl fmt::Display for MembershipSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MembershipSpec::Logreg { c } => write!(f, "LR (C = {c})"),
            MembershipSpec::Gbt { n } => write!(f, "GB (N = {n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupClassifier {
    Logistic(LogisticModel),
    Boosted(GradientBoostedModel),
}

impl GroupClassifier {
    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            GroupClassifier::Logistic(m) => m.predict_proba(x),
            GroupClassifier::Boosted(m) => m.predict_proba(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MembershipKind {
    /// Exactly two groups: one binary model predicting the second (sorted)
    /// label; the first label takes the complement.
    Binary { model: GroupClassifier },
    /// One independent binary model per group, aligned with `groups`.
    OneVsRest { models: Vec<GroupClassifier> },
}

/// Fitted membership model over sorted group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipModel {
    pub groups: Vec<String>,
    pub excluded_features: Vec<String>,
    pub spec: MembershipSpec,
    kind: MembershipKind,
}

impl MembershipModel {
    /// Fit on a dataset's membership feature view and its group labels.
    pub fn fit(data: &Dataset, spec: &MembershipSpec) -> Result<MembershipModel> {
        let groups = data.group_labels();
        if groups.len() < 2 {
            return Err(Error::Validation(format!(
                "membership model needs at least 2 groups, found {}",
                groups.len()
            )));
        }
        let x = data.membership_features();
        let group_col = data.group.as_ref().expect("group labels exist");

        let fit_binary = |positive: &str| -> Result<GroupClassifier> {
            let labels: Vec<u8> = group_col.iter().map(|g| u8::from(g == positive)).collect();
            fit_classifier(x, &labels, spec)
        };

        let kind = if groups.len() == 2 {
            MembershipKind::Binary { model: fit_binary(&groups[1])? }
        } else {
            let models = groups
                .iter()
                .map(|g| fit_binary(g))
                .collect::<Result<Vec<_>>>()?;
            MembershipKind::OneVsRest { models }
        };

        let excluded_features = data
            .feature_names
            .iter()
            .filter(|n| !data.membership_feature_names.contains(n))
            .cloned()
            .collect();

        Ok(MembershipModel { groups, excluded_features, spec: *spec, kind })
    }

    /// Per-group membership probabilities for one membership-view row.
    pub fn predict(&self, x_membership: &[f64]) -> Result<BTreeMap<String, f64>> {
        let clamp = |p: f64| p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        let mut out = BTreeMap::new();
        match &self.kind {
            MembershipKind::Binary { model } => {
                let p = clamp(model.predict_proba(x_membership)?);
                out.insert(self.groups[0].clone(), 1.0 - p);
                out.insert(self.groups[1].clone(), p);
            }
            MembershipKind::OneVsRest { models } => {
                for (g, m) in self.groups.iter().zip(models) {
                    out.insert(g.clone(), clamp(m.predict_proba(x_membership)?));
                }
            }
        }
        Ok(out)
    }

    /// Probability of one group for every row of a dataset.
    pub fn predict_group_column(&self, data: &Dataset, group: &str) -> Result<Vec<f64>> {
        let idx = self
            .groups
            .iter()
            .position(|g| g == group)
            .ok_or_else(|| Error::Routing(format!("unknown group label {group:?}")))?;
        let x = data.membership_features();
        let clamp = |p: f64| p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        (0..data.n_rows())
            .map(|i| {
                let row = x.row(i);
                match &self.kind {
                    MembershipKind::Binary { model } => {
                        let p = clamp(model.predict_proba(row)?);
                        Ok(if idx == 1 { p } else { 1.0 - p })
                    }
                    MembershipKind::OneVsRest { models } => {
                        Ok(clamp(models[idx].predict_proba(row)?))
                    }
                }
            })
            .collect()
    }

    pub(crate) fn classifiers(&self) -> Vec<(&str, &GroupClassifier)> {
        match &self.kind {
            MembershipKind::Binary { model } => vec![(self.groups[1].as_str(), model)],
            MembershipKind::OneVsRest { models } => self
                .groups
                .iter()
                .map(|g| g.as_str())
                .zip(models)
                .collect(),
        }
    }

    pub(crate) fn from_classifiers(
        groups: Vec<String>,
        excluded_features: Vec<String>,
        spec: MembershipSpec,
        mut classifiers: Vec<GroupClassifier>,
    ) -> Result<MembershipModel> {
        let kind = if groups.len() == 2 && classifiers.len() == 1 {
            MembershipKind::Binary { model: classifiers.pop().expect("one classifier") }
        } else if groups.len() == classifiers.len() && groups.len() > 2 {
            MembershipKind::OneVsRest { models: classifiers }
        } else {
            return Err(Error::Format(format!(
                "{} classifiers for {} groups",
                classifiers.len(),
                groups.len()
            )));
        };
        Ok(MembershipModel { groups, excluded_features, spec, kind })
    }
}

fn fit_classifier(x: Features<'_>, labels: &[u8], spec: &MembershipSpec) -> Result<GroupClassifier> {
    match spec {
        MembershipSpec::Logreg { c } => Ok(GroupClassifier::Logistic(fit_logistic(x, labels, *c)?)),
        MembershipSpec::Gbt { n } => Ok(GroupClassifier::Boosted(fit_gbt(
            x,
            labels,
            *n,
            gbt::DEFAULT_DEPTH,
            gbt::DEFAULT_LEARNING_RATE,
        )?)),
    }
}
