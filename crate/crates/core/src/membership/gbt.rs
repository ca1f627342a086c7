//! Stagewise gradient boosting with logistic loss: depth-limited regression
//! trees fit to the negative gradient, leaf values set by one Newton step.

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::membership::logistic::sigmoid;
use crate::tree::{fit_cart_limited, Node, Tree};

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Boosted ensemble for binary classification.
/// `score(x) = initial_log_odds + learning_rate * sum(tree contributions)`;
/// the probability is the sigmoid of the score.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoostedModel {
    pub trees: Vec<Tree>,
    pub n_trees_config: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub initial_log_odds: f64,
}

impl GradientBoostedModel {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let mut s = self.initial_log_odds;
        for tree in &self.trees {
            s += self.learning_rate * tree.predict(x)?;
        }
        Ok(s)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(x)?))
    }
}

/// Fit gradient-boosted trees; see [`fit_gbt_with_trace`] for the loss trace.
pub fn fit_gbt(
    x: Features<'_>,
    labels: &[u8],
    n_trees: usize,
    depth: usize,
    learning_rate: f64,
) -> Result<GradientBoostedModel> {
    fit_gbt_engine(x, labels, n_trees, depth, learning_rate, None)
}

/// As [`fit_gbt`], recording the mean training logistic loss after the
/// initial score and after each stage.
pub fn fit_gbt_with_trace(
    x: Features<'_>,
    labels: &[u8],
    n_trees: usize,
    depth: usize,
    learning_rate: f64,
) -> Result<(GradientBoostedModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let model = fit_gbt_engine(x, labels, n_trees, depth, learning_rate, Some(&mut trace))?;
    Ok((model, trace))
}

fn fit_gbt_engine(
    x: Features<'_>,
    labels: &[u8],
    n_trees: usize,
    depth: usize,
    learning_rate: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<GradientBoostedModel> {
    if n_trees < 1 {
        return Err(Error::Config("number of boosting stages must be at least 1".into()));
    }
    if depth < 1 {
        return Err(Error::Config("tree depth must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&learning_rate) {
        return Err(Error::Config("learning rate must lie in [0, 1]".into()));
    }
    let n = x.n_rows();
    if labels.len() != n {
        return Err(Error::Validation("labels length mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::DegenerateClass("boosting needs both classes".into()));
    }

    let base_rate = n_pos as f64 / n as f64;
    let initial_log_odds = (base_rate / (1.0 - base_rate)).ln();
    let mut scores = vec![initial_log_odds; n];
    let unit = vec![1.0; n];
    let max_splits = (1usize << depth) - 1;

    let log_loss = |scores: &[f64]| -> f64 {
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| {
                let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
                softplus - f64::from(y) * s
            })
            .sum::<f64>()
            / n as f64
    };
    if let Some(t) = trace.as_deref_mut() {
        t.push(log_loss(&scores));
    }

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        // Negative gradient of the logistic loss.
        let residuals: Vec<f64> = scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| f64::from(y) - sigmoid(s))
            .collect();

        let mut tree = fit_cart_limited(x, &residuals, &unit, max_splits, depth)?;
        if tree.split_count == 0 {
            break;
        }

        // One Newton step per leaf: sum(residual) / sum(p(1-p)).
        let n_nodes = tree.nodes.len();
        let mut num = vec![0.0; n_nodes];
        let mut den = vec![0.0; n_nodes];
        for i in 0..n {
            let leaf = tree.route(x.row(i))?;
            let p = sigmoid(scores[i]);
            num[leaf] += residuals[i];
            den[leaf] += p * (1.0 - p);
        }
        for (idx, node) in tree.nodes.iter_mut().enumerate() {
            if let Node::Leaf { value, .. } = node {
                *value = num[idx] / den[idx].max(1e-12);
            }
        }

        for i in 0..n {
            scores[i] += learning_rate * tree.predict(x.row(i))?;
        }
        trees.push(tree);
        if let Some(t) = trace.as_deref_mut() {
            t.push(log_loss(&scores));
        }
    }

    Ok(GradientBoostedModel {
        trees,
        n_trees_config: n_trees,
        learning_rate,
        max_depth: depth,
        initial_log_odds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(x: &[f64], n_cols: usize) -> Features<'_> {
        Features::new(x, n_cols)
    }

    #[test]
    fn one_stage_on_perfect_feature_separates_groups() {
        let x: Vec<f64> = (0..20).map(|i| f64::from(i >= 10)).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let m = fit_gbt(feats(&x, 1), &y, 1, 1, 1.0).unwrap();
        let p0 = m.predict_proba(&[0.0]).unwrap();
        let p1 = m.predict_proba(&[1.0]).unwrap();
        assert!(p1 - p0 > 0.5, "gap {} too small", p1 - p0);
    }

    #[test]
    fn training_loss_is_non_increasing() {
        let x: Vec<f64> = (0..60).flat_map(|i| vec![((i * 13) % 31) as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from(((i * 13) % 31) > 15)).collect();
        let (_, trace) = fit_gbt_with_trace(feats(&x, 2), &y, 25, 3, 0.1).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {pair:?}");
        }
    }

    #[test]
    fn constant_features_predict_base_rate() {
        let x = vec![2.5; 12];
        let y: Vec<u8> = (0..12).map(|i| u8::from(i < 3)).collect();
        let m = fit_gbt(feats(&x, 1), &y, 10, 3, 0.1).unwrap();
        assert!(m.trees.is_empty());
        assert!((m.predict_proba(&[2.5]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_predicts_base_rate() {
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..16).map(|i| u8::from(i >= 4)).collect();
        let m = fit_gbt(feats(&x, 1), &y, 5, 2, 0.0).unwrap();
        for i in 0..16 {
            assert!((m.predict_proba(&[i as f64]).unwrap() - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_stages_rejected() {
        let x = [0.0, 1.0];
        assert!(matches!(
            fit_gbt(feats(&x, 1), &[0, 1], 0, 3, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn depth_cap_bounds_every_tree() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
        let y: Vec<u8> = (0..64).map(|i| u8::from((i * 37) % 64 >= 32)).collect();
        let m = fit_gbt(feats(&x, 1), &y, 8, 2, 0.3).unwrap();
        for tree in &m.trees {
            assert!(tree.split_count <= 3);
        }
    }
}
