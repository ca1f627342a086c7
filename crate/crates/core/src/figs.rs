//! Greedy tree sums: an ensemble of trees grown one split at a time, each
//! tree fitting the residuals of the others, under a shared split budget.
//!
//! Every iteration considers splitting any leaf of any existing tree
//! against that tree's residual target, plus one candidate stump on the
//! whole ensemble's residual (a potential new tree), and applies the single
//! candidate with the largest weighted impurity decrease. After each
//! applied split one backfitting pass recomputes every leaf value as the
//! weighted mean of its tree's current residuals.

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::tree::{
    apply_split, best_split, partition_rows, weighted_mean, Node, SplitCandidate, Tree,
};

/// An additive ensemble of decision trees. The predicted probability is the
/// intercept plus the routed leaf value of every tree, clamped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSumModel {
    pub intercept: f64,
    pub trees: Vec<Tree>,
    pub total_splits: usize,
    pub n_features: usize,
}

impl TreeSumModel {
    /// Constant model used when no split has positive impurity decrease.
    pub fn constant(value: f64, n_features: usize) -> Self {
        TreeSumModel { intercept: value, trees: Vec::new(), total_splits: 0, n_features }
    }

    /// Unclamped sum of the intercept and all tree contributions.
    pub fn predict_sum(&self, x: &[f64]) -> Result<f64> {
        let mut sum = self.intercept;
        for tree in &self.trees {
            sum += tree.predict(x)?;
        }
        Ok(sum)
    }

    /// Predicted probability: the contribution sum clamped to [0, 1].
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_sum(x)?.clamp(0.0, 1.0))
    }
}

struct FittingTree {
    tree: Tree,
    /// (node index, member rows) per leaf, in leaf creation order.
    leaves: Vec<(usize, Vec<usize>)>,
    /// Current prediction of this tree, indexed by row.
    pred: Vec<f64>,
}

#[derive(Clone, Copy)]
struct FigsCandidate {
    /// Index into the tree list; `trees.len()` denotes the new-stump candidate.
    tree: usize,
    /// Position in the tree's leaf list.
    leaf: usize,
    cand: SplitCandidate,
}

/// Fit a tree-sum model by greedy residual fitting.
///
/// `targets` may be any real values; for classification they are the 0/1
/// outcomes. Returns a constant model at the weighted target mean when no
/// split is possible at all.
pub fn fit_figs(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
) -> Result<TreeSumModel> {
    fit_figs_engine(x, targets, weights, max_splits, None)
}

/// As [`fit_figs`], additionally recording the weighted squared-error
/// training loss after every applied split and after every backfitting
/// pass (the first entry is the loss of the empty ensemble).
pub fn fit_figs_with_trace(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
) -> Result<(TreeSumModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let model = fit_figs_engine(x, targets, weights, max_splits, Some(&mut trace))?;
    Ok((model, trace))
}

fn fit_figs_engine(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<TreeSumModel> {
    if max_splits < 1 {
        return Err(Error::Validation("max_splits must be at least 1".into()));
    }
    let n = x.n_rows();
    if targets.len() != n || weights.len() != n {
        return Err(Error::Validation("targets/weights length mismatch".into()));
    }
    let active: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateWeight("all instance weights are zero".into()));
    }

    let mut trees: Vec<FittingTree> = Vec::new();
    let mut pred_total = vec![0.0; n];
    let mut total_splits = 0usize;
    let mut residual = vec![0.0; n];

    let loss = |pred_total: &[f64]| -> f64 {
        active
            .iter()
            .map(|&i| weights[i] * (targets[i] - pred_total[i]) * (targets[i] - pred_total[i]))
            .sum()
    };
    if let Some(t) = trace.as_deref_mut() {
        t.push(loss(&pred_total));
    }

    while total_splits < max_splits {
        // Candidate search: existing-tree leaves first, new stump last, so
        // that the first-seen rule breaks exact ties in favor of earlier
        // trees and earlier-created leaves.
        let mut best: Option<FigsCandidate> = None;
        for (k, ft) in trees.iter().enumerate() {
            for &i in &active {
                residual[i] = targets[i] - (pred_total[i] - ft.pred[i]);
            }
            for (leaf_pos, (_, rows)) in ft.leaves.iter().enumerate() {
                if let Some(cand) = best_split(x, &residual, weights, rows)? {
                    if best.map_or(true, |b| cand.beats(&b.cand)) {
                        best = Some(FigsCandidate { tree: k, leaf: leaf_pos, cand });
                    }
                }
            }
        }
        for &i in &active {
            residual[i] = targets[i] - pred_total[i];
        }
        if let Some(cand) = best_split(x, &residual, weights, &active)? {
            if best.map_or(true, |b| cand.beats(&b.cand)) {
                best = Some(FigsCandidate { tree: trees.len(), leaf: 0, cand });
            }
        }
        let Some(chosen) = best else { break };

        // Apply the winning split against its tree's residual target.
        if chosen.tree == trees.len() {
            for &i in &active {
                residual[i] = targets[i] - pred_total[i];
            }
            let (left_rows, right_rows) =
                partition_rows(x, &active, chosen.cand.feature, chosen.cand.threshold);
            let mut tree = Tree::leaf(0.0, 0.0, 0);
            let (ln, rn) =
                apply_split(&mut tree, 0, chosen.cand, &residual, weights, &left_rows, &right_rows);
            let mut pred = vec![0.0; n];
            for (node, rows) in [(ln, &left_rows), (rn, &right_rows)] {
                let value = leaf_value(&tree, node);
                for &i in rows {
                    pred[i] = value;
                    pred_total[i] += value;
                }
            }
            trees.push(FittingTree {
                tree,
                leaves: vec![(ln, left_rows), (rn, right_rows)],
                pred,
            });
        } else {
            let ft = &mut trees[chosen.tree];
            for &i in &active {
                residual[i] = targets[i] - (pred_total[i] - ft.pred[i]);
            }
            let (node, rows) = ft.leaves.remove(chosen.leaf);
            let (left_rows, right_rows) =
                partition_rows(x, &rows, chosen.cand.feature, chosen.cand.threshold);
            let (ln, rn) = apply_split(
                &mut ft.tree,
                node,
                chosen.cand,
                &residual,
                weights,
                &left_rows,
                &right_rows,
            );
            for (child, rows) in [(ln, &left_rows), (rn, &right_rows)] {
                let value = leaf_value(&ft.tree, child);
                for &i in rows.iter() {
                    let delta = value - ft.pred[i];
                    ft.pred[i] = value;
                    pred_total[i] += delta;
                }
            }
            ft.leaves.push((ln, left_rows));
            ft.leaves.push((rn, right_rows));
        }
        total_splits += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(loss(&pred_total));
        }

        // One backfitting pass: leaf values become the weighted mean of the
        // tree's current residual target, tree by tree.
        for k in 0..trees.len() {
            for &i in &active {
                residual[i] = targets[i] - (pred_total[i] - trees[k].pred[i]);
            }
            let ft = &mut trees[k];
            for (node, rows) in &ft.leaves {
                let new_value = weighted_mean(&residual, weights, rows);
                let old_value = leaf_value(&ft.tree, *node);
                if let Node::Leaf { value, .. } = &mut ft.tree.nodes[*node] {
                    *value = new_value;
                }
                let delta = new_value - old_value;
                if delta != 0.0 {
                    for &i in rows {
                        ft.pred[i] += delta;
                        pred_total[i] += delta;
                    }
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(loss(&pred_total));
        }
    }

    if trees.is_empty() {
        return Ok(TreeSumModel::constant(
            weighted_mean(targets, weights, &active),
            x.n_cols(),
        ));
    }
    Ok(TreeSumModel {
        intercept: 0.0,
        trees: trees.into_iter().map(|ft| ft.tree).collect(),
        total_splits,
        n_features: x.n_cols(),
    })
}

fn leaf_value(tree: &Tree, node: usize) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => *value,
        Node::Internal { .. } => unreachable!("leaf index points at an internal node"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fit_cart;

    fn feats(x: &[f64], n_cols: usize) -> Features<'_> {
        Features::new(x, n_cols)
    }

    #[test]
    fn budget_one_equals_cart_stump_exactly() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let figs = fit_figs(feats(&x, 1), &t, &w, 1).unwrap();
        let cart = fit_cart(feats(&x, 1), &t, &w, 1).unwrap();
        assert_eq!(figs.trees.len(), 1);
        assert_eq!(figs.intercept, 0.0);
        assert_eq!(figs.trees[0], cart);
    }

    #[test]
    fn additive_two_feature_data_yields_two_stumps_with_zero_error() {
        // all four (x1, x2) combinations; target 0.5*x1 + 0.5*x2
        let x = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let t = [0.0, 0.5, 0.5, 1.0];
        let w = [1.0; 4];
        let model = fit_figs(feats(&x, 2), &t, &w, 2).unwrap();
        assert_eq!(model.trees.len(), 2, "expected one stump per feature");
        assert_eq!(model.total_splits, 2);
        let mut features: Vec<usize> = model
            .trees
            .iter()
            .flat_map(|tr| tr.max_feature_index())
            .collect();
        features.sort_unstable();
        assert_eq!(features, vec![0, 1]);
        for i in 0..4 {
            let row = [x[i * 2], x[i * 2 + 1]];
            assert!((model.predict_sum(&row).unwrap() - t[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_targets_produce_constant_model() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.3; 4];
        let model = fit_figs(feats(&x, 1), &t, &[1.0; 4], 5).unwrap();
        assert!(model.trees.is_empty());
        assert_eq!(model.total_splits, 0);
        assert!((model.predict_proba(&[9.0]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn prediction_is_clamped_sum() {
        let model = TreeSumModel {
            intercept: 0.0,
            trees: vec![Tree::leaf(0.3, 1.0, 1), Tree::leaf(0.25, 1.0, 1)],
            total_splits: 0,
            n_features: 1,
        };
        assert!((model.predict_proba(&[0.0]).unwrap() - 0.55).abs() < 1e-15);

        let hot = TreeSumModel {
            intercept: 0.0,
            trees: vec![Tree::leaf(0.8, 1.0, 1), Tree::leaf(0.5, 1.0, 1)],
            total_splits: 0,
            n_features: 1,
        };
        assert_eq!(hot.predict_proba(&[0.0]).unwrap(), 1.0);

        let signed = TreeSumModel {
            intercept: 0.0,
            trees: vec![Tree::leaf(0.5, 1.0, 1), Tree::leaf(-0.2, 1.0, 1)],
            total_splits: 0,
            n_features: 1,
        };
        assert!((signed.predict_proba(&[0.0]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn budget_is_respected() {
        let x: Vec<f64> = (0..32).map(|i| (i as f64) * 0.7 % 5.0).collect();
        let t: Vec<f64> = (0..16).map(|i| ((i * 7) % 3) as f64 / 2.0).collect();
        let w = vec![1.0; 16];
        for budget in 1..6 {
            let model = fit_figs(feats(&x, 2), &t, &w, budget).unwrap();
            assert!(model.total_splits <= budget);
            let sum: usize = model.trees.iter().map(|tr| tr.split_count).sum();
            assert_eq!(sum, model.total_splits);
            assert!(model.trees.iter().all(|tr| tr.split_count >= 1));
        }
    }

    #[test]
    fn training_loss_is_monotone() {
        let x: Vec<f64> = (0..48).map(|i| ((i * 13) % 17) as f64).collect();
        let t: Vec<f64> = (0..24).map(|i| ((i * 5) % 2) as f64).collect();
        let w: Vec<f64> = (0..24).map(|i| 0.25 + ((i * 3) % 4) as f64).collect();
        let (_, trace) = fit_figs_with_trace(feats(&x, 2), &t, &w, 8).unwrap();
        assert!(trace.len() > 1);
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "loss increased: {pair:?}");
        }
    }

    #[test]
    fn indicator_weights_equal_subset_fit() {
        let x: Vec<f64> = vec![
            0.2, 1.0, 0.8, 0.3, 0.5, 0.9, 0.1, 0.4, 0.7, 0.6, 0.95, 0.15, 0.35, 0.55, 0.25, 0.85,
        ];
        let t = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let subset = [0usize, 2, 3, 5, 6];
        let mut w = vec![0.0; 8];
        for &i in &subset {
            w[i] = 1.0;
        }
        let on_full = fit_figs(feats(&x, 2), &t, &w, 3).unwrap();

        let xs: Vec<f64> = subset.iter().flat_map(|&i| x[i * 2..i * 2 + 2].to_vec()).collect();
        let ts: Vec<f64> = subset.iter().map(|&i| t[i]).collect();
        let on_subset = fit_figs(feats(&xs, 2), &ts, &vec![1.0; 5], 3).unwrap();
        assert_eq!(on_full, on_subset);
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 31) % 23) as f64 / 7.0).collect();
        let t: Vec<f64> = (0..20).map(|i| ((i * 11) % 2) as f64).collect();
        let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64 * 0.5).collect();
        let a = fit_figs(feats(&x, 2), &t, &w, 6).unwrap();
        let b = fit_figs(feats(&x, 2), &t, &w, 6).unwrap();
        assert_eq!(a, b);
    }
}
