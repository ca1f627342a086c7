//! Instance-weighted binary regression trees with a global split budget.
//!
//! Trees are grown best-first: every leaf's best candidate split is scored
//! by weighted impurity decrease, and the single best candidate anywhere in
//! the tree is applied until the budget is exhausted or no candidate
//! improves. Rows with zero weight take no part in fitting, so zeroing a
//! row's weight is the same as deleting the row.

use crate::dataset::Features;
use crate::error::{Error, Result};

/// A split is invalid if either child would carry less total weight.
pub const MIN_CHILD_WEIGHT: f64 = 1e-12;

/// Node in a tree arena. The root is node 0; children are appended as
/// splits are applied, so arena order is creation order.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Additive risk contribution of this leaf.
        value: f64,
        /// Total instance weight that reached the leaf during fitting.
        weight_sum: f64,
        /// Number of (positive-weight) fitting rows in the leaf.
        n: usize,
    },
}

/// Binary decision tree with threshold splits; `feature <= threshold`
/// routes left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub split_count: usize,
}

impl Tree {
    /// Single-leaf tree (zero splits).
    pub fn leaf(value: f64, weight_sum: f64, n: usize) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, weight_sum, n }],
            split_count: 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.split_count + 1
    }

    /// Route a feature row to its leaf and return the leaf's value.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match &self.nodes[self.route(x)?] {
            Node::Leaf { value, .. } => Ok(*value),
            Node::Internal { .. } => unreachable!("route returns a leaf"),
        }
    }

    /// Arena index of the leaf a row routes to.
    pub fn route(&self, x: &[f64]) -> Result<usize> {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { .. } => return Ok(idx),
                Node::Internal { feature, threshold, left, right } => {
                    let v = *x.get(*feature).ok_or_else(|| {
                        Error::Schema(format!(
                            "row has {} features but the tree references feature {}",
                            x.len(),
                            feature
                        ))
                    })?;
                    idx = if v <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Largest feature index referenced by any split, if the tree splits.
    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Weighted variance of `targets`: sum of `w_i (t_i - mean_w)^2 / sum(w)`.
pub fn weighted_impurity(targets: &[f64], weights: &[f64]) -> Result<f64> {
    if targets.len() != weights.len() {
        return Err(Error::Validation("targets and weights differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeight("total weight must be positive".into()));
    }
    let mean = targets
        .iter()
        .zip(weights)
        .map(|(t, w)| t * w)
        .sum::<f64>()
        / total;
    let ss = targets
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (t - mean) * (t - mean))
        .sum::<f64>();
    Ok(ss / total)
}

/// Weighted mean of `targets[rows]`.
pub(crate) fn weighted_mean(targets: &[f64], weights: &[f64], rows: &[usize]) -> f64 {
    let mut sw = 0.0;
    let mut swt = 0.0;
    for &i in rows {
        sw += weights[i];
        swt += weights[i] * targets[i];
    }
    swt / sw
}

/// Candidate split of one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted impurity decrease in the unnormalized form
    /// `W*imp(parent) - W_L*imp(left) - W_R*imp(right)`.
    pub decrease: f64,
}

impl SplitCandidate {
    /// Deterministic preference order: larger decrease, then lower feature
    /// index, then lower threshold.
    pub fn beats(&self, other: &SplitCandidate) -> bool {
        if self.decrease != other.decrease {
            return self.decrease > other.decrease;
        }
        if self.feature != other.feature {
            return self.feature < other.feature;
        }
        self.threshold < other.threshold
    }
}

/// Best split of the given rows, or `None` when no candidate has positive
/// impurity decrease. Candidate thresholds are midpoints between
/// consecutive distinct sorted values among positive-weight rows.
pub fn best_split(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    rows: &[usize],
) -> Result<Option<SplitCandidate>> {
    let active: Vec<usize> = rows.iter().copied().filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateWeight(
            "no positive-weight rows in split search".into(),
        ));
    }

    let mut best: Option<SplitCandidate> = None;
    let mut column: Vec<(f64, f64, f64)> = Vec::with_capacity(active.len());

    for feature in 0..x.n_cols() {
        column.clear();
        column.extend(active.iter().map(|&i| (x.get(i, feature), targets[i], weights[i])));
        column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

        let total_w: f64 = column.iter().map(|c| c.2).sum();
        let total_wt: f64 = column.iter().map(|c| c.2 * c.1).sum();
        let total_wtt: f64 = column.iter().map(|c| c.2 * c.1 * c.1).sum();
        let parent_sse = (total_wtt - total_wt * total_wt / total_w).max(0.0);

        let mut left_w = 0.0;
        let mut left_wt = 0.0;
        let mut left_wtt = 0.0;
        for i in 0..column.len() - 1 {
            let (v, t, w) = column[i];
            left_w += w;
            left_wt += w * t;
            left_wtt += w * t * t;
            let v_next = column[i + 1].0;
            if v == v_next {
                continue;
            }
            let right_w = total_w - left_w;
            if left_w < MIN_CHILD_WEIGHT || right_w < MIN_CHILD_WEIGHT {
                continue;
            }
            let left_sse = (left_wtt - left_wt * left_wt / left_w).max(0.0);
            let right_wt = total_wt - left_wt;
            let right_wtt = total_wtt - left_wtt;
            let right_sse = (right_wtt - right_wt * right_wt / right_w).max(0.0);
            let cand = SplitCandidate {
                feature,
                threshold: (v + v_next) / 2.0,
                decrease: parent_sse - left_sse - right_sse,
            };
            if best.map_or(true, |b| cand.beats(&b)) {
                best = Some(cand);
            }
        }
    }

    Ok(best.filter(|c| c.decrease > 0.0))
}

/// Partition `rows` by a split; zero-weight rows route like any other.
pub(crate) fn partition_rows(
    x: Features<'_>,
    rows: &[usize],
    feature: usize,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in rows {
        if x.get(i, feature) <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

struct LeafState {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    candidate: Option<SplitCandidate>,
}

/// Greedy best-first CART under instance weights and a total split budget.
///
/// Leaf values are weighted means of the targets. Returns a single-leaf
/// tree when no split has positive impurity decrease.
pub fn fit_cart(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
) -> Result<Tree> {
    fit_cart_limited(x, targets, weights, max_splits, usize::MAX)
}

/// CART with both a split budget and a depth cap (the root is depth 0).
pub fn fit_cart_limited(
    x: Features<'_>,
    targets: &[f64],
    weights: &[f64],
    max_splits: usize,
    max_depth: usize,
) -> Result<Tree> {
    if max_splits < 1 {
        return Err(Error::Validation("max_splits must be at least 1".into()));
    }
    let n = x.n_rows();
    if targets.len() != n || weights.len() != n {
        return Err(Error::Validation("targets/weights length mismatch".into()));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::DegenerateWeight("all instance weights are zero".into()));
    }

    let root_value = weighted_mean(targets, weights, &rows);
    let root_weight: f64 = rows.iter().map(|&i| weights[i]).sum();
    let mut tree = Tree::leaf(root_value, root_weight, rows.len());

    let root_candidate = best_split(x, targets, weights, &rows)?;
    let mut leaves = vec![LeafState { node: 0, rows, depth: 0, candidate: root_candidate }];

    while tree.split_count < max_splits {
        let mut chosen: Option<(usize, SplitCandidate)> = None;
        for (li, leaf) in leaves.iter().enumerate() {
            if leaf.depth >= max_depth {
                continue;
            }
            if let Some(cand) = leaf.candidate {
                if chosen.map_or(true, |(_, best)| cand.beats(&best)) {
                    chosen = Some((li, cand));
                }
            }
        }
        let Some((leaf_idx, cand)) = chosen else { break };

        let leaf = leaves.remove(leaf_idx);
        let (left_rows, right_rows) = partition_rows(x, &leaf.rows, cand.feature, cand.threshold);
        let (left_node, right_node) =
            apply_split(&mut tree, leaf.node, cand, targets, weights, &left_rows, &right_rows);

        for (node, rows) in [(left_node, left_rows), (right_node, right_rows)] {
            let candidate = if leaf.depth + 1 < max_depth && tree.split_count < max_splits {
                best_split(x, targets, weights, &rows)?
            } else {
                None
            };
            leaves.push(LeafState { node, rows, depth: leaf.depth + 1, candidate });
        }
    }
    Ok(tree)
}

/// Turn a leaf node into an internal node with two fresh leaves whose
/// values are the weighted target means of their rows. Returns the new
/// (left, right) node indices.
pub(crate) fn apply_split(
    tree: &mut Tree,
    node: usize,
    cand: SplitCandidate,
    targets: &[f64],
    weights: &[f64],
    left_rows: &[usize],
    right_rows: &[usize],
) -> (usize, usize) {
    debug_assert!(matches!(tree.nodes[node], Node::Leaf { .. }));
    let left = tree.nodes.len();
    let right = left + 1;
    for rows in [left_rows, right_rows] {
        tree.nodes.push(Node::Leaf {
            value: weighted_mean(targets, weights, rows),
            weight_sum: rows.iter().map(|&i| weights[i]).sum(),
            n: rows.len(),
        });
    }
    tree.nodes[node] = Node::Internal {
        feature: cand.feature,
        threshold: cand.threshold,
        left,
        right,
    };
    tree.split_count += 1;
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(x: &[f64], n_cols: usize) -> Features<'_> {
        Features::new(x, n_cols)
    }

    #[test]
    fn impurity_of_balanced_binary_is_quarter() {
        let imp = weighted_impurity(&[0.0, 0.0, 1.0, 1.0], &[1.0; 4]).unwrap();
        assert!((imp - 0.25).abs() < 1e-15);
    }

    #[test]
    fn impurity_of_constants_is_zero() {
        let imp = weighted_impurity(&[3.5, 3.5, 3.5], &[0.2, 1.0, 5.0]).unwrap();
        assert_eq!(imp, 0.0);
    }

    #[test]
    fn impurity_ignores_zero_weight_rows() {
        let imp = weighted_impurity(&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!((imp - 0.25).abs() < 1e-15);
    }

    #[test]
    fn impurity_rejects_zero_total_weight() {
        assert!(matches!(
            weighted_impurity(&[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::DegenerateWeight(_))
        ));
    }

    #[test]
    fn best_split_finds_separating_midpoint() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let cand = best_split(feats(&x, 1), &t, &w, &[0, 1, 2, 3]).unwrap().unwrap();
        assert_eq!(cand.feature, 0);
        assert_eq!(cand.threshold, 2.5);
        assert!((cand.decrease - 1.0).abs() < 1e-12);
    }

    #[test]
    fn best_split_none_on_constant_targets() {
        let x = [1.0, 2.0, 3.0];
        let t = [0.7, 0.7, 0.7];
        let w = [1.0; 3];
        assert!(best_split(feats(&x, 1), &t, &w, &[0, 1, 2]).unwrap().is_none());
    }

    #[test]
    fn best_split_midpoints_skip_zero_weight_rows() {
        // With the middle row unweighted, the only candidate is between 1 and 3.
        let x = [1.0, 2.0, 3.0];
        let t = [0.0, 1.0, 1.0];
        let w = [1.0, 0.0, 1.0];
        let cand = best_split(feats(&x, 1), &t, &w, &[0, 1, 2]).unwrap().unwrap();
        assert_eq!(cand.threshold, 2.0);
        assert!((cand.decrease - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tie_break_prefers_lowest_feature_then_threshold() {
        // Two identical columns: both split perfectly; feature 0 must win.
        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let cand = best_split(feats(&x, 2), &t, &w, &[0, 1, 2, 3]).unwrap().unwrap();
        assert_eq!(cand.feature, 0);
    }

    #[test]
    fn stump_fit_matches_example() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let tree = fit_cart(feats(&x, 1), &t, &w, 1).unwrap();
        assert_eq!(tree.split_count, 1);
        assert_eq!(tree.predict(&[2.0]).unwrap(), 0.0);
        assert_eq!(tree.predict(&[2.5]).unwrap(), 0.0); // boundary routes left
        assert_eq!(tree.predict(&[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn budget_larger_than_structure_stops_early() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let w = [1.0; 4];
        let tree = fit_cart(feats(&x, 1), &t, &w, 10).unwrap();
        // one split makes both leaves pure; no further splits possible
        assert_eq!(tree.split_count, 1);
    }

    #[test]
    fn recovers_exact_partition_with_enough_budget() {
        // y determined by thresholds on one feature: three regions
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let t: Vec<f64> = x.iter().map(|&v| if v < 4.0 { 0.0 } else if v < 8.0 { 1.0 } else { 0.5 }).collect();
        let w = vec![1.0; 12];
        let tree = fit_cart(feats(&x, 1), &t, &w, 3).unwrap();
        for (i, &v) in x.iter().enumerate() {
            assert_eq!(tree.predict(&[v]).unwrap(), t[i]);
        }
    }

    #[test]
    fn zero_weight_rows_equal_deleted_rows() {
        let x = [0.1, 0.9, 0.4, 0.6, 0.3, 0.8, 0.2, 0.7];
        let t = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let mut w = [1.0, 2.0, 0.5, 1.0, 1.5, 1.0, 2.0, 0.3];
        w[2] = 0.0;
        w[5] = 0.0;
        let full = fit_cart(feats(&x, 1), &t, &w, 3).unwrap();

        let keep: Vec<usize> = (0..8).filter(|&i| w[i] > 0.0).collect();
        let xs: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
        let ts: Vec<f64> = keep.iter().map(|&i| t[i]).collect();
        let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
        let reduced = fit_cart(feats(&xs, 1), &ts, &ws, 3).unwrap();
        assert_eq!(full, reduced);
    }

    #[test]
    fn weight_scaling_leaves_structure_unchanged() {
        let x = [0.1, 0.9, 0.4, 0.6, 0.3, 0.8];
        let t = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let w = [1.0, 2.0, 0.5, 1.0, 1.5, 1.0];
        let scaled: Vec<f64> = w.iter().map(|v| v * 37.5).collect();
        let a = fit_cart(feats(&x, 1), &t, &w, 3).unwrap();
        let b = fit_cart(feats(&x, 1), &t, &scaled, 3).unwrap();
        assert_eq!(a.split_count, b.split_count);
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            match (na, nb) {
                (
                    Node::Internal { feature: fa, threshold: ta, .. },
                    Node::Internal { feature: fb, threshold: tb, .. },
                ) => {
                    assert_eq!(fa, fb);
                    assert_eq!(ta, tb);
                }
                (Node::Leaf { value: va, .. }, Node::Leaf { value: vb, .. }) => {
                    assert!((va - vb).abs() < 1e-12);
                }
                _ => panic!("structure mismatch"),
            }
        }
    }

    #[test]
    fn leaf_values_are_weighted_means() {
        let x = [0.1, 0.2, 0.8, 0.9];
        let t = [0.0, 1.0, 0.0, 1.0];
        let w = [1.0, 3.0, 2.0, 2.0];
        let tree = fit_cart(feats(&x, 1), &t, &w, 2).unwrap();
        // residual of the weighted mean over every leaf is zero
        let mut leaf_acc: std::collections::HashMap<usize, f64> = Default::default();
        for i in 0..4 {
            let mut idx = 0;
            loop {
                match &tree.nodes[idx] {
                    Node::Leaf { value, .. } => {
                        *leaf_acc.entry(idx).or_insert(0.0) += w[i] * (t[i] - value);
                        break;
                    }
                    Node::Internal { threshold, left, right, .. } => {
                        idx = if x[i] <= *threshold { *left } else { *right };
                    }
                }
            }
        }
        for (_, resid) in leaf_acc {
            assert!(resid.abs() < 1e-9);
        }
    }

    #[test]
    fn depth_cap_limits_growth() {
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let t: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        let w = vec![1.0; 16];
        let tree = fit_cart_limited(feats(&x, 1), &t, &w, 100, 2).unwrap();
        assert!(tree.split_count <= 3); // at most a full depth-2 tree
    }

    #[test]
    fn predict_rejects_short_rows() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 1.0, 1.0];
        let tree = fit_cart(feats(&x, 1), &t, &[1.0; 4], 1).unwrap();
        assert!(matches!(tree.predict(&[]), Err(Error::Schema(_))));
    }
}
