//! Plain-text rendering of fitted models: one ASCII tree per group with
//! split conditions and per-leaf risk contributions.

use crate::error::{Error, Result};
use crate::figs::TreeSumModel;
use crate::pipeline::{GFigsModel, Variant, POOLED_GROUP};
use crate::tree::{Node, Tree};

fn render_node(
    tree: &Tree,
    node: usize,
    feature_names: &[String],
    prefix: &str,
    out: &mut String,
) -> Result<()> {
    match &tree.nodes[node] {
        Node::Leaf { value, n, .. } => {
            out.push_str(&format!("Δ Risk = {value:+.4} (n={n})\n"));
        }
        Node::Internal { feature, threshold, left, right } => {
            let name = feature_names
                .get(*feature)
                .ok_or_else(|| Error::Schema(format!("feature index {feature} out of range")))?;
            out.push_str(&format!("{name} ≤ {threshold}\n"));
            out.push_str(&format!("{prefix}├─ "));
            render_node(tree, *left, feature_names, &format!("{prefix}│  "), out)?;
            out.push_str(&format!("{prefix}└─ "));
            render_node(tree, *right, feature_names, &format!("{prefix}   "), out)?;
        }
    }
    Ok(())
}

/// Render one tree as an indented ASCII block.
pub fn render_tree(tree: &Tree, feature_names: &[String]) -> Result<String> {
    let mut out = String::new();
    render_node(tree, 0, feature_names, "", &mut out)?;
    Ok(out)
}

fn render_tree_sum(model: &TreeSumModel, feature_names: &[String]) -> Result<String> {
    let mut out = String::new();
    if model.trees.is_empty() {
        out.push_str(&format!("constant risk = {:+.4}\n", model.intercept));
        return Ok(out);
    }
    if model.intercept != 0.0 {
        out.push_str(&format!("intercept = {:+.4}\n", model.intercept));
    }
    for (i, tree) in model.trees.iter().enumerate() {
        if model.trees.len() > 1 {
            out.push_str(&format!("tree {} of {}:\n", i + 1, model.trees.len()));
        }
        out.push_str(&render_tree(tree, feature_names)?);
    }
    Ok(out)
}

/// Render the whole model, group by group.
pub fn render_model(model: &GFigsModel) -> Result<String> {
    let mut out = String::new();
    for (label, tsm) in &model.groups {
        let heading = if model.config.variant == Variant::Pooled && label == POOLED_GROUP {
            "pooled model".to_string()
        } else {
            format!("group {label:?}")
        };
        out.push_str(&format!(
            "{heading}: {} tree(s), {} split(s)\n",
            tsm.trees.len(),
            tsm.total_splits
        ));
        out.push_str(&render_tree_sum(tsm, &model.feature_names)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_renders_as_three_lines() {
        let mut tree = Tree::leaf(0.0, 0.0, 0);
        tree.nodes = vec![
            Node::Internal { feature: 0, threshold: 2.5, left: 1, right: 2 },
            Node::Leaf { value: 0.25, weight_sum: 2.0, n: 2 },
            Node::Leaf { value: -0.75, weight_sum: 2.0, n: 2 },
        ];
        tree.split_count = 1;
        let text = render_tree(&tree, &["age".to_string()]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3, "got: {text}");
        assert_eq!(lines[0], "age ≤ 2.5");
        assert!(lines[1].contains("Δ Risk = +0.2500 (n=2)"));
        assert!(lines[2].contains("Δ Risk = -0.7500 (n=2)"), "negative leaf keeps its sign");
    }

    #[test]
    fn nested_tree_uses_branch_guides() {
        let tree = Tree {
            nodes: vec![
                Node::Internal { feature: 0, threshold: 1.0, left: 1, right: 2 },
                Node::Internal { feature: 1, threshold: 0.5, left: 3, right: 4 },
                Node::Leaf { value: 0.9, weight_sum: 1.0, n: 1 },
                Node::Leaf { value: 0.1, weight_sum: 1.0, n: 1 },
                Node::Leaf { value: 0.4, weight_sum: 1.0, n: 1 },
            ],
            split_count: 2,
        };
        let text = render_tree(&tree, &["a".to_string(), "b".to_string()]).unwrap();
        assert!(text.contains("├─ b ≤ 0.5"));
        assert!(text.contains("│  ├─ Δ Risk"));
        assert!(text.contains("└─ Δ Risk = +0.9000"));
    }
}
