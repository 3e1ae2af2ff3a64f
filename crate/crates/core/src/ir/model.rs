//! Trained model payloads: decision trees, tree ensembles and linear models.
//!
//! Trees are stored as a flat node array with the root at index 0. A row goes
//! to the LEFT child iff `feature <= threshold`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split {
        feature: String,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        values: Vec<f64>,
    },
}

impl TreeNode {
    pub fn split(feature: impl Into<String>, threshold: f64, left: usize, right: usize) -> Self {
        TreeNode::Split {
            feature: feature.into(),
            threshold,
            left,
            right,
        }
    }

    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf {
            values: vec![value],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validates that the nodes form a proper binary tree rooted at 0 with
    /// uniform leaf arity and finite parameters.
    pub fn new(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        let mut arity = None;
        for (i, node) in nodes.iter().enumerate() {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::Model(format!(
                            "non-finite threshold at tree node {i}"
                        )));
                    }
                    if feature.is_empty() {
                        return Err(Error::Model(format!("empty feature name at tree node {i}")));
                    }
                    for child in [*left, *right] {
                        if child >= nodes.len() {
                            return Err(Error::Model(format!(
                                "tree node {i} references missing node {child}"
                            )));
                        }
                        if child == 0 {
                            return Err(Error::Model(format!(
                                "tree node {i} points back to the root"
                            )));
                        }
                        parents[child] += 1;
                    }
                }
                TreeNode::Leaf { values } => {
                    if values.is_empty() {
                        return Err(Error::Model(format!("empty leaf at tree node {i}")));
                    }
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Model(format!("non-finite leaf value at tree node {i}")));
                    }
                    match arity {
                        None => arity = Some(values.len()),
                        Some(a) if a != values.len() => {
                            return Err(Error::Model(format!(
                                "leaf arity {} at tree node {i} differs from {a}",
                                values.len()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        if let Some(i) = parents.iter().skip(1).position(|&p| p != 1) {
            return Err(Error::Model(format!(
                "tree node {} has {} parents",
                i + 1,
                parents[i + 1]
            )));
        }
        // Every non-root node has exactly one parent and the root none; with
        // n-1 edges this is a tree iff everything is reachable from the root.
        let tree = Tree { nodes };
        let mut seen = vec![false; tree.nodes.len()];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Model("tree contains a cycle".into()));
            }
            if let TreeNode::Split { left, right, .. } = &tree.nodes[i] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Model(format!("tree node {i} is unreachable from the root")));
        }
        Ok(tree)
    }

    pub fn single_leaf(values: Vec<f64>) -> Result<Self> {
        Tree::new(vec![TreeNode::Leaf { values }])
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_arity(&self) -> usize {
        self.nodes
            .iter()
            .find_map(|n| match n {
                TreeNode::Leaf { values } => Some(values.len()),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn features(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(feature.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Index of the leaf a row reaches, or `Err(feature)` when a visited
    /// split reads a NaN (NULL) feature.
    pub fn route<'a>(&'a self, mut value: impl FnMut(&str) -> f64) -> Result<usize, &'a str> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return Ok(i),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = value(feature);
                    if v.is_nan() {
                        return Err(feature);
                    }
                    i = if v <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_values(&self, i: usize) -> &[f64] {
        match &self.nodes[i] {
            TreeNode::Leaf { values } => values,
            TreeNode::Split { .. } => panic!("node {i} is not a leaf"),
        }
    }

    /// Copy of the subtree rooted at `i`, renumbered in pre-order.
    pub fn subtree(&self, i: usize) -> Tree {
        let mut out = Vec::new();
        self.copy_into(i, &mut out);
        Tree { nodes: out }
    }

    fn copy_into(&self, i: usize, out: &mut Vec<TreeNode>) -> usize {
        let at = out.len();
        match &self.nodes[i] {
            TreeNode::Leaf { values } => out.push(TreeNode::Leaf {
                values: values.clone(),
            }),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push(TreeNode::Leaf { values: Vec::new() });
                let l = self.copy_into(*left, out);
                let r = self.copy_into(*right, out);
                out[at] = TreeNode::Split {
                    feature: feature.clone(),
                    threshold: *threshold,
                    left: l,
                    right: r,
                };
            }
        }
        at
    }

    /// Builds a tree from a recursive description, numbering in pre-order.
    pub fn from_shape(shape: &TreeShape) -> Result<Tree> {
        fn emit(s: &TreeShape, out: &mut Vec<TreeNode>) -> usize {
            let at = out.len();
            match s {
                TreeShape::Leaf(values) => out.push(TreeNode::Leaf {
                    values: values.clone(),
                }),
                TreeShape::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(TreeNode::Leaf { values: Vec::new() });
                    let l = emit(left, out);
                    let r = emit(right, out);
                    out[at] = TreeNode::Split {
                        feature: feature.clone(),
                        threshold: *threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::new();
        emit(shape, &mut nodes);
        Tree::new(nodes)
    }

    pub fn to_shape(&self) -> TreeShape {
        fn go(t: &Tree, i: usize) -> TreeShape {
            match &t.nodes[i] {
                TreeNode::Leaf { values } => TreeShape::Leaf(values.clone()),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => TreeShape::Split {
                    feature: feature.clone(),
                    threshold: *threshold,
                    left: Box::new(go(t, *left)),
                    right: Box::new(go(t, *right)),
                },
            }
        }
        go(self, 0)
    }
}

/// Recursive tree description, convenient for building and rewriting trees.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeShape {
    Leaf(Vec<f64>),
    Split {
        feature: String,
        threshold: f64,
        left: Box<TreeShape>,
        right: Box<TreeShape>,
    },
}

impl TreeShape {
    pub fn leaf(value: f64) -> Self {
        TreeShape::Leaf(vec![value])
    }

    pub fn split(feature: impl Into<String>, threshold: f64, left: TreeShape, right: TreeShape) -> Self {
        TreeShape::Split {
            feature: feature.into(),
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    DecisionTree(Tree),
    TreeEnsemble {
        trees: Vec<Tree>,
        aggregation: Aggregation,
    },
    Linear {
        weights: Vec<(String, f64)>,
        intercept: f64,
        link: Link,
    },
}

impl Model {
    pub fn ensemble(trees: Vec<Tree>, aggregation: Aggregation) -> Result<Model> {
        if trees.is_empty() {
            return Err(Error::Model("ensemble has no trees".into()));
        }
        let arity = trees[0].leaf_arity();
        if trees.iter().any(|t| t.leaf_arity() != arity) {
            return Err(Error::Model("ensemble trees differ in leaf arity".into()));
        }
        Ok(Model::TreeEnsemble { trees, aggregation })
    }

    pub fn linear(weights: Vec<(String, f64)>, intercept: f64, link: Link) -> Result<Model> {
        for (i, (name, w)) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::Model(format!("non-finite weight for `{name}`")));
            }
            if weights[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Model(format!("duplicate weight for `{name}`")));
            }
        }
        if !intercept.is_finite() {
            return Err(Error::Model("non-finite intercept".into()));
        }
        Ok(Model::Linear {
            weights,
            intercept,
            link,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::DecisionTree(_) => "decision_tree",
            Model::TreeEnsemble { .. } => "tree_ensemble",
            Model::Linear { .. } => "linear",
        }
    }

    /// Features whose values can influence the output: split features, and
    /// linear features with a non-zero weight.
    pub fn features(&self) -> BTreeSet<String> {
        match self {
            Model::DecisionTree(t) => t.features(),
            Model::TreeEnsemble { trees, .. } => trees.iter().flat_map(|t| t.features()).collect(),
            Model::Linear { weights, .. } => weights
                .iter()
                .filter(|(_, w)| *w != 0.0)
                .map(|(f, _)| f.clone())
                .collect(),
        }
    }

    /// Every feature name the model mentions, including zero weights.
    pub fn referenced_features(&self) -> BTreeSet<String> {
        match self {
            Model::Linear { weights, .. } => weights.iter().map(|(f, _)| f.clone()).collect(),
            other => other.features(),
        }
    }

    pub fn feature_count(&self) -> usize {
        self.features().len()
    }

    pub fn output_arity(&self) -> usize {
        match self {
            Model::DecisionTree(t) => t.leaf_arity(),
            Model::TreeEnsemble { trees, .. } => trees[0].leaf_arity(),
            Model::Linear { .. } => 1,
        }
    }

    /// Total tree nodes (0 for linear models).
    pub fn node_count(&self) -> usize {
        match self {
            Model::DecisionTree(t) => t.node_count(),
            Model::TreeEnsemble { trees, .. } => trees.iter().map(Tree::node_count).sum(),
            Model::Linear { .. } => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        Tree::new(vec![
            TreeNode::split("bp", 140.0, 1, 2),
            TreeNode::leaf(2.0),
            TreeNode::leaf(9.0),
        ])
        .unwrap()
    }

    #[test]
    fn routing_is_left_on_equal() {
        let t = stump();
        assert_eq!(t.route(|_| 140.0), Ok(1));
        assert_eq!(t.route(|_| 140.5), Ok(2));
        assert_eq!(t.route(|_| f64::NAN), Err("bp"));
    }

    #[test]
    fn rejects_malformed_trees() {
        assert!(Tree::new(vec![TreeNode::split("a", 1.0, 1, 5), TreeNode::leaf(1.0)]).is_err());
        // node 1 shared by both branches
        assert!(Tree::new(vec![
            TreeNode::split("a", 1.0, 1, 1),
            TreeNode::leaf(1.0),
            TreeNode::leaf(2.0)
        ])
        .is_err());
        assert!(Tree::new(vec![
            TreeNode::split("a", 1.0, 1, 2),
            TreeNode::leaf(1.0),
            TreeNode::Leaf {
                values: vec![1.0, 2.0]
            }
        ])
        .is_err());
        // cycle between 1 and 2, node 3 detached
        assert!(Tree::new(vec![
            TreeNode::split("a", 1.0, 1, 3),
            TreeNode::split("b", 1.0, 2, 4),
            TreeNode::split("c", 1.0, 1, 4),
            TreeNode::leaf(0.0),
            TreeNode::leaf(0.0),
        ])
        .is_err());
    }

    #[test]
    fn shape_round_trip_and_subtree() {
        let shape = TreeShape::split(
            "a",
            1.0,
            TreeShape::leaf(1.0),
            TreeShape::split("b", 2.0, TreeShape::leaf(2.0), TreeShape::leaf(3.0)),
        );
        let t = Tree::from_shape(&shape).unwrap();
        assert_eq!(t.node_count(), 5);
        assert_eq!(t.to_shape(), shape);
        let right = t.subtree(2);
        assert_eq!(right.node_count(), 3);
        assert_eq!(right.features(), ["b".to_string()].into_iter().collect());
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn linear_features_skip_zero_weights() {
        let m = Model::linear(vec![("a".into(), 0.0), ("b".into(), 1.5)], 0.5, Link::Identity).unwrap();
        assert_eq!(m.features().len(), 1);
        assert_eq!(m.referenced_features().len(), 2);
        assert!(Model::linear(vec![("a".into(), f64::NAN)], 0.0, Link::Identity).is_err());
    }
}
