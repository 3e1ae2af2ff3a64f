//! Predicate-based tree pruning.

use std::collections::BTreeMap;

use crate::analysis::{DomainEnv, FeatureDomain, Interval};
use crate::ir::{Featurizer, FeatureSource, Literal, Model, ModelPipeline, Tree, TreeShape, UnknownPolicy};

/// Bounds on every model feature implied by domains over the pipeline's
/// input names. Features without information are absent.
pub fn feature_bounds(pipeline: &ModelPipeline, env: &DomainEnv) -> BTreeMap<String, Interval> {
    let mut out = BTreeMap::new();
    for feature in pipeline.feature_names() {
        let source = pipeline.feature_source(feature).expect("listed feature");
        let input = &pipeline.inputs()[source.input()];
        let domain = env.get(&input.name);
        let bound = match source {
            FeatureSource::Passthrough { .. } => domain.feature_bounds(),
            FeatureSource::Scaled { mean, std, .. } => domain.feature_bounds().map(|b| b.affine(*mean, *std)),
            FeatureSource::OneHot { category, .. } => onehot_bounds(pipeline, &input.name, *category, &domain),
        };
        if let Some(b) = bound.filter(|b| !b.is_full()) {
            out.insert(feature.to_string(), b);
        }
    }
    out
}

/// Range of the indicator `column=categories[category]` under a domain of
/// the raw column. Unknown values under the error policy are left alone:
/// folding them would turn a failing row into a scored one.
fn onehot_bounds(pipeline: &ModelPipeline, column: &str, category: usize, domain: &FeatureDomain) -> Option<Interval> {
    let Some(Featurizer::OneHot {
        categories, unknown, ..
    }) = pipeline.featurizer_for(column)
    else {
        return None;
    };
    let values: Vec<&Literal> = match domain {
        FeatureDomain::Constant(c) => vec![c],
        FeatureDomain::ValueSet(s) => s.iter().collect(),
        _ => return None,
    };
    let known = |v: &Literal| v.as_str().is_some_and(|s| categories.iter().any(|c| c == s));
    if *unknown == UnknownPolicy::Error && !values.iter().all(|v| known(v)) {
        return None;
    }
    let target = &categories[category];
    let hits = values.iter().filter(|v| v.as_str() == Some(target.as_str())).count();
    Some(if hits == 0 {
        Interval::point(0.0)
    } else if hits == values.len() {
        Interval::point(1.0)
    } else {
        Interval::closed(0.0, 1.0).expect("non-empty")
    })
}

/// Removes every branch no row within `bounds` can reach. A split whose
/// feature range lies on one side is replaced by that side; otherwise both
/// children are pruned under the refined ranges.
pub fn prune_tree(tree: &Tree, bounds: &BTreeMap<String, Interval>) -> Tree {
    fn go(shape: TreeShape, bounds: &mut BTreeMap<String, Interval>) -> TreeShape {
        match shape {
            leaf @ TreeShape::Leaf(_) => leaf,
            TreeShape::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let current = bounds.get(&feature).copied().unwrap_or(Interval::FULL);
                if current.all_at_most(threshold) {
                    return go(*left, bounds);
                }
                if current.all_greater(threshold) {
                    return go(*right, bounds);
                }
                let l = current.meet(&Interval::at_most(threshold)).expect("both sides reachable");
                let r = current.meet(&Interval::greater_than(threshold)).expect("both sides reachable");
                bounds.insert(feature.clone(), l);
                let left = go(*left, bounds);
                bounds.insert(feature.clone(), r);
                let right = go(*right, bounds);
                bounds.insert(feature.clone(), current);
                TreeShape::Split {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }
    let mut b = bounds.clone();
    Tree::from_shape(&go(tree.to_shape(), &mut b)).expect("pruning keeps trees well formed")
}

/// Prunes every tree of a tree model; linear models come back unchanged.
pub fn prune_model(model: &Model, bounds: &BTreeMap<String, Interval>) -> Model {
    match model {
        Model::DecisionTree(t) => Model::DecisionTree(prune_tree(t, bounds)),
        Model::TreeEnsemble { trees, aggregation } => Model::TreeEnsemble {
            trees: trees.iter().map(|t| prune_tree(t, bounds)).collect(),
            aggregation: *aggregation,
        },
        linear => linear.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::TreeNode;

    fn tree() -> Tree {
        Tree::from_shape(&TreeShape::split(
            "pregnant",
            0.5,
            TreeShape::split("gender=M", 0.5, TreeShape::leaf(1.0), TreeShape::leaf(2.0)),
            TreeShape::split("bp", 140.0, TreeShape::leaf(3.0), TreeShape::leaf(4.0)),
        ))
        .unwrap()
    }

    #[test]
    fn constant_removes_branch() {
        let b: BTreeMap<_, _> = [("pregnant".to_string(), Interval::point(1.0))].into();
        let p = prune_tree(&tree(), &b);
        assert_eq!(p.node_count(), 3);
        assert!(!p.features().contains("gender=M"));
    }

    #[test]
    fn top_is_identity() {
        assert_eq!(prune_tree(&tree(), &BTreeMap::new()), tree());
    }

    #[test]
    fn repeated_split_is_resolved_by_ancestor() {
        let t = Tree::from_shape(&TreeShape::split(
            "x",
            5.0,
            TreeShape::split("x", 7.0, TreeShape::leaf(1.0), TreeShape::leaf(2.0)),
            TreeShape::leaf(3.0),
        ))
        .unwrap();
        let p = prune_tree(&t, &BTreeMap::new());
        assert_eq!(p.node_count(), 3);
        assert!(matches!(p.node(1), TreeNode::Leaf { values } if values == &[1.0]));
    }
}
