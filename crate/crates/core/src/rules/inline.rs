//! Tree inlining into CASE expressions, and the translation of a single
//! split into relational predicates that it shares with other rules.

use crate::ir::{
    argmax, col, num, string, ArithOp, CmpOp, Featurizer, FeatureSource, Model, ModelPipeline, OutputKind,
    ScalarExpr, Tree, TreeNode, UnknownPolicy,
};

/// A split `feature <= threshold` over plan columns, valid on non-NULL
/// inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitCondition {
    /// Every row takes the same side (`true` = left).
    Always(bool),
    Test { left: ScalarExpr, right: ScalarExpr },
}

/// Translates a split into predicates over the columns bound to the
/// pipeline inputs (`bound[i]` feeds input `i`). `None` when the feature
/// has no relational form (strict one-hot encoders). Scaled features are
/// only rendered when `allow_arith` is set.
pub fn split_condition(
    pipeline: &ModelPipeline,
    feature: &str,
    threshold: f64,
    bound: &[String],
    allow_arith: bool,
) -> Option<SplitCondition> {
    let source = pipeline.feature_source(feature)?;
    let input = &pipeline.inputs()[source.input()];
    let column = col(bound[source.input()].clone());
    let cmp = |op, l: ScalarExpr, r: ScalarExpr| ScalarExpr::compare(op, l, r);
    Some(match source {
        FeatureSource::Passthrough { .. } => match input.data_type {
            crate::ir::DataType::Boolean => {
                if threshold < 0.0 {
                    SplitCondition::Always(false)
                } else if threshold >= 1.0 {
                    SplitCondition::Always(true)
                } else {
                    SplitCondition::Test {
                        left: cmp(CmpOp::Eq, column.clone(), ScalarExpr::Literal(crate::ir::Literal::Bool(false))),
                        right: cmp(CmpOp::Eq, column, ScalarExpr::Literal(crate::ir::Literal::Bool(true))),
                    }
                }
            }
            _ => SplitCondition::Test {
                left: cmp(CmpOp::LtEq, column.clone(), num(threshold)),
                right: cmp(CmpOp::Gt, column, num(threshold)),
            },
        },
        FeatureSource::Scaled { mean, std, .. } => {
            if !allow_arith {
                return None;
            }
            let z = ScalarExpr::arith(ArithOp::Div, ScalarExpr::arith(ArithOp::Sub, column, num(*mean)), num(*std));
            SplitCondition::Test {
                left: cmp(CmpOp::LtEq, z.clone(), num(threshold)),
                right: cmp(CmpOp::Gt, z, num(threshold)),
            }
        }
        FeatureSource::OneHot { category, .. } => {
            let Some(Featurizer::OneHot {
                categories, unknown, ..
            }) = pipeline.featurizer_for(&input.name)
            else {
                return None;
            };
            if *unknown == UnknownPolicy::Error {
                return None;
            }
            let cat = string(categories[*category].clone());
            if threshold < 0.0 {
                SplitCondition::Always(false)
            } else if threshold >= 1.0 {
                SplitCondition::Always(true)
            } else {
                SplitCondition::Test {
                    left: cmp(CmpOp::NotEq, column.clone(), cat.clone()),
                    right: cmp(CmpOp::Eq, column, cat),
                }
            }
        }
    })
}

/// Nested CASE computing a single-tree pipeline's scalar output, or `None`
/// when the pipeline has no scalar form or a split cannot be rendered. The
/// expression agrees bit for bit with the interpreter on rows whose bound
/// inputs are non-NULL.
pub fn inline_tree(pipeline: &ModelPipeline, bound: &[String]) -> Option<ScalarExpr> {
    let Model::DecisionTree(tree) = pipeline.model() else {
        return None;
    };
    let leaf = |values: &[f64]| -> Option<f64> {
        match pipeline.output() {
            OutputKind::Label => Some(argmax(values) as f64),
            OutputKind::Scores if values.len() == 1 => Some(values[0]),
            OutputKind::Scores => None,
        }
    };
    fn go(
        tree: &Tree,
        i: usize,
        pipeline: &ModelPipeline,
        bound: &[String],
        leaf: &dyn Fn(&[f64]) -> Option<f64>,
    ) -> Option<ScalarExpr> {
        match tree.node(i) {
            TreeNode::Leaf { values } => leaf(values).map(num),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => match split_condition(pipeline, feature, *threshold, bound, true)? {
                SplitCondition::Always(true) => go(tree, *left, pipeline, bound, leaf),
                SplitCondition::Always(false) => go(tree, *right, pipeline, bound, leaf),
                SplitCondition::Test { left: cond, .. } => Some(ScalarExpr::Case {
                    branches: vec![(cond, go(tree, *left, pipeline, bound, leaf)?)],
                    otherwise: Box::new(go(tree, *right, pipeline, bound, leaf)?),
                }),
            },
        }
    }
    go(tree, 0, pipeline, bound, &leaf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DataType, PipelineInput, TreeShape};

    fn stump(shape: TreeShape) -> ModelPipeline {
        ModelPipeline::new(
            vec![PipelineInput::new("bp", DataType::Numeric)],
            vec![],
            Model::DecisionTree(Tree::from_shape(&shape).unwrap()),
            OutputKind::Scores,
        )
        .unwrap()
    }

    #[test]
    fn single_split_renders_case() {
        let p = stump(TreeShape::split("bp", 140.0, TreeShape::leaf(2.0), TreeShape::leaf(9.0)));
        let e = inline_tree(&p, &["bp".to_string()]).unwrap();
        assert_eq!(e.to_string(), "CASE WHEN bp <= 140.0 THEN 2.0 ELSE 9.0 END");
    }

    #[test]
    fn single_leaf_is_a_literal() {
        let p = stump(TreeShape::leaf(5.0));
        assert_eq!(inline_tree(&p, &["bp".to_string()]), Some(num(5.0)));
    }
}
