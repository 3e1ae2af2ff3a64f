//! Splitting a tree model and its query at the root split.

use std::sync::Arc;

use super::inline::{split_condition, SplitCondition};
use crate::error::Result;
use crate::exec::NullPolicy;
use crate::ir::{
    output_schema, Catalog, CatalogModel, FeatureSource, Model, ModelPayload, Op, Plan, PlanNode, TreeNode,
};

/// Outcome of trying to split one query.
pub struct SplitResult {
    pub plan: Plan,
    pub notes: Vec<String>,
}

/// Rewrites the first splittable Predict reached from the root through
/// row-wise operators into a UNION ALL of two copies of the query: one
/// filtered to the root split's left side scoring the left subtree, one for
/// the right side. An existing UNION ALL at the root is split per branch.
pub fn split_model_query(
    plan: &Plan,
    catalog: &mut Catalog,
    gain_threshold: f64,
    null_policy: NullPolicy,
) -> Result<SplitResult> {
    let mut notes = Vec::new();
    let plan = split_rec(plan, catalog, gain_threshold, null_policy, &mut notes)?;
    Ok(SplitResult { plan, notes })
}

fn split_rec(
    plan: &Plan,
    catalog: &mut Catalog,
    gain: f64,
    policy: NullPolicy,
    notes: &mut Vec<String>,
) -> Result<Plan> {
    if let Op::UnionAll = plan.op {
        let branches = plan
            .inputs
            .iter()
            .map(|b| split_rec(b, catalog, gain, policy, notes))
            .collect::<Result<Vec<_>>>()?;
        return Ok(plan.with_inputs(branches));
    }
    let mut node = plan.clone();
    loop {
        match &node.op {
            Op::Filter { .. } | Op::Project { .. } | Op::TensorEval { .. } => {}
            Op::Predict { .. } => {
                if let Some((left, right)) = try_split(&node, catalog, gain, policy, notes)? {
                    let l = replace(plan, &node, &left);
                    let r = replace(plan, &node, &right);
                    return Ok(PlanNode::union_all(vec![l, r]));
                }
            }
            _ => return Ok(plan.clone()),
        }
        node = node.input().clone();
    }
}

fn replace(plan: &Plan, target: &Plan, with: &Plan) -> Plan {
    if Arc::ptr_eq(plan, target) {
        return with.clone();
    }
    plan.with_inputs(plan.inputs.iter().map(|c| replace(c, target, with)).collect())
}

fn try_split(
    node: &Plan,
    catalog: &mut Catalog,
    gain: f64,
    policy: NullPolicy,
    notes: &mut Vec<String>,
) -> Result<Option<(Plan, Plan)>> {
    let Op::Predict {
        model,
        payload: ModelPayload::Pipeline(p),
        inputs,
        outputs,
    } = &node.op
    else {
        return Ok(None);
    };
    let Model::DecisionTree(tree) = p.model() else {
        return Ok(None);
    };
    let TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    } = tree.node(0)
    else {
        return Ok(None);
    };
    let Some(FeatureSource::Passthrough { input }) = p.feature_source(feature) else {
        notes.push(format!("{model}: root feature `{feature}` is not a direct input column"));
        return Ok(None);
    };
    let (lt, rt) = (tree.subtree(*left), tree.subtree(*right));
    let (a, b) = (lt.node_count() as f64, rt.node_count() as f64);
    let ratio = a.max(b) / a.min(b);
    if ratio < gain {
        notes.push(format!("{model}: subtree size ratio {ratio:.2} below {gain}"));
        return Ok(None);
    }
    let column = &inputs[*input];
    let nullable = output_schema(node.input(), catalog)?
        .field(column)
        .is_none_or(|f| f.nullable);
    if nullable && policy == NullPolicy::Error {
        notes.push(format!(
            "{model}: `{column}` is nullable under the error policy; a NULL would match neither branch"
        ));
        return Ok(None);
    }
    let Some(SplitCondition::Test {
        left: left_cond,
        right: right_cond,
    }) = split_condition(p, feature, *threshold, inputs, false)
    else {
        return Ok(None);
    };
    let mut branch = |sub: crate::ir::Tree, cond| -> Result<Plan> {
        let q = Arc::new(p.with_model(Model::DecisionTree(sub))?);
        let name = catalog.register_derived(model, "split", CatalogModel::Pipeline(q.clone()));
        Ok(PlanNode::new(
            Op::Predict {
                model: name,
                payload: ModelPayload::Pipeline(q),
                inputs: inputs.clone(),
                outputs: outputs.clone(),
            },
            vec![PlanNode::filter(node.input().clone(), cond)],
        ))
    };
    Ok(Some((branch(lt, left_cond)?, branch(rt, right_cond)?)))
}
