//! Predicate pushdown, including data filters implied by a tree model and
//! a filter on its prediction.

use std::collections::BTreeMap;

use super::inline::{split_condition, SplitCondition};
use crate::error::Result;
use crate::exec::NullPolicy;
use crate::ir::{
    argmax, output_schema, Catalog, Literal, Model, ModelPayload, Op, OutputKind, Plan, PlanNode,
    ScalarExpr, TreeNode,
};

fn add_unique(list: &mut Vec<ScalarExpr>, e: ScalarExpr) {
    if !e.is_true_literal() && !list.contains(&e) {
        list.push(e);
    }
}

fn wrap(plan: Plan, pending: Vec<ScalarExpr>) -> Plan {
    if pending.is_empty() {
        plan
    } else {
        PlanNode::filter(plan, ScalarExpr::conjunction(pending))
    }
}

/// Moves filter conjuncts as close to the scans as their columns allow and
/// adds filters derived from tree models.
pub fn push_predicates(plan: &Plan, catalog: &Catalog, null_policy: NullPolicy) -> Result<Plan> {
    push(plan, Vec::new(), catalog, null_policy)
}

fn push(node: &Plan, pending: Vec<ScalarExpr>, catalog: &Catalog, policy: NullPolicy) -> Result<Plan> {
    match &node.op {
        Op::Filter { predicate } => {
            let mut all = pending;
            for c in predicate.clone().into_conjuncts() {
                add_unique(&mut all, c);
            }
            push(node.input(), all, catalog, policy)
        }
        Op::Scan { .. } => Ok(wrap(node.clone(), pending)),
        Op::Udf { .. } => {
            let child = push(node.input(), Vec::new(), catalog, policy)?;
            Ok(wrap(node.with_inputs(vec![child]), pending))
        }
        Op::Project { exprs } => {
            let map: BTreeMap<String, ScalarExpr> = exprs
                .iter()
                .filter(|(_, e)| matches!(e, ScalarExpr::Column(_) | ScalarExpr::Literal(_)))
                .cloned()
                .collect();
            let (mut down, mut stay) = (Vec::new(), Vec::new());
            for c in pending {
                if c.columns().iter().all(|x| map.contains_key(x)) {
                    add_unique(&mut down, c.substitute(&map));
                } else {
                    stay.push(c);
                }
            }
            let child = push(node.input(), down, catalog, policy)?;
            Ok(wrap(node.with_inputs(vec![child]), stay))
        }
        Op::Join { .. } => {
            let left_schema = output_schema(&node.inputs[0], catalog)?;
            let right_schema = output_schema(&node.inputs[1], catalog)?;
            let right_names = crate::ir::join_right_names(node, catalog)?;
            let back: BTreeMap<String, String> = right_names
                .iter()
                .cloned()
                .zip(right_schema.names().map(str::to_string))
                .collect();
            let (mut left, mut right, mut stay) = (Vec::new(), Vec::new(), Vec::new());
            for c in pending {
                let cols = c.columns();
                if cols.iter().all(|x| left_schema.contains(x)) {
                    add_unique(&mut left, c);
                } else if cols.iter().all(|x| back.contains_key(x)) {
                    add_unique(&mut right, c.rename_columns(&back));
                } else {
                    stay.push(c);
                }
            }
            let l = push(&node.inputs[0], left, catalog, policy)?;
            let r = push(&node.inputs[1], right, catalog, policy)?;
            Ok(wrap(node.with_inputs(vec![l, r]), stay))
        }
        Op::UnionAll => {
            let branches = node
                .inputs
                .iter()
                .map(|b| push(b, pending.clone(), catalog, policy))
                .collect::<Result<Vec<_>>>()?;
            Ok(node.with_inputs(branches))
        }
        Op::Predict { outputs, .. } | Op::TensorEval { outputs, .. } => {
            let (mut down, mut stay) = (Vec::new(), Vec::new());
            for c in pending {
                if c.columns().iter().any(|x| outputs.contains(x)) {
                    stay.push(c);
                } else {
                    add_unique(&mut down, c);
                }
            }
            for d in derived_filters(node, &stay, catalog, policy)? {
                add_unique(&mut down, d);
            }
            let child = push(node.input(), down, catalog, policy)?;
            Ok(wrap(node.with_inputs(vec![child]), stay))
        }
    }
}

/// Data filters implied by `conditions` over the output of a single-tree
/// Predict: the split conditions on the path from the root to the deepest
/// node above every leaf the conditions accept.
///
/// Rows failing a derived filter land in rejected leaves, so the filter is
/// exact as long as dropping a row early cannot hide a NULL error the model
/// would raise; it is therefore only derived under the drop policy or when
/// every input the tree reads is non-nullable.
fn derived_filters(
    node: &Plan,
    conditions: &[ScalarExpr],
    catalog: &Catalog,
    policy: NullPolicy,
) -> Result<Vec<ScalarExpr>> {
    let Op::Predict {
        payload: ModelPayload::Pipeline(p),
        inputs,
        outputs,
        ..
    } = &node.op
    else {
        return Ok(Vec::new());
    };
    let Model::DecisionTree(tree) = p.model() else {
        return Ok(Vec::new());
    };
    if outputs.len() != 1 || conditions.is_empty() {
        return Ok(Vec::new());
    }
    let out = &outputs[0];
    if conditions.iter().any(|c| c.columns().iter().any(|x| x != out)) {
        return Ok(Vec::new());
    }
    if policy == NullPolicy::Error {
        let schema = output_schema(node.input(), catalog)?;
        let used = p.used_features();
        let nullable = p
            .inputs()
            .iter()
            .zip(inputs)
            .any(|(i, c)| used.contains(&i.name) && schema.field(c).is_none_or(|f| f.nullable));
        if nullable {
            return Ok(Vec::new());
        }
    }
    let leaf_value = |values: &[f64]| match p.output() {
        OutputKind::Label => Some(argmax(values) as f64),
        OutputKind::Scores if values.len() == 1 => Some(values[0]),
        OutputKind::Scores => None,
    };
    let mut accepts = vec![false; tree.node_count()];
    for (i, n) in tree.nodes().iter().enumerate() {
        if let TreeNode::Leaf { values } = n {
            let Some(v) = leaf_value(values) else {
                return Ok(Vec::new());
            };
            let map: BTreeMap<String, ScalarExpr> = [(out.clone(), ScalarExpr::Literal(Literal::num(v)))].into();
            let mut ok = true;
            for c in conditions {
                match c.substitute(&map).const_truth() {
                    Some(b) => ok &= b,
                    None => return Ok(Vec::new()),
                }
            }
            accepts[i] = ok;
        }
    }
    fn any_accepting(tree: &crate::ir::Tree, i: usize, accepts: &[bool]) -> bool {
        match tree.node(i) {
            TreeNode::Leaf { .. } => accepts[i],
            TreeNode::Split { left, right, .. } => any_accepting(tree, *left, accepts) || any_accepting(tree, *right, accepts),
        }
    }
    if !any_accepting(tree, 0, &accepts) {
        return Ok(vec![ScalarExpr::Literal(Literal::Bool(false))]);
    }
    let mut derived = Vec::new();
    let mut i = 0;
    while let TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    } = tree.node(i)
    {
        let (l, r) = (any_accepting(tree, *left, &accepts), any_accepting(tree, *right, accepts.as_slice()));
        if l && r {
            break;
        }
        match split_condition(p, feature, *threshold, inputs, false) {
            Some(SplitCondition::Test { left: lc, right: rc }) => derived.push(if l { lc } else { rc }),
            Some(SplitCondition::Always(_)) => {}
            None => break,
        }
        i = if l { *left } else { *right };
    }
    Ok(derived)
}
