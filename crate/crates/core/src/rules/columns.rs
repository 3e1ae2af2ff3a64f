//! Model-projection pushdown, column pruning and join elimination.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::Result;
use crate::ir::{
    join_right_names, output_schema, Catalog, CatalogModel, ModelPayload, Op, Plan, PlanNode, ScalarExpr,
};

type Required = Option<BTreeSet<String>>;

/// Narrows every pipeline Predict to the inputs its model reads (dropping
/// zero linear weights), then prunes columns nobody consumes, inserting
/// projections over scans. Narrowed pipelines are registered as derived
/// models.
pub fn projection_pushdown(plan: &Plan, catalog: &mut Catalog) -> Result<Plan> {
    let narrowed = plan.transform_up(&mut |node| {
        let Op::Predict {
            model,
            payload: ModelPayload::Pipeline(p),
            inputs,
            outputs,
        } = &node.op
        else {
            return Ok(node);
        };
        let (q, kept) = p.restrict_to_used()?;
        if q == **p {
            return Ok(node);
        }
        let q = Arc::new(q);
        let name = catalog.register_derived(model, "proj", CatalogModel::Pipeline(q.clone()));
        Ok(PlanNode::new(
            Op::Predict {
                model: name,
                payload: ModelPayload::Pipeline(q),
                inputs: kept.iter().map(|&i| inputs[i].clone()).collect(),
                outputs: outputs.clone(),
            },
            node.inputs.clone(),
        ))
    })?;
    prune_columns(&narrowed, &None, catalog)
}

fn prune_columns(node: &Plan, required: &Required, catalog: &Catalog) -> Result<Plan> {
    let with = |set: &BTreeSet<String>, extra: BTreeSet<String>| -> Required {
        Some(set.iter().cloned().chain(extra).collect())
    };
    match &node.op {
        Op::Scan { .. } => {
            let Some(req) = required else {
                return Ok(node.clone());
            };
            let schema = output_schema(node, catalog)?;
            let mut keep: Vec<&str> = schema.names().filter(|c| req.contains(*c)).collect();
            if keep.is_empty() {
                keep.extend(schema.names().next());
            }
            if keep.len() == schema.len() {
                Ok(node.clone())
            } else {
                Ok(PlanNode::project_columns(node.clone(), &keep))
            }
        }
        Op::Filter { predicate } => {
            let child_req = required.as_ref().and_then(|r| with(r, predicate.columns()));
            Ok(node.with_inputs(vec![prune_columns(node.input(), &child_req, catalog)?]))
        }
        Op::Project { exprs } => {
            let kept: Vec<(String, ScalarExpr)> = match required {
                None => exprs.clone(),
                Some(req) => {
                    let k: Vec<_> = exprs.iter().filter(|(n, _)| req.contains(n)).cloned().collect();
                    if k.is_empty() {
                        exprs[..1].to_vec()
                    } else {
                        k
                    }
                }
            };
            let child_req: BTreeSet<String> = kept.iter().flat_map(|(_, e)| e.columns()).collect();
            let child = prune_columns(node.input(), &Some(child_req), catalog)?;
            Ok(PlanNode::project(child, kept))
        }
        Op::Predict { inputs, outputs, .. } | Op::TensorEval { inputs, outputs, .. } => {
            let child_req = required.as_ref().map(|r| {
                r.iter()
                    .filter(|c| !outputs.contains(c))
                    .cloned()
                    .chain(inputs.iter().cloned())
                    .collect()
            });
            Ok(node.with_inputs(vec![prune_columns(node.input(), &child_req, catalog)?]))
        }
        Op::Udf { .. } => Ok(node.with_inputs(vec![prune_columns(node.input(), &None, catalog)?])),
        Op::UnionAll => Ok(node.with_inputs(
            node.inputs
                .iter()
                .map(|b| prune_columns(b, required, catalog))
                .collect::<Result<_>>()?,
        )),
        Op::Join { keys } => {
            let Some(req) = required else {
                return Ok(node.with_inputs(vec![
                    prune_columns(&node.inputs[0], &None, catalog)?,
                    prune_columns(&node.inputs[1], &None, catalog)?,
                ]));
            };
            let left_schema = output_schema(&node.inputs[0], catalog)?;
            let right_schema = output_schema(&node.inputs[1], catalog)?;
            let old_right = join_right_names(node, catalog)?;
            let left_req: BTreeSet<String> = left_schema
                .names()
                .filter(|c| req.contains(*c))
                .map(str::to_string)
                .chain(keys.iter().map(|k| k.left.clone()))
                .collect();
            let right_req: BTreeSet<String> = right_schema
                .names()
                .zip(&old_right)
                .filter(|(_, out)| req.contains(*out))
                .map(|(c, _)| c.to_string())
                .chain(keys.iter().map(|k| k.right.clone()))
                .collect();
            let l = prune_columns(&node.inputs[0], &Some(left_req), catalog)?;
            let r = prune_columns(&node.inputs[1], &Some(right_req), catalog)?;
            let rebuilt = node.with_inputs(vec![l, r]);
            restore_right_names(&rebuilt, &right_schema, &old_right, catalog)
        }
    }
}

/// Narrowing the left input can change the suffixes the join gives right
/// columns; renames them back when it does.
fn restore_right_names(
    join: &Plan,
    old_right_schema: &crate::ir::Schema,
    old_right: &[String],
    catalog: &Catalog,
) -> Result<Plan> {
    let old: BTreeMap<&str, &str> = old_right_schema
        .names()
        .zip(old_right.iter().map(String::as_str))
        .collect();
    let left = output_schema(&join.inputs[0], catalog)?;
    let right = output_schema(&join.inputs[1], catalog)?;
    let new_right = join_right_names(join, catalog)?;
    let mut renamed = false;
    let mut exprs: Vec<(String, ScalarExpr)> = left.names().map(|c| (c.to_string(), ScalarExpr::Column(c.to_string()))).collect();
    for (c, now) in right.names().zip(&new_right) {
        let was = old[c];
        renamed |= was != now;
        exprs.push((was.to_string(), ScalarExpr::Column(now.clone())));
    }
    Ok(if renamed {
        PlanNode::project(join.clone(), exprs)
    } else {
        join.clone()
    })
}

/// Base table and column a column of `plan`'s output is a plain copy of.
pub fn origin(plan: &Plan, column: &str, catalog: &Catalog) -> Result<Option<(String, String)>> {
    Ok(match &plan.op {
        Op::Scan { table } => Some((table.clone(), column.to_string())),
        Op::Project { exprs } => match exprs.iter().find(|(n, _)| n == column) {
            Some((_, ScalarExpr::Column(c))) => origin(plan.input(), c, catalog)?,
            _ => None,
        },
        Op::Filter { .. } | Op::Udf { .. } => origin(plan.input(), column, catalog)?,
        Op::Predict { outputs, .. } | Op::TensorEval { outputs, .. } => {
            if outputs.iter().any(|o| o == column) {
                None
            } else {
                origin(plan.input(), column, catalog)?
            }
        }
        Op::Join { .. } => {
            let left = output_schema(&plan.inputs[0], catalog)?;
            if left.contains(column) {
                origin(&plan.inputs[0], column, catalog)?
            } else {
                let right = output_schema(&plan.inputs[1], catalog)?;
                let names = join_right_names(plan, catalog)?;
                match names.iter().position(|n| n == column) {
                    Some(i) => origin(&plan.inputs[1], right.fields()[i].name.as_str(), catalog)?,
                    None => None,
                }
            }
        }
        Op::UnionAll => None,
    })
}

/// A side that returns every row of one table unchanged: projections of
/// plain columns over a scan.
fn whole_table(plan: &Plan) -> bool {
    match &plan.op {
        Op::Scan { .. } => true,
        Op::Project { exprs } => {
            exprs.iter().all(|(_, e)| matches!(e, ScalarExpr::Column(_))) && whole_table(plan.input())
        }
        _ => false,
    }
}

/// Removes inner equi-joins whose one side contributes no consumed column
/// and matches every row of the other side exactly once: single-column
/// join on a declared unique key of an unfiltered table, referenced by a
/// declared foreign key from a non-nullable column of the other side.
pub fn eliminate_joins(plan: &Plan, catalog: &Catalog) -> Result<Plan> {
    eliminate(plan, &None, catalog)
}

fn eliminate(node: &Plan, required: &Required, catalog: &Catalog) -> Result<Plan> {
    let recurse_unary = |child_req: Required| -> Result<Plan> {
        Ok(node.with_inputs(vec![eliminate(node.input(), &child_req, catalog)?]))
    };
    match &node.op {
        Op::Scan { .. } => Ok(node.clone()),
        Op::Filter { predicate } => recurse_unary(
            required
                .as_ref()
                .map(|r| r.iter().cloned().chain(predicate.columns()).collect()),
        ),
        Op::Project { exprs } => recurse_unary(Some(exprs.iter().flat_map(|(_, e)| e.columns()).collect())),
        Op::Predict { inputs, outputs, .. } | Op::TensorEval { inputs, outputs, .. } => recurse_unary(
            required.as_ref().map(|r| {
                r.iter()
                    .filter(|c| !outputs.contains(c))
                    .cloned()
                    .chain(inputs.iter().cloned())
                    .collect()
            }),
        ),
        Op::Udf { .. } => recurse_unary(None),
        Op::UnionAll => Ok(node.with_inputs(
            node.inputs
                .iter()
                .map(|b| eliminate(b, required, catalog))
                .collect::<Result<_>>()?,
        )),
        Op::Join { keys } => {
            let left_schema = output_schema(&node.inputs[0], catalog)?;
            let right_schema = output_schema(&node.inputs[1], catalog)?;
            let right_out = join_right_names(node, catalog)?;
            if let (Some(req), [key]) = (required, keys.as_slice()) {
                let right_used = right_out.iter().any(|c| req.contains(c));
                let left_used = left_schema.names().any(|c| req.contains(c));
                if !right_used && removable(&node.inputs[1], &key.right, &node.inputs[0], &key.left, catalog)? {
                    let child_req = Some(req.iter().cloned().chain([key.left.clone()]).collect());
                    return eliminate(&node.inputs[0], &child_req, catalog);
                }
                if !left_used && removable(&node.inputs[0], &key.left, &node.inputs[1], &key.right, catalog)? {
                    let back: BTreeMap<&str, &str> = right_out
                        .iter()
                        .map(String::as_str)
                        .zip(right_schema.names())
                        .collect();
                    let child_req = Some(
                        req.iter()
                            .filter_map(|c| back.get(c.as_str()).map(|s| s.to_string()))
                            .chain([key.right.clone()])
                            .collect(),
                    );
                    let kept = eliminate(&node.inputs[1], &child_req, catalog)?;
                    let exprs = right_out
                        .iter()
                        .zip(right_schema.names())
                        .filter(|(out, _)| req.contains(*out))
                        .map(|(out, c)| (out.clone(), ScalarExpr::Column(c.to_string())))
                        .collect::<Vec<_>>();
                    return Ok(if exprs.iter().all(|(o, e)| matches!(e, ScalarExpr::Column(c) if c == o)) {
                        kept
                    } else {
                        PlanNode::project(kept, exprs)
                    });
                }
            }
            let (left_req, right_req) = match required {
                None => (None, None),
                Some(req) => (
                    Some(
                        left_schema
                            .names()
                            .filter(|c| req.contains(*c))
                            .map(str::to_string)
                            .chain(keys.iter().map(|k| k.left.clone()))
                            .collect(),
                    ),
                    Some(
                        right_schema
                            .names()
                            .zip(&right_out)
                            .filter(|(_, o)| req.contains(*o))
                            .map(|(c, _)| c.to_string())
                            .chain(keys.iter().map(|k| k.right.clone()))
                            .collect(),
                    ),
                ),
            };
            let rebuilt = node.with_inputs(vec![
                eliminate(&node.inputs[0], &left_req, catalog)?,
                eliminate(&node.inputs[1], &right_req, catalog)?,
            ]);
            restore_right_names(&rebuilt, &right_schema, &right_out, catalog)
        }
    }
}

/// Whether `side` joined on `side_key` with `other.other_key` yields each
/// row of `other` exactly once.
fn removable(side: &Plan, side_key: &str, other: &Plan, other_key: &str, catalog: &Catalog) -> Result<bool> {
    if !whole_table(side) {
        return Ok(false);
    }
    let Some((table, column)) = origin(side, side_key, catalog)? else {
        return Ok(false);
    };
    if !catalog.table(&table)?.is_unique(&column) {
        return Ok(false);
    }
    let Some((from_table, from_column)) = origin(other, other_key, catalog)? else {
        return Ok(false);
    };
    let fk = catalog
        .table(&from_table)?
        .foreign_keys
        .iter()
        .any(|fk| fk.column == from_column && fk.table == table && fk.references == column);
    let nullable = output_schema(other, catalog)?
        .field(other_key)
        .is_none_or(|f| f.nullable);
    Ok(fk && !nullable)
}
