//! Plan rewrites that replace model payloads: pruning, one-hot folding,
//! inlining, tensor translation and tensor constant folding.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::inline::inline_tree;
use super::onehot::fold_onehot;
use super::prune::{feature_bounds, prune_model};
use crate::analysis::{DomainAnalysis, DomainEnv, FeatureDomain};
use crate::error::Result;
use crate::ir::{
    output_schema, Catalog, CatalogModel, Literal, Model, ModelPayload, ModelPipeline, Op, Plan, PlanNode,
    ScalarExpr,
};
use crate::tensor::{const_fold, TensorModel};
use crate::Tensor;

/// Rebuilds `plan` bottom-up, offering every original node and its rebuilt
/// children to `f`.
fn rewrite(plan: &Plan, f: &mut impl FnMut(&Plan, Vec<Plan>) -> Result<Option<Plan>>) -> Result<Plan> {
    let children = plan.inputs.iter().map(|c| rewrite(c, f)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = f(plan, children.clone())? {
        return Ok(p);
    }
    if children.iter().zip(&plan.inputs).all(|(a, b)| Arc::ptr_eq(a, b)) {
        Ok(plan.clone())
    } else {
        Ok(plan.with_inputs(children))
    }
}

fn model_envs(plan: &Plan, catalog: &Catalog, use_stats: bool) -> Result<HashMap<*const PlanNode, DomainEnv>> {
    let mut analysis = DomainAnalysis::new(catalog, use_stats);
    let mut out = HashMap::new();
    for node in plan.preorder() {
        if node.op.is_model() {
            out.insert(Arc::as_ptr(&node), analysis.model_inputs(&node)?);
        }
    }
    Ok(out)
}

fn with_pipeline(node: &Plan, children: Vec<Plan>, catalog: &mut Catalog, tag: &str, p: ModelPipeline) -> Plan {
    let Op::Predict {
        model, inputs, outputs, ..
    } = &node.op
    else {
        unreachable!("only Predict nodes carry pipelines");
    };
    let p = Arc::new(p);
    let name = catalog.register_derived(model, tag, CatalogModel::Pipeline(p.clone()));
    PlanNode::new(
        Op::Predict {
            model: name,
            payload: ModelPayload::Pipeline(p),
            inputs: inputs.clone(),
            outputs: outputs.clone(),
        },
        children,
    )
}

fn pipeline_of(node: &Plan) -> Option<&Arc<ModelPipeline>> {
    match &node.op {
        Op::Predict {
            payload: ModelPayload::Pipeline(p),
            ..
        } => Some(p),
        _ => None,
    }
}

fn model_name(node: &Plan) -> &str {
    match &node.op {
        Op::Predict { model, .. } | Op::TensorEval { model, .. } => model,
        _ => "",
    }
}

/// Prunes tree models under the domains reaching them. A model whose input
/// is statically empty gets an always-false filter below it.
pub fn prune_models(plan: &Plan, catalog: &mut Catalog, use_stats: bool) -> Result<(Plan, Vec<String>)> {
    let envs = model_envs(plan, catalog, use_stats)?;
    let mut notes = Vec::new();
    let out = rewrite(plan, &mut |node, children| {
        let Some(p) = pipeline_of(node) else {
            return Ok(None);
        };
        let env = &envs[&Arc::as_ptr(node)];
        if env.is_unreachable() {
            if matches!(&children[0].op, Op::Filter { predicate } if predicate.is_false_literal()) {
                return Ok(None);
            }
            notes.push(format!("{}: input is statically empty", model_name(node)));
            let empty = PlanNode::filter(children[0].clone(), ScalarExpr::Literal(Literal::Bool(false)));
            return Ok(Some(node.with_inputs(vec![empty])));
        }
        if matches!(p.model(), Model::Linear { .. }) {
            return Ok(None);
        }
        let pruned = prune_model(p.model(), &feature_bounds(p, env));
        let (before, after) = (p.model().node_count(), pruned.node_count());
        if after == before {
            return Ok(None);
        }
        let q = p.with_model(pruned)?;
        let dropped: Vec<String> = p.used_features().difference(&q.used_features()).cloned().collect();
        notes.push(format!(
            "{}: {before} -> {after} tree nodes{}",
            model_name(node),
            if dropped.is_empty() {
                String::new()
            } else {
                format!(", no longer reads {}", dropped.join(", "))
            }
        ));
        Ok(Some(with_pipeline(node, children, catalog, "pruned", q)))
    })?;
    Ok((out, notes))
}

/// Folds one-hot encoders under constant and value-set domains.
pub fn fold_models(plan: &Plan, catalog: &mut Catalog, use_stats: bool) -> Result<(Plan, Vec<String>)> {
    let envs = model_envs(plan, catalog, use_stats)?;
    let mut notes = Vec::new();
    let out = rewrite(plan, &mut |node, children| {
        let Some(p) = pipeline_of(node) else {
            return Ok(None);
        };
        let env = &envs[&Arc::as_ptr(node)];
        if env.is_unreachable() {
            return Ok(None);
        }
        let Some(q) = fold_onehot(p, env)? else {
            return Ok(None);
        };
        notes.push(format!(
            "{}: {} -> {} model features",
            model_name(node),
            p.model().feature_count(),
            q.model().feature_count()
        ));
        Ok(Some(with_pipeline(node, children, catalog, "folded", q)))
    })?;
    Ok((out, notes))
}

/// Whether every input the pipeline reads is bound to a non-nullable column.
fn used_inputs_non_null(p: &ModelPipeline, inputs: &[String], child: &Plan, catalog: &Catalog) -> Result<bool> {
    let schema = output_schema(child, catalog)?;
    let used = p.used_features();
    Ok(p.inputs().iter().zip(inputs).all(|(i, c)| {
        !used.contains(&i.name) || schema.field(c).is_some_and(|f| !f.nullable)
    }))
}

/// Small single trees with a scalar output, reading non-nullable columns.
pub fn inline_candidate(p: &ModelPipeline, max_nodes: usize) -> bool {
    matches!(p.model(), Model::DecisionTree(t) if t.node_count() <= max_nodes) && p.output_width() == 1
}

/// Replaces small tree Predicts by a projection computing a CASE
/// expression.
pub fn inline_models(plan: &Plan, catalog: &Catalog, max_nodes: usize) -> Result<(Plan, Vec<String>)> {
    let mut notes = Vec::new();
    let out = rewrite(plan, &mut |node, children| {
        let Some(p) = pipeline_of(node) else {
            return Ok(None);
        };
        let Op::Predict { inputs, outputs, .. } = &node.op else {
            unreachable!()
        };
        if !inline_candidate(p, max_nodes) {
            return Ok(None);
        }
        if !used_inputs_non_null(p, inputs, &children[0], catalog)? {
            notes.push(format!("{}: nullable input, kept on the interpreter", model_name(node)));
            return Ok(None);
        }
        let Some(expr) = inline_tree(p, inputs) else {
            notes.push(format!("{}: no relational form", model_name(node)));
            return Ok(None);
        };
        let schema = output_schema(&children[0], catalog)?;
        let mut exprs: Vec<(String, ScalarExpr)> = schema
            .names()
            .map(|c| (c.to_string(), ScalarExpr::Column(c.to_string())))
            .collect();
        exprs.push((outputs[0].clone(), expr));
        notes.push(format!("{}: inlined {} tree nodes", model_name(node), p.model().node_count()));
        Ok(Some(PlanNode::project(children[0].clone(), exprs)))
    })?;
    Ok((out, notes))
}

/// Lowers the remaining pipeline Predicts that are not inline candidates
/// to tensor graphs.
pub fn translate_models(plan: &Plan, catalog: &mut Catalog, max_nodes: usize) -> Result<(Plan, Vec<String>)> {
    let mut notes = Vec::new();
    let out = rewrite(plan, &mut |node, children| {
        let Some(p) = pipeline_of(node) else {
            return Ok(None);
        };
        let Op::Predict {
            model, inputs, outputs, ..
        } = &node.op
        else {
            unreachable!()
        };
        if inline_candidate(p, max_nodes) {
            return Ok(None);
        }
        let program = Arc::new(TensorModel::from_pipeline(p.clone())?);
        let name = catalog.register_derived(model, "nn", CatalogModel::Tensor(program.clone()));
        notes.push(format!("{model}: {} graph nodes", program.graph.len()));
        Ok(Some(PlanNode::new(
            Op::TensorEval {
                model: name,
                program,
                inputs: inputs.clone(),
                outputs: outputs.clone(),
            },
            children,
        )))
    })?;
    Ok((out, notes))
}

/// Constant graph bindings implied by the domains of a tensor program's
/// inputs.
pub fn constant_bindings(program: &TensorModel, env: &DomainEnv) -> BTreeMap<String, Tensor> {
    let p = &program.source;
    let mut out = BTreeMap::new();
    for spec in &program.inputs {
        let FeatureDomain::Constant(lit) = env.get(&spec.name) else {
            continue;
        };
        let i = p.input_index(&spec.name).expect("graph input is a pipeline input");
        let v = p.encode_input(i, Some(&lit));
        if v.is_nan() || (spec.strict && v < 0.0) {
            continue;
        }
        out.insert(spec.name.clone(), Tensor::new(1, 1, vec![v]));
    }
    out
}

/// Binds inputs with constant domains into tensor programs and folds the
/// graphs.
pub fn fold_tensor_models(plan: &Plan, catalog: &mut Catalog, use_stats: bool) -> Result<(Plan, Vec<String>)> {
    let envs = model_envs(plan, catalog, use_stats)?;
    let mut notes = Vec::new();
    let out = rewrite(plan, &mut |node, children| {
        let Op::TensorEval {
            model,
            program,
            inputs,
            outputs,
        } = &node.op
        else {
            return Ok(None);
        };
        let env = &envs[&Arc::as_ptr(node)];
        let bindings = constant_bindings(program, env);
        if bindings.is_empty() {
            return Ok(None);
        }
        let graph = const_fold(&program.graph, &bindings)?;
        if graph.len() >= program.graph.len() && graph.input_specs().len() == program.graph.input_specs().len() {
            return Ok(None);
        }
        notes.push(format!(
            "{model}: bound {} -> {} -> {} graph nodes",
            bindings.keys().cloned().collect::<Vec<_>>().join(", "),
            program.graph.len(),
            graph.len()
        ));
        let folded = Arc::new(TensorModel::with_graph(program.source.clone(), graph));
        let name = catalog.register_derived(model, "const", CatalogModel::Tensor(folded.clone()));
        Ok(Some(PlanNode::new(
            Op::TensorEval {
                model: name,
                program: folded,
                inputs: inputs.clone(),
                outputs: outputs.clone(),
            },
            children,
        )))
    })?;
    Ok((out, notes))
}
