//! Plan operators. A plan is an immutable tree of reference-counted nodes;
//! sub-plans may be shared, which makes it a DAG. Rewrites build new nodes.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::catalog::{Catalog, CatalogModel};
use super::dispatch::ClusterDispatch;
use super::expr::ScalarExpr;
use super::pipeline::{ModelPipeline, PipelineInput};
use super::schema::{DataType, Field, Schema};
use crate::error::{Error, Result};
use crate::tensor::TensorModel;

pub type Plan = Arc<PlanNode>;

/// Equality condition of an inner equi-join: `left` resolves in the left
/// input, `right` in the right input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinKey {
    pub left: String,
    pub right: String,
}

impl JoinKey {
    pub fn new(left: impl Into<String>, right: impl Into<String>) -> Self {
        JoinKey {
            left: left.into(),
            right: right.into(),
        }
    }
}

/// What a Predict node evaluates.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelPayload {
    Pipeline(Arc<ModelPipeline>),
    Dispatch(Arc<ClusterDispatch>),
}

impl ModelPayload {
    pub fn pipeline(&self) -> &ModelPipeline {
        match self {
            ModelPayload::Pipeline(p) => p,
            ModelPayload::Dispatch(d) => &d.fallback,
        }
    }

    pub fn inputs(&self) -> &[PipelineInput] {
        self.pipeline().inputs()
    }

    pub fn output_width(&self) -> usize {
        self.pipeline().output_width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Scan {
        table: String,
    },
    Filter {
        predicate: ScalarExpr,
    },
    Project {
        exprs: Vec<(String, ScalarExpr)>,
    },
    Join {
        keys: Vec<JoinKey>,
    },
    UnionAll,
    /// Appends `outputs` computed by the model from the `inputs` columns.
    Predict {
        model: String,
        payload: ModelPayload,
        inputs: Vec<String>,
        outputs: Vec<String>,
    },
    TensorEval {
        model: String,
        program: Arc<TensorModel>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    },
    /// Opaque user code; passes its input schema through.
    Udf {
        tag: String,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Scan { .. } => "Scan",
            Op::Filter { .. } => "Filter",
            Op::Project { .. } => "Project",
            Op::Join { .. } => "Join",
            Op::UnionAll => "UnionAll",
            Op::Predict { .. } => "Predict",
            Op::TensorEval { .. } => "TensorEval",
            Op::Udf { .. } => "Udf",
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Op::Scan { .. } => n == 0,
            Op::Join { .. } => n == 2,
            Op::UnionAll => n >= 2,
            _ => n == 1,
        }
    }

    fn arity_text(&self) -> &'static str {
        match self {
            Op::Scan { .. } => "0",
            Op::Join { .. } => "2",
            Op::UnionAll => "at least 2",
            _ => "1",
        }
    }

    pub fn is_model(&self) -> bool {
        matches!(self, Op::Predict { .. } | Op::TensorEval { .. })
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Scan { table } => write!(f, "Scan({table})"),
            Op::Filter { predicate } => write!(f, "Filter({predicate})"),
            Op::Project { exprs } => {
                f.write_str("Project(")?;
                for (i, (name, e)) in exprs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match e {
                        ScalarExpr::Column(c) if c == name => write!(f, "{c}")?,
                        _ => write!(f, "{e} AS {name}")?,
                    }
                }
                f.write_str(")")
            }
            Op::Join { keys } => {
                f.write_str("Join(")?;
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" AND ")?;
                    }
                    write!(f, "{} = {}", k.left, k.right)?;
                }
                f.write_str(")")
            }
            Op::UnionAll => f.write_str("UnionAll"),
            Op::Predict {
                model,
                payload,
                inputs,
                outputs,
            } => {
                let kind = match payload {
                    ModelPayload::Pipeline(p) => p.model().kind(),
                    ModelPayload::Dispatch(_) => "dispatch",
                };
                write!(
                    f,
                    "Predict({model}:{kind}; {} -> {})",
                    inputs.join(", "),
                    outputs.join(", ")
                )
            }
            Op::TensorEval {
                model,
                program,
                inputs,
                outputs,
            } => write!(
                f,
                "TensorEval({model}:{} nodes; {} -> {})",
                program.graph.len(),
                inputs.join(", "),
                outputs.join(", ")
            ),
            Op::Udf { tag } => write!(f, "Udf({tag})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanNode {
    pub op: Op,
    pub inputs: Vec<Plan>,
}

impl PlanNode {
    pub fn new(op: Op, inputs: Vec<Plan>) -> Plan {
        Arc::new(PlanNode { op, inputs })
    }

    pub fn scan(table: impl Into<String>) -> Plan {
        PlanNode::new(
            Op::Scan {
                table: table.into(),
            },
            vec![],
        )
    }

    pub fn filter(input: Plan, predicate: ScalarExpr) -> Plan {
        PlanNode::new(Op::Filter { predicate }, vec![input])
    }

    pub fn project(input: Plan, exprs: Vec<(String, ScalarExpr)>) -> Plan {
        PlanNode::new(Op::Project { exprs }, vec![input])
    }

    /// Project that keeps the named columns as they are.
    pub fn project_columns<S: AsRef<str>>(input: Plan, columns: &[S]) -> Plan {
        let exprs = columns
            .iter()
            .map(|c| (c.as_ref().to_string(), ScalarExpr::Column(c.as_ref().to_string())))
            .collect();
        PlanNode::project(input, exprs)
    }

    pub fn join(left: Plan, right: Plan, keys: Vec<JoinKey>) -> Plan {
        PlanNode::new(Op::Join { keys }, vec![left, right])
    }

    pub fn union_all(branches: Vec<Plan>) -> Plan {
        PlanNode::new(Op::UnionAll, branches)
    }

    pub fn predict(
        input: Plan,
        model: impl Into<String>,
        payload: ModelPayload,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Plan {
        PlanNode::new(
            Op::Predict {
                model: model.into(),
                payload,
                inputs,
                outputs,
            },
            vec![input],
        )
    }

    pub fn udf(input: Plan, tag: impl Into<String>) -> Plan {
        PlanNode::new(Op::Udf { tag: tag.into() }, vec![input])
    }

    pub fn input(&self) -> &Plan {
        &self.inputs[0]
    }

    pub fn with_inputs(&self, inputs: Vec<Plan>) -> Plan {
        PlanNode::new(self.op.clone(), inputs)
    }

    /// Nodes in pre-order; index = node id.
    pub fn preorder(self: &Plan) -> Vec<Plan> {
        let mut out = Vec::new();
        fn walk(n: &Plan, out: &mut Vec<Plan>) {
            out.push(n.clone());
            for c in &n.inputs {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn node_count(self: &Plan) -> usize {
        1 + self.inputs.iter().map(PlanNode::node_count).sum::<usize>()
    }

    pub fn count_ops(self: &Plan, pred: impl Fn(&Op) -> bool + Copy) -> usize {
        usize::from(pred(&self.op)) + self.inputs.iter().map(|c| c.count_ops(pred)).sum::<usize>()
    }

    pub fn any_op(self: &Plan, pred: impl Fn(&Op) -> bool + Copy) -> bool {
        self.count_ops(pred) > 0
    }

    /// Bottom-up rebuild: children first, then `f` on the rebuilt node.
    pub fn transform_up(self: &Plan, f: &mut impl FnMut(Plan) -> Result<Plan>) -> Result<Plan> {
        let children = self
            .inputs
            .iter()
            .map(|c| c.transform_up(f))
            .collect::<Result<Vec<_>>>()?;
        let rebuilt = if children
            .iter()
            .zip(&self.inputs)
            .all(|(a, b)| Arc::ptr_eq(a, b))
        {
            self.clone()
        } else {
            self.with_inputs(children)
        };
        f(rebuilt)
    }

    pub fn tables(self: &Plan) -> Vec<String> {
        self.preorder()
            .iter()
            .filter_map(|n| match &n.op {
                Op::Scan { table } => Some(table.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Output schema of a node per operator rules.
pub fn output_schema(node: &PlanNode, catalog: &Catalog) -> Result<Schema> {
    let child = |i: usize| output_schema(&node.inputs[i], catalog);
    if !node.op.arity_ok(node.inputs.len()) {
        return Err(Error::Plan(format!(
            "{} expects {} inputs, has {}",
            node.op.name(),
            node.op.arity_text(),
            node.inputs.len()
        )));
    }
    match &node.op {
        Op::Scan { table } => Ok(catalog.table(table)?.schema.clone()),
        Op::Filter { .. } | Op::Udf { .. } => child(0),
        Op::Project { exprs } => {
            let input = child(0)?;
            let fields = exprs
                .iter()
                .map(|(name, e)| Ok(Field::new(name.clone(), e.data_type(&input)?, e.nullable(&input))))
                .collect::<Result<Vec<_>>>()?;
            Schema::new(fields)
        }
        Op::Join { .. } => Ok(Schema::concat(&child(0)?, &child(1)?).0),
        Op::UnionAll => {
            let first = child(0)?;
            let mut fields = first.fields().to_vec();
            for i in 1..node.inputs.len() {
                let other = child(i)?;
                for (f, g) in fields.iter_mut().zip(other.fields()) {
                    f.nullable |= g.nullable;
                }
            }
            Ok(Schema::new(fields)?)
        }
        Op::Predict { outputs, .. } | Op::TensorEval { outputs, .. } => {
            let mut schema = child(0)?;
            for o in outputs {
                schema.push(Field::new(o.clone(), DataType::Numeric, false))?;
            }
            Ok(schema)
        }
    }
}

/// Per-node right-side column names after join suffixing.
pub fn join_right_names(node: &PlanNode, catalog: &Catalog) -> Result<Vec<String>> {
    let left = output_schema(&node.inputs[0], catalog)?;
    let right = output_schema(&node.inputs[1], catalog)?;
    Ok(Schema::concat(&left, &right).1)
}

/// A violated plan invariant at a node (pre-order id).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}: {}", self.node, self.message)
    }
}

/// Checks every structural invariant; returns no diagnostics iff the plan
/// is well formed against the catalog.
pub fn validate_plan(plan: &Plan, catalog: &Catalog) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut next = 0;
    validate_node(plan, catalog, &mut next, &mut out);
    out
}

/// Validates a node and returns its schema when it could be derived.
fn validate_node(
    node: &PlanNode,
    catalog: &Catalog,
    next: &mut usize,
    out: &mut Vec<Diagnostic>,
) -> Option<Schema> {
    let id = *next;
    *next += 1;
    let children: Vec<Option<Schema>> = node
        .inputs
        .iter()
        .map(|c| validate_node(c, catalog, next, out))
        .collect();
    let mut diag = |message: String| out.push(Diagnostic { node: id, message });
    if !node.op.arity_ok(node.inputs.len()) {
        diag(format!(
            "arity: {} expects {} inputs, has {}",
            node.op.name(),
            node.op.arity_text(),
            node.inputs.len()
        ));
        return None;
    }
    if children.iter().any(Option::is_none) {
        return None;
    }
    let children: Vec<Schema> = children.into_iter().flatten().collect();
    match &node.op {
        Op::Scan { table } => match catalog.table(table) {
            Ok(t) => Some(t.schema.clone()),
            Err(e) => {
                diag(e.to_string());
                None
            }
        },
        Op::Filter { predicate } => {
            check_columns(predicate, &children[0], &mut diag);
            match predicate.data_type(&children[0]) {
                Ok(DataType::Boolean) => {}
                Ok(t) => diag(format!("filter predicate is {t}, expected boolean")),
                Err(e) => diag(e.to_string()),
            }
            Some(children[0].clone())
        }
        Op::Udf { .. } => Some(children[0].clone()),
        Op::Project { exprs } => {
            let mut fields = Vec::new();
            for (name, e) in exprs {
                check_columns(e, &children[0], &mut diag);
                match e.data_type(&children[0]) {
                    Ok(t) => fields.push(Field::new(name.clone(), t, e.nullable(&children[0]))),
                    Err(err) => diag(err.to_string()),
                }
            }
            if fields.len() != exprs.len() {
                return None;
            }
            match Schema::new(fields) {
                Ok(s) => Some(s),
                Err(e) => {
                    diag(e.to_string());
                    None
                }
            }
        }
        Op::Join { keys } => {
            if keys.is_empty() {
                diag("join without keys".into());
            }
            for k in keys {
                let l = children[0].field(&k.left);
                let r = children[1].field(&k.right);
                match (l, r) {
                    (Some(l), Some(r)) if l.data_type != r.data_type => diag(format!(
                        "join key types differ: {} is {}, {} is {}",
                        k.left, l.data_type, k.right, r.data_type
                    )),
                    (None, _) => diag(format!("unresolved column `{}` in left join input", k.left)),
                    (_, None) => diag(format!("unresolved column `{}` in right join input", k.right)),
                    _ => {}
                }
            }
            Some(Schema::concat(&children[0], &children[1]).0)
        }
        Op::UnionAll => {
            let first = &children[0];
            let mut fields = first.fields().to_vec();
            for (i, other) in children.iter().enumerate().skip(1) {
                let same = other.len() == first.len()
                    && other
                        .fields()
                        .iter()
                        .zip(first.fields())
                        .all(|(a, b)| a.name == b.name && a.data_type == b.data_type);
                if !same {
                    diag(format!(
                        "union input {i} has schema {other}, expected {first}"
                    ));
                    return None;
                }
                for (f, g) in fields.iter_mut().zip(other.fields()) {
                    f.nullable |= g.nullable;
                }
            }
            Schema::new(fields).ok()
        }
        Op::Predict {
            model,
            payload,
            inputs,
            outputs,
        } => {
            if !catalog.has_model(model) {
                diag(format!("unknown model `{model}`"));
            }
            check_model_binding(payload.inputs(), payload.output_width(), inputs, outputs, &children[0], &mut diag);
            append_outputs(&children[0], outputs, &mut diag)
        }
        Op::TensorEval {
            model,
            program,
            inputs,
            outputs,
        } => {
            if !catalog.has_model(model) {
                diag(format!("unknown model `{model}`"));
            }
            check_model_binding(
                program.source.inputs(),
                program.source.output_width(),
                inputs,
                outputs,
                &children[0],
                &mut diag,
            );
            append_outputs(&children[0], outputs, &mut diag)
        }
    }
}

fn check_columns(e: &ScalarExpr, schema: &Schema, diag: &mut impl FnMut(String)) {
    for c in e.columns() {
        if !schema.contains(&c) {
            diag(format!("unresolved column `{c}`"));
        }
    }
}

fn check_model_binding(
    expected: &[PipelineInput],
    width: usize,
    inputs: &[String],
    outputs: &[String],
    schema: &Schema,
    diag: &mut impl FnMut(String),
) {
    if expected.len() != inputs.len() {
        diag(format!(
            "model takes {} inputs, {} bound",
            expected.len(),
            inputs.len()
        ));
    }
    for (slot, column) in expected.iter().zip(inputs) {
        match schema.field(column) {
            None => diag(format!("unresolved column `{column}`")),
            Some(f) if f.data_type != slot.data_type => diag(format!(
                "column `{column}` is {}, model input `{}` expects {}",
                f.data_type, slot.name, slot.data_type
            )),
            _ => {}
        }
    }
    if outputs.len() != width {
        diag(format!(
            "model produces {width} outputs, {} named",
            outputs.len()
        ));
    }
}

fn append_outputs(input: &Schema, outputs: &[String], diag: &mut impl FnMut(String)) -> Option<Schema> {
    let mut schema = input.clone();
    for o in outputs {
        if let Err(e) = schema.push(Field::new(o.clone(), DataType::Numeric, false)) {
            diag(e.to_string());
            return None;
        }
    }
    Some(schema)
}

/// Deterministic indented listing: `#id Op(args) [schema]`.
pub fn explain(plan: &Plan, catalog: &Catalog) -> String {
    let mut out = String::new();
    let mut next = 0;
    fn walk(n: &PlanNode, catalog: &Catalog, depth: usize, next: &mut usize, out: &mut String) {
        let id = *next;
        *next += 1;
        let schema = output_schema(n, catalog)
            .map(|s| s.to_string())
            .unwrap_or_else(|_| "[?]".into());
        out.push_str(&format!("{}#{id} {} {schema}\n", "  ".repeat(depth), n.op));
        for c in &n.inputs {
            walk(c, catalog, depth + 1, next, out);
        }
    }
    walk(plan, catalog, 0, &mut next, &mut out);
    out
}

/// Model names referenced by Predict/TensorEval nodes.
pub fn referenced_models(plan: &Plan) -> BTreeMap<String, CatalogModel> {
    let mut out = BTreeMap::new();
    for n in plan.preorder() {
        match &n.op {
            Op::Predict { model, payload, .. } => {
                let m = match payload {
                    ModelPayload::Pipeline(p) => CatalogModel::Pipeline(p.clone()),
                    ModelPayload::Dispatch(d) => CatalogModel::Dispatch(d.clone()),
                };
                out.insert(model.clone(), m);
            }
            Op::TensorEval { model, program, .. } => {
                out.insert(model.clone(), CatalogModel::Tensor(program.clone()));
            }
            _ => {}
        }
    }
    out
}
