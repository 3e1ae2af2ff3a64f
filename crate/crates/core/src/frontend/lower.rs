//! Name resolution and lowering of parsed queries into plans.

use std::collections::BTreeMap;

use super::parser::{Query, Select};
use crate::error::{Error, Result};
use crate::ir::{
    output_schema, validate_plan, Catalog, CatalogModel, CmpOp, JoinKey, Literal, ModelPayload, Op, Plan,
    PlanNode, ScalarExpr, Schema,
};

/// A column visible in a SELECT block: where it came from and its name in
/// the joined relation.
#[derive(Clone, Debug)]
struct ScopeColumn {
    table: String,
    column: String,
    output: String,
}

struct Scope {
    columns: Vec<ScopeColumn>,
}

impl Scope {
    fn resolve(&self, name: &str) -> Result<String> {
        if let Some((t, c)) = name.split_once('.') {
            if !self.columns.iter().any(|s| s.table == t) {
                return Err(Error::UnknownColumn(name.to_string()));
            }
            return self
                .columns
                .iter()
                .find(|s| s.table == t && s.column == c)
                .map(|s| s.output.clone())
                .ok_or_else(|| Error::UnknownColumn(name.to_string()));
        }
        let hits: Vec<&ScopeColumn> = self.columns.iter().filter(|s| s.column == name).collect();
        match hits.len() {
            1 => Ok(hits[0].output.clone()),
            0 => self
                .columns
                .iter()
                .find(|s| s.output == name)
                .map(|s| s.output.clone())
                .ok_or_else(|| Error::UnknownColumn(name.to_string())),
            _ => Err(Error::Binding(format!(
                "column `{name}` is ambiguous; qualify it with one of {}",
                hits.iter().map(|h| h.table.as_str()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    fn resolve_expr(&self, e: &ScalarExpr) -> Result<ScalarExpr> {
        let mut failure = None;
        let out = e.transform(&mut |x| match x {
            ScalarExpr::Column(c) => match self.resolve(&c) {
                Ok(r) => ScalarExpr::Column(r),
                Err(err) => {
                    failure.get_or_insert(err);
                    ScalarExpr::Column(c)
                }
            },
            ScalarExpr::ModelCall { model, args } => {
                let args = args
                    .iter()
                    .map(|a| match self.resolve(a) {
                        Ok(r) => r,
                        Err(err) => {
                            failure.get_or_insert(err);
                            a.clone()
                        }
                    })
                    .collect();
                ScalarExpr::ModelCall { model, args }
            }
            other => other,
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// Plans a parsed query against the catalog.
pub fn plan_query(query: &Query, catalog: &Catalog) -> Result<Plan> {
    let branches = query
        .blocks
        .iter()
        .map(|b| plan_select(b, catalog))
        .collect::<Result<Vec<_>>>()?;
    let plan = if branches.len() == 1 {
        branches.into_iter().next().unwrap()
    } else {
        PlanNode::union_all(branches)
    };
    bind(&plan, catalog)?;
    Ok(plan)
}

fn scan_scope(table: &str, catalog: &Catalog) -> Result<(Plan, Schema, Vec<ScopeColumn>)> {
    let meta = catalog.table(table)?;
    let cols = meta
        .schema
        .names()
        .map(|c| ScopeColumn {
            table: table.to_string(),
            column: c.to_string(),
            output: c.to_string(),
        })
        .collect();
    Ok((PlanNode::scan(table), meta.schema.clone(), cols))
}

fn plan_select(select: &Select, catalog: &Catalog) -> Result<Plan> {
    let (mut plan, mut schema, columns) = scan_scope(&select.from, catalog)?;
    let mut scope = Scope { columns };
    for join in &select.joins {
        let (right, right_schema, right_cols) = scan_scope(&join.table, catalog)?;
        if scope.columns.iter().any(|c| c.table == join.table) {
            return Err(Error::Unsupported(format!("self join of `{}`", join.table)));
        }
        let right_scope = Scope { columns: right_cols };
        let mut keys = Vec::new();
        for (a, b) in &join.on {
            let key = match (scope.resolve(a), right_scope.resolve(b)) {
                (Ok(l), Ok(r)) => JoinKey::new(l, r),
                _ => match (scope.resolve(b), right_scope.resolve(a)) {
                    (Ok(l), Ok(r)) => JoinKey::new(l, r),
                    _ => {
                        return Err(Error::Binding(format!(
                            "join condition {a} = {b} must compare a column of `{}` with an earlier table",
                            join.table
                        )))
                    }
                },
            };
            keys.push(key);
        }
        let (joined, right_names) = Schema::concat(&schema, &right_schema);
        for (c, out) in right_scope.columns.into_iter().zip(right_names) {
            scope.columns.push(ScopeColumn { output: out, ..c });
        }
        plan = PlanNode::join(plan, right, keys);
        schema = joined;
    }
    let base_columns: Vec<String> = scope.columns.iter().map(|c| c.output.clone()).collect();

    let items: Vec<(ScalarExpr, Option<String>)> = match &select.items {
        Some(items) => items
            .iter()
            .map(|i| Ok((scope.resolve_expr(&i.expr)?, i.alias.clone())))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let conjuncts: Vec<ScalarExpr> = match &select.selection {
        Some(w) => scope
            .resolve_expr(w)?
            .into_conjuncts()
            .into_iter()
            .map(normalize_conjunct)
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };

    // One Predict per distinct call, named by the select alias when the
    // call is a whole select item.
    let mut calls: Vec<(String, Vec<String>)> = Vec::new();
    let mut collect = |e: &ScalarExpr| {
        e.visit(&mut |x| {
            if let ScalarExpr::ModelCall { model, args } = x {
                let key = (model.clone(), args.clone());
                if !calls.contains(&key) {
                    calls.push(key);
                }
            }
        })
    };
    items.iter().for_each(|(e, _)| collect(e));
    conjuncts.iter().for_each(&mut collect);
    let mut names: BTreeMap<(String, Vec<String>), String> = BTreeMap::new();
    let mut taken: Vec<String> = base_columns.clone();
    for (e, alias) in &items {
        if let (ScalarExpr::ModelCall { model, args }, Some(a)) = (e, alias) {
            let key = (model.clone(), args.clone());
            if !names.contains_key(&key) && !taken.contains(a) {
                names.insert(key, a.clone());
                taken.push(a.clone());
            }
        }
    }
    for (model, args) in &calls {
        let key = (model.clone(), args.clone());
        if names.contains_key(&key) {
            continue;
        }
        let base = format!("predict_{model}");
        let mut name = base.clone();
        let mut n = 2;
        while taken.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        taken.push(name.clone());
        names.insert(key, name);
    }
    let replace = |e: &ScalarExpr| {
        e.transform(&mut |x| match x {
            ScalarExpr::ModelCall { model, args } => ScalarExpr::Column(names[&(model, args)].clone()),
            other => other,
        })
    };

    // Data conditions filter rows before any model sees them; conditions on
    // predictions apply after scoring.
    let (model_conds, data_conds): (Vec<_>, Vec<_>) =
        conjuncts.iter().partition(|c| c.contains_model_call());
    plan = filter_checked(plan, data_conds.into_iter().cloned().collect(), catalog)?;
    for (model, args) in &calls {
        let output = names[&(model.clone(), args.clone())].clone();
        plan = predict_node(plan, model, args, output, catalog)?;
    }
    plan = filter_checked(plan, model_conds.into_iter().map(replace).collect(), catalog)?;

    match &select.items {
        None => {
            if !calls.is_empty() {
                plan = PlanNode::project_columns(plan, &base_columns);
            }
        }
        Some(_) => {
            let mut exprs = Vec::with_capacity(items.len());
            for (i, (e, alias)) in items.iter().enumerate() {
                let e = replace(e);
                let name = match (alias, &e) {
                    (Some(a), _) => a.clone(),
                    (None, ScalarExpr::Column(c)) => scope
                        .columns
                        .iter()
                        .find(|s| &s.output == c)
                        .map_or_else(|| c.clone(), |s| s.column.clone()),
                    (None, _) => format!("col{}", i + 1),
                };
                if exprs.iter().any(|(n, _): &(String, ScalarExpr)| n == &name) {
                    return Err(Error::Binding(format!("duplicate output column `{name}`; add an alias")));
                }
                exprs.push((name, e));
            }
            plan = PlanNode::project(plan, exprs);
        }
    }
    Ok(plan)
}

fn filter_checked(plan: Plan, conjuncts: Vec<ScalarExpr>, catalog: &Catalog) -> Result<Plan> {
    if conjuncts.is_empty() {
        return Ok(plan);
    }
    let input = output_schema(&plan, catalog)?;
    for c in &conjuncts {
        match c.data_type(&input)? {
            crate::ir::DataType::Boolean => {}
            t => return Err(Error::Type(format!("WHERE condition `{c}` is {t}, expected boolean"))),
        }
    }
    Ok(PlanNode::filter(plan, ScalarExpr::conjunction(conjuncts)))
}

/// WHERE conjuncts must be `operand op literal`, `col IN (...)`, a boolean
/// literal, or a disjunction over one column (equalities become IN).
pub(crate) fn normalize_conjunct(c: ScalarExpr) -> Result<ScalarExpr> {
    match c {
        ScalarExpr::Literal(Literal::Bool(_)) => Ok(c),
        ScalarExpr::Compare { op, left, right } => match (*left, *right) {
            (l, ScalarExpr::Literal(v)) if !matches!(l, ScalarExpr::Literal(_)) => {
                Ok(ScalarExpr::compare(op, l, ScalarExpr::Literal(v)))
            }
            (ScalarExpr::Literal(v), r) if !matches!(r, ScalarExpr::Literal(_)) => {
                Ok(ScalarExpr::compare(op.flip(), r, ScalarExpr::Literal(v)))
            }
            _ => Err(Error::Unsupported(
                "WHERE comparison must have a literal on one side".into(),
            )),
        },
        ScalarExpr::InList { ref expr, .. } if matches!(expr.as_ref(), ScalarExpr::Column(_)) => Ok(c),
        ScalarExpr::Or(..) => {
            let mut disjuncts = Vec::new();
            flatten_or(c, &mut disjuncts);
            let disjuncts = disjuncts
                .into_iter()
                .map(normalize_conjunct)
                .collect::<Result<Vec<_>>>()?;
            let mut column = None;
            for d in &disjuncts {
                let cols = d.columns();
                if cols.len() != 1 || d.contains_model_call() {
                    return Err(Error::Unsupported("disjunction across columns".into()));
                }
                let c = cols.into_iter().next().unwrap();
                if column.get_or_insert(c.clone()) != &c {
                    return Err(Error::Unsupported("disjunction across columns".into()));
                }
            }
            let column = column.expect("at least two disjuncts");
            let mut list: Vec<Literal> = Vec::new();
            let all_eq = disjuncts.iter().all(|d| match d {
                ScalarExpr::Compare {
                    op: CmpOp::Eq,
                    left,
                    right,
                } => match (left.as_ref(), right.as_ref()) {
                    (ScalarExpr::Column(_), ScalarExpr::Literal(v)) => {
                        if !list.contains(v) {
                            list.push(v.clone());
                        }
                        true
                    }
                    _ => false,
                },
                ScalarExpr::InList { list: l, .. } => {
                    for v in l {
                        if !list.contains(v) {
                            list.push(v.clone());
                        }
                    }
                    true
                }
                _ => false,
            });
            if all_eq {
                return Ok(ScalarExpr::InList {
                    expr: Box::new(ScalarExpr::Column(column)),
                    list,
                });
            }
            let mut it = disjuncts.into_iter();
            let first = it.next().unwrap();
            Ok(it.fold(first, |a, b| ScalarExpr::Or(Box::new(a), Box::new(b))))
        }
        ScalarExpr::Not(_) => Err(Error::Unsupported("NOT in WHERE".into())),
        other => Err(Error::Unsupported(format!("WHERE condition `{other}`"))),
    }
}

fn flatten_or(e: ScalarExpr, out: &mut Vec<ScalarExpr>) {
    match e {
        ScalarExpr::Or(a, b) => {
            flatten_or(*a, out);
            flatten_or(*b, out);
        }
        other => out.push(other),
    }
}

fn predict_node(input: Plan, model: &str, args: &[String], output: String, catalog: &Catalog) -> Result<Plan> {
    let m = catalog.model(model)?;
    if m.output_width() != 1 {
        return Err(Error::Unsupported(format!(
            "PREDICT over `{model}`, which produces {} scores; SQL supports single-valued models",
            m.output_width()
        )));
    }
    let op = match m {
        CatalogModel::Pipeline(p) => Op::Predict {
            model: model.to_string(),
            payload: ModelPayload::Pipeline(p.clone()),
            inputs: args.to_vec(),
            outputs: vec![output],
        },
        CatalogModel::Dispatch(d) => Op::Predict {
            model: model.to_string(),
            payload: ModelPayload::Dispatch(d.clone()),
            inputs: args.to_vec(),
            outputs: vec![output],
        },
        CatalogModel::Tensor(t) => Op::TensorEval {
            model: model.to_string(),
            program: t.clone(),
            inputs: args.to_vec(),
            outputs: vec![output],
        },
    };
    Ok(PlanNode::new(op, vec![input]))
}

/// Checks every model node's bindings against its pipeline's declared
/// inputs, then validates the whole plan.
pub fn bind(plan: &Plan, catalog: &Catalog) -> Result<()> {
    for node in plan.preorder() {
        let (model, expected, inputs) = match &node.op {
            Op::Predict {
                model,
                payload,
                inputs,
                ..
            } => (model, payload.inputs(), inputs),
            Op::TensorEval {
                model,
                program,
                inputs,
                ..
            } => (model, program.source.inputs(), inputs),
            _ => continue,
        };
        catalog.model(model)?;
        if expected.len() != inputs.len() {
            return Err(Error::Binding(format!(
                "PREDICT({model}) passes {} columns, the pipeline expects {}",
                inputs.len(),
                expected.len()
            )));
        }
        let schema = output_schema(node.input(), catalog)?;
        for (slot, column) in expected.iter().zip(inputs) {
            let field = schema
                .field(column)
                .ok_or_else(|| Error::UnknownColumn(column.clone()))?;
            if field.data_type != slot.data_type {
                return Err(Error::Type(format!(
                    "column `{column}` is {}, but input `{}` of `{model}` expects {}",
                    field.data_type, slot.name, slot.data_type
                )));
            }
        }
    }
    let diagnostics = validate_plan(plan, catalog);
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(Error::Plan(
            diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        ))
    }
}
