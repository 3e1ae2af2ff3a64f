//! Renders plans back to SQL in the frontend grammar.
//!
//! Each UNION ALL branch is flattened into one SELECT block whose column
//! references are qualified by their base table. Model nodes become
//! `PREDICT` calls over the (possibly derived) catalog model they carry,
//! inlined trees stay CASE expressions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frontend::normalize_conjunct;
use crate::ir::{join_right_names, output_schema, Catalog, Literal, Op, Plan, ScalarExpr};

/// One SELECT block in flattened form: every expression is over qualified
/// base columns `table.column`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockShape {
    pub tables: Vec<String>,
    pub join_keys: BTreeSet<(String, String)>,
    /// Normalized WHERE conjuncts, sorted by their SQL text.
    pub conjuncts: Vec<ScalarExpr>,
    pub items: Vec<(String, ScalarExpr)>,
}

struct Flat {
    tables: Vec<String>,
    keys: Vec<(String, String)>,
    conjuncts: Vec<ScalarExpr>,
    columns: Vec<(String, ScalarExpr)>,
}

impl Flat {
    fn env(&self) -> BTreeMap<String, ScalarExpr> {
        self.columns.iter().cloned().collect()
    }
}

fn flatten(node: &Plan, catalog: &Catalog) -> Result<Flat> {
    match &node.op {
        Op::Scan { table } => {
            let schema = catalog.table(table)?.schema.clone();
            Ok(Flat {
                tables: vec![table.clone()],
                keys: Vec::new(),
                conjuncts: Vec::new(),
                columns: schema
                    .names()
                    .map(|c| (c.to_string(), ScalarExpr::Column(format!("{table}.{c}"))))
                    .collect(),
            })
        }
        Op::Filter { predicate } => {
            let mut f = flatten(node.input(), catalog)?;
            let env = f.env();
            for c in predicate.clone().into_conjuncts() {
                let c = c.substitute(&env);
                let c = match c.const_truth() {
                    Some(true) => continue,
                    Some(false) => ScalarExpr::Literal(Literal::Bool(false)),
                    None => c,
                };
                let c = normalize_conjunct(c)
                    .map_err(|e| Error::Codegen(format!("filter `{predicate}` has no SQL form: {e}")))?;
                if !f.conjuncts.contains(&c) {
                    f.conjuncts.push(c);
                }
            }
            Ok(f)
        }
        Op::Project { exprs } => {
            let mut f = flatten(node.input(), catalog)?;
            let env = f.env();
            f.columns = exprs.iter().map(|(n, e)| (n.clone(), e.substitute(&env))).collect();
            Ok(f)
        }
        Op::Join { keys } => {
            let mut l = flatten(&node.inputs[0], catalog)?;
            let r = flatten(&node.inputs[1], catalog)?;
            let (lenv, renv) = (l.env(), r.env());
            for k in keys {
                let (ScalarExpr::Column(a), ScalarExpr::Column(b)) = (&lenv[&k.left], &renv[&k.right]) else {
                    return Err(Error::Codegen(format!(
                        "join key {} = {} is computed; SQL joins compare columns",
                        k.left, k.right
                    )));
                };
                l.keys.push((a.clone(), b.clone()));
            }
            let right_names = join_right_names(node, catalog)?;
            l.tables.extend(r.tables);
            l.keys.extend(r.keys);
            l.conjuncts.extend(r.conjuncts);
            l.columns
                .extend(right_names.into_iter().zip(r.columns).map(|(n, (_, e))| (n, e)));
            Ok(l)
        }
        Op::Predict {
            model, inputs, outputs, ..
        }
        | Op::TensorEval {
            model, inputs, outputs, ..
        } => {
            let mut f = flatten(node.input(), catalog)?;
            let env = f.env();
            let args = inputs
                .iter()
                .map(|i| match &env[i] {
                    ScalarExpr::Column(c) => Ok(c.clone()),
                    other => Err(Error::Codegen(format!(
                        "`{model}` reads `{i}` = {other}; PREDICT takes columns"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            if outputs.len() != 1 {
                return Err(Error::Codegen(format!("`{model}` has {} outputs", outputs.len())));
            }
            f.columns.push((
                outputs[0].clone(),
                ScalarExpr::ModelCall {
                    model: model.clone(),
                    args,
                },
            ));
            Ok(f)
        }
        Op::UnionAll => Err(Error::Codegen("UNION ALL below the top of the query".into())),
        Op::Udf { tag } => Err(Error::Codegen(format!("Udf `{tag}` has no SQL form"))),
    }
}

fn branches(plan: &Plan) -> Vec<&Plan> {
    match plan.op {
        Op::UnionAll => plan.inputs.iter().flat_map(branches).collect(),
        _ => vec![plan],
    }
}

/// The flattened blocks of a plan; two plans with equal normal forms
/// compute the same bag.
pub fn normal_form(plan: &Plan, catalog: &Catalog) -> Result<Vec<BlockShape>> {
    branches(plan)
        .into_iter()
        .map(|b| {
            let f = flatten(b, catalog)?;
            let mut conjuncts = f.conjuncts;
            conjuncts.sort_by_key(|c| c.to_string());
            conjuncts.dedup();
            Ok(BlockShape {
                tables: f.tables,
                join_keys: f
                    .keys
                    .into_iter()
                    .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
                    .collect(),
                conjuncts,
                items: f.columns,
            })
        })
        .collect()
}

fn table_of(column: &str) -> &str {
    column.split_once('.').map_or(column, |(t, _)| t)
}

fn render_block(b: &BlockShape, out: &mut String) -> Result<()> {
    out.push_str("SELECT ");
    for (i, (name, e)) in b.items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{e} AS {name}");
    }
    let _ = write!(out, "\nFROM {}", b.tables[0]);
    let mut placed: BTreeSet<&str> = [b.tables[0].as_str()].into();
    let mut used = BTreeSet::new();
    for t in &b.tables[1..] {
        let on: Vec<&(String, String)> = b
            .join_keys
            .iter()
            .filter(|k| !used.contains(k))
            .filter(|(x, y)| {
                let (tx, ty) = (table_of(x), table_of(y));
                (tx == t && placed.contains(ty)) || (ty == t && placed.contains(tx))
            })
            .collect();
        if on.is_empty() {
            return Err(Error::Codegen(format!("`{t}` is joined without a key")));
        }
        let cond: Vec<String> = on.iter().map(|(x, y)| format!("{x} = {y}")).collect();
        let _ = write!(out, "\nJOIN {t} ON {}", cond.join(" AND "));
        used.extend(on);
        placed.insert(t);
    }
    if used.len() != b.join_keys.len() {
        return Err(Error::Codegen("join key between tables joined elsewhere".into()));
    }
    if !b.conjuncts.is_empty() {
        let conds: Vec<String> = b
            .conjuncts
            .iter()
            .map(|c| match c {
                ScalarExpr::Or(..) => format!("({c})"),
                _ => c.to_string(),
            })
            .collect();
        let _ = write!(out, "\nWHERE {}", conds.join(" AND "));
    }
    Ok(())
}

/// SQL text for the plan. Reparsing it yields a plan with the same
/// [`normal_form`].
pub fn emit_sql(plan: &Plan, catalog: &Catalog) -> Result<String> {
    output_schema(plan, catalog)?;
    let mut out = String::new();
    for (i, b) in normal_form(plan, catalog)?.iter().enumerate() {
        if i > 0 {
            out.push_str("\nUNION ALL\n");
        }
        render_block(b, &mut out)?;
    }
    out.push('\n');
    Ok(out)
}

/// Emits, reparses and compares normal forms.
pub fn round_trips(plan: &Plan, catalog: &Catalog) -> Result<bool> {
    let sql = emit_sql(plan, catalog)?;
    let back = crate::frontend::parse_sql(&sql, catalog)?;
    Ok(normal_form(&back, catalog)? == normal_form(plan, catalog)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DataType, Field, PlanNode, Schema, TableMeta};

    fn catalog() -> Catalog {
        let mut c = Catalog::default();
        let schema = Schema::new(vec![
            Field::new("a", DataType::Numeric, false),
            Field::new("bp", DataType::Numeric, false),
        ])
        .unwrap();
        c.add_table(TableMeta::new("t", schema)).unwrap();
        c
    }

    #[test]
    fn projection_over_scan() {
        let c = catalog();
        let plan = PlanNode::project_columns(PlanNode::scan("t"), &["a"]);
        assert_eq!(emit_sql(&plan, &c).unwrap(), "SELECT t.a AS a\nFROM t\n");
        assert!(round_trips(&plan, &c).unwrap());
    }

    #[test]
    fn udf_is_rejected() {
        let c = catalog();
        let plan = PlanNode::udf(PlanNode::scan("t"), "f");
        assert!(matches!(emit_sql(&plan, &c), Err(Error::Codegen(m)) if m.contains("Udf")));
    }
}
