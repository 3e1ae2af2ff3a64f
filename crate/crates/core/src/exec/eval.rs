//! Row-wise interpretation of scalar expressions with three-valued logic.

use std::cmp::Ordering;
use std::sync::Arc;

use super::table::{Column, ColumnBuilder, ColumnData, Table};
use crate::error::{Error, Result};
use crate::ir::{ArithOp, CmpOp, DataType, Literal, ScalarExpr};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Val<'a> {
    Num(f64),
    Bool(bool),
    Str(&'a str),
}

impl<'a> Val<'a> {
    fn from_literal(l: &'a Literal) -> Val<'a> {
        match l {
            Literal::Num(v) => Val::Num(*v),
            Literal::Bool(b) => Val::Bool(*b),
            Literal::Str(s) => Val::Str(s),
        }
    }

    fn compare(self, other: Val<'_>) -> Option<Ordering> {
        match (self, other) {
            (Val::Num(a), Val::Num(b)) => a.partial_cmp(&b),
            (Val::Bool(a), Val::Bool(b)) => Some(a.cmp(&b)),
            (Val::Str(a), Val::Str(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

/// An expression with column references resolved to positions.
#[derive(Clone, Debug)]
enum Compiled<'a> {
    Column(&'a Column),
    Literal(Val<'a>),
    Compare(CmpOp, Box<Compiled<'a>>, Box<Compiled<'a>>),
    And(Box<Compiled<'a>>, Box<Compiled<'a>>),
    Or(Box<Compiled<'a>>, Box<Compiled<'a>>),
    Not(Box<Compiled<'a>>),
    InList(Box<Compiled<'a>>, Vec<Val<'a>>),
    Case(Vec<(Compiled<'a>, Compiled<'a>)>, Box<Compiled<'a>>),
    Arith(ArithOp, Box<Compiled<'a>>, Box<Compiled<'a>>),
}

pub struct RowExpr<'a> {
    root: Compiled<'a>,
}

impl<'a> RowExpr<'a> {
    pub fn compile(expr: &'a ScalarExpr, table: &'a Table) -> Result<RowExpr<'a>> {
        Ok(RowExpr {
            root: compile(expr, table)?,
        })
    }

    #[inline]
    pub fn eval(&self, row: usize) -> Option<Val<'a>> {
        eval(&self.root, row)
    }

    /// Kleene truth value; NULL is `None`.
    #[inline]
    pub fn truth(&self, row: usize) -> Option<bool> {
        match self.eval(row) {
            Some(Val::Bool(b)) => Some(b),
            _ => None,
        }
    }
}

fn compile<'a>(e: &'a ScalarExpr, table: &'a Table) -> Result<Compiled<'a>> {
    let b = |x: &'a ScalarExpr| compile(x, table).map(Box::new);
    Ok(match e {
        ScalarExpr::Column(c) => Compiled::Column(
            table
                .column_by_name(c)
                .ok_or_else(|| Error::UnknownColumn(c.clone()))?,
        ),
        ScalarExpr::Literal(l) => Compiled::Literal(Val::from_literal(l)),
        ScalarExpr::Compare { op, left, right } => Compiled::Compare(*op, b(left)?, b(right)?),
        ScalarExpr::And(x, y) => Compiled::And(b(x)?, b(y)?),
        ScalarExpr::Or(x, y) => Compiled::Or(b(x)?, b(y)?),
        ScalarExpr::Not(x) => Compiled::Not(b(x)?),
        ScalarExpr::InList { expr, list } => {
            Compiled::InList(b(expr)?, list.iter().map(Val::from_literal).collect())
        }
        ScalarExpr::Case { branches, otherwise } => Compiled::Case(
            branches
                .iter()
                .map(|(c, v)| Ok((compile(c, table)?, compile(v, table)?)))
                .collect::<Result<_>>()?,
            b(otherwise)?,
        ),
        ScalarExpr::Arith { op, left, right } => Compiled::Arith(*op, b(left)?, b(right)?),
        ScalarExpr::ModelCall { model, .. } => {
            return Err(Error::Plan(format!("unplanned PREDICT({model}) in expression")))
        }
    })
}

fn column_value(c: &Column, row: usize) -> Option<Val<'_>> {
    if c.is_null(row) {
        return None;
    }
    Some(match c.data() {
        ColumnData::Numeric(v) => Val::Num(v[row]),
        ColumnData::Boolean(v) => Val::Bool(v[row]),
        ColumnData::Categorical { codes, dict } => Val::Str(&dict[codes[row] as usize]),
    })
}

fn eval<'a>(e: &Compiled<'a>, row: usize) -> Option<Val<'a>> {
    match e {
        Compiled::Column(c) => column_value(c, row),
        Compiled::Literal(v) => Some(*v),
        Compiled::Compare(op, l, r) => {
            let (l, r) = (eval(l, row)?, eval(r, row)?);
            l.compare(r).map(|o| Val::Bool(op.holds(o)))
        }
        Compiled::And(l, r) => {
            let a = truth(l, row);
            if a == Some(false) {
                return Some(Val::Bool(false));
            }
            match (a, truth(r, row)) {
                (_, Some(false)) => Some(Val::Bool(false)),
                (Some(true), Some(true)) => Some(Val::Bool(true)),
                _ => None,
            }
        }
        Compiled::Or(l, r) => {
            let a = truth(l, row);
            if a == Some(true) {
                return Some(Val::Bool(true));
            }
            match (a, truth(r, row)) {
                (_, Some(true)) => Some(Val::Bool(true)),
                (Some(false), Some(false)) => Some(Val::Bool(false)),
                _ => None,
            }
        }
        Compiled::Not(x) => truth(x, row).map(|b| Val::Bool(!b)),
        Compiled::InList(x, list) => {
            let v = eval(x, row)?;
            Some(Val::Bool(list.iter().any(|l| v.compare(*l) == Some(Ordering::Equal))))
        }
        Compiled::Case(branches, otherwise) => {
            for (c, v) in branches {
                if truth(c, row) == Some(true) {
                    return eval(v, row);
                }
            }
            eval(otherwise, row)
        }
        Compiled::Arith(op, l, r) => match (eval(l, row)?, eval(r, row)?) {
            (Val::Num(a), Val::Num(b)) => Some(Val::Num(op.apply(a, b))),
            _ => None,
        },
    }
}

#[inline]
fn truth(e: &Compiled<'_>, row: usize) -> Option<bool> {
    match eval(e, row) {
        Some(Val::Bool(b)) => Some(b),
        _ => None,
    }
}

/// Rows where the predicate is TRUE.
pub fn filter_rows(table: &Table, predicate: &ScalarExpr) -> Result<Vec<usize>> {
    if predicate.is_true_literal() {
        return Ok((0..table.row_count()).collect());
    }
    let p = RowExpr::compile(predicate, table)?;
    Ok((0..table.row_count()).filter(|r| p.truth(*r) == Some(true)).collect())
}

/// Evaluates an expression into a new column of the given type.
pub fn eval_column(table: &Table, expr: &ScalarExpr, data_type: DataType) -> Result<Arc<Column>> {
    if let ScalarExpr::Column(c) = expr {
        return table
            .column_by_name(c)
            .cloned()
            .ok_or_else(|| Error::UnknownColumn(c.clone()));
    }
    let e = RowExpr::compile(expr, table)?;
    let rows = table.row_count();
    if data_type == DataType::Numeric {
        let mut values = Vec::with_capacity(rows);
        let mut validity = Vec::with_capacity(rows);
        for r in 0..rows {
            match e.eval(r) {
                Some(Val::Num(v)) => {
                    values.push(v);
                    validity.push(true);
                }
                _ => {
                    values.push(0.0);
                    validity.push(false);
                }
            }
        }
        return Ok(Arc::new(Column::new(ColumnData::Numeric(values), Some(validity))?));
    }
    let mut b = ColumnBuilder::new(data_type);
    for r in 0..rows {
        match e.eval(r) {
            None => b.push_null(),
            Some(Val::Bool(v)) if data_type == DataType::Boolean => b.push_bool(v),
            Some(Val::Str(s)) if data_type == DataType::Categorical => b.push_str(Some(s)),
            Some(other) => {
                return Err(Error::Type(format!(
                    "expression `{expr}` produced {other:?} for a {data_type} column"
                )))
            }
        }
    }
    Ok(Arc::new(b.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::table::read_csv;
    use crate::ir::{col, num, Field, Schema};

    fn table() -> Table {
        let schema = Schema::new(vec![
            Field::new("x", DataType::Numeric, true),
            Field::new("k", DataType::Categorical, true),
        ])
        .unwrap();
        read_csv("x,k\n1,a\n,b\n3,\n".as_bytes(), &schema).unwrap()
    }

    #[test]
    fn null_comparisons_are_unknown() {
        let t = table();
        let rows = filter_rows(&t, &col("x").lt_eq(num(2.0))).unwrap();
        assert_eq!(rows, vec![0]);
        let not = ScalarExpr::Not(Box::new(col("x").lt_eq(num(2.0))));
        assert_eq!(filter_rows(&t, &not).unwrap(), vec![2]);
    }

    #[test]
    fn kleene_or_short_circuits_null() {
        let t = table();
        let p = ScalarExpr::Or(
            Box::new(col("x").gt(num(0.0))),
            Box::new(col("k").eq(crate::ir::string("b"))),
        );
        assert_eq!(filter_rows(&t, &p).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn case_picks_first_true_branch() {
        let t = table();
        let e = ScalarExpr::Case {
            branches: vec![(col("x").lt_eq(num(2.0)), num(10.0))],
            otherwise: Box::new(num(20.0)),
        };
        let c = eval_column(&t, &e, DataType::Numeric).unwrap();
        let values: Vec<_> = (0..3).map(|r| c.value(r)).collect();
        assert_eq!(
            values,
            vec![Some(Literal::num(10.0)), Some(Literal::num(20.0)), Some(Literal::num(20.0))]
        );
    }
}
