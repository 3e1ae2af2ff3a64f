//! Scalar expressions evaluated per row by Filter and Project nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::schema::{DataType, Schema};
use super::value::Literal;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtEq => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtEq => ">=",
        }
    }

    /// The operator with operands swapped: `a < b` iff `b > a`.
    pub fn flip(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::LtEq => CmpOp::GtEq,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::GtEq => CmpOp::LtEq,
            other => other,
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::NotEq)
    }

    pub fn holds(self, ordering: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ordering == Equal,
            CmpOp::NotEq => ordering != Equal,
            CmpOp::Lt => ordering == Less,
            CmpOp::LtEq => ordering != Greater,
            CmpOp::Gt => ordering == Greater,
            CmpOp::GtEq => ordering != Less,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalarExpr {
    Column(String),
    Literal(Literal),
    Compare {
        op: CmpOp,
        left: Box<ScalarExpr>,
        right: Box<ScalarExpr>,
    },
    And(Box<ScalarExpr>, Box<ScalarExpr>),
    Or(Box<ScalarExpr>, Box<ScalarExpr>),
    Not(Box<ScalarExpr>),
    InList {
        expr: Box<ScalarExpr>,
        list: Vec<Literal>,
    },
    /// `CASE WHEN c1 THEN v1 ... ELSE otherwise END`
    Case {
        branches: Vec<(ScalarExpr, ScalarExpr)>,
        otherwise: Box<ScalarExpr>,
    },
    Arith {
        op: ArithOp,
        left: Box<ScalarExpr>,
        right: Box<ScalarExpr>,
    },
    /// `PREDICT(model, args...)` as written in SQL. Only appears in parsed
    /// queries; planning replaces it by a Predict node's output column.
    ModelCall { model: String, args: Vec<String> },
}

pub fn col(name: impl Into<String>) -> ScalarExpr {
    ScalarExpr::Column(name.into())
}

pub fn num(value: f64) -> ScalarExpr {
    ScalarExpr::Literal(Literal::num(value))
}

pub fn string(value: impl Into<String>) -> ScalarExpr {
    ScalarExpr::Literal(Literal::Str(value.into()))
}

pub fn boolean(value: bool) -> ScalarExpr {
    ScalarExpr::Literal(Literal::Bool(value))
}

impl ScalarExpr {
    pub fn compare(op: CmpOp, left: ScalarExpr, right: ScalarExpr) -> Self {
        ScalarExpr::Compare {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn arith(op: ArithOp, left: ScalarExpr, right: ScalarExpr) -> Self {
        ScalarExpr::Arith {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn eq(self, other: ScalarExpr) -> Self {
        Self::compare(CmpOp::Eq, self, other)
    }

    pub fn lt_eq(self, other: ScalarExpr) -> Self {
        Self::compare(CmpOp::LtEq, self, other)
    }

    pub fn gt(self, other: ScalarExpr) -> Self {
        Self::compare(CmpOp::Gt, self, other)
    }

    pub fn and(self, other: ScalarExpr) -> Self {
        ScalarExpr::And(Box::new(self), Box::new(other))
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, ScalarExpr::Literal(Literal::Bool(true)))
    }

    pub fn is_false_literal(&self) -> bool {
        matches!(self, ScalarExpr::Literal(Literal::Bool(false)))
    }

    /// Truth value of a predicate over numeric and boolean literals only;
    /// `None` when it reads columns or uses other forms.
    pub fn const_truth(&self) -> Option<bool> {
        match self {
            ScalarExpr::Literal(Literal::Bool(b)) => Some(*b),
            ScalarExpr::Compare { op, left, right } => match (left.as_ref(), right.as_ref()) {
                (ScalarExpr::Literal(Literal::Num(a)), ScalarExpr::Literal(Literal::Num(b))) => {
                    a.partial_cmp(b).map(|o| op.holds(o))
                }
                _ => None,
            },
            ScalarExpr::InList { expr, list } => match expr.as_ref() {
                ScalarExpr::Literal(v @ Literal::Num(_)) => Some(list.contains(v)),
                _ => None,
            },
            ScalarExpr::And(a, b) => Some(a.const_truth()? && b.const_truth()?),
            ScalarExpr::Or(a, b) => Some(a.const_truth()? || b.const_truth()?),
            ScalarExpr::Not(a) => a.const_truth().map(|v| !v),
            _ => None,
        }
    }

    /// Left-deep AND of the conjuncts; `TRUE` when empty.
    pub fn conjunction(conjuncts: impl IntoIterator<Item = ScalarExpr>) -> ScalarExpr {
        conjuncts
            .into_iter()
            .reduce(|acc, c| acc.and(c))
            .unwrap_or(boolean(true))
    }

    /// Top-level AND operands, flattened.
    pub fn conjuncts(&self) -> Vec<&ScalarExpr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a ScalarExpr, out: &mut Vec<&'a ScalarExpr>) {
            match e {
                ScalarExpr::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn into_conjuncts(self) -> Vec<ScalarExpr> {
        match self {
            ScalarExpr::And(a, b) => {
                let mut out = a.into_conjuncts();
                out.extend(b.into_conjuncts());
                out
            }
            other => vec![other],
        }
    }

    pub fn columns(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| match e {
            ScalarExpr::Column(c) => {
                out.insert(c.clone());
            }
            ScalarExpr::ModelCall { args, .. } => {
                out.extend(args.iter().cloned());
            }
            _ => {}
        });
        out
    }

    pub fn contains_model_call(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, ScalarExpr::ModelCall { .. }) {
                found = true;
            }
        });
        found
    }

    pub fn visit(&self, f: &mut impl FnMut(&ScalarExpr)) {
        f(self);
        match self {
            ScalarExpr::Column(_) | ScalarExpr::Literal(_) | ScalarExpr::ModelCall { .. } => {}
            ScalarExpr::Compare { left, right, .. } | ScalarExpr::Arith { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            ScalarExpr::And(a, b) | ScalarExpr::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ScalarExpr::Not(a) => a.visit(f),
            ScalarExpr::InList { expr, .. } => expr.visit(f),
            ScalarExpr::Case {
                branches,
                otherwise,
            } => {
                for (c, v) in branches {
                    c.visit(f);
                    v.visit(f);
                }
                otherwise.visit(f);
            }
        }
    }

    /// Bottom-up rewrite.
    pub fn transform(&self, f: &mut impl FnMut(ScalarExpr) -> ScalarExpr) -> ScalarExpr {
        let rebuilt = match self {
            ScalarExpr::Column(_) | ScalarExpr::Literal(_) | ScalarExpr::ModelCall { .. } => {
                self.clone()
            }
            ScalarExpr::Compare { op, left, right } => {
                ScalarExpr::compare(*op, left.transform(f), right.transform(f))
            }
            ScalarExpr::Arith { op, left, right } => {
                ScalarExpr::arith(*op, left.transform(f), right.transform(f))
            }
            ScalarExpr::And(a, b) => ScalarExpr::And(Box::new(a.transform(f)), Box::new(b.transform(f))),
            ScalarExpr::Or(a, b) => ScalarExpr::Or(Box::new(a.transform(f)), Box::new(b.transform(f))),
            ScalarExpr::Not(a) => ScalarExpr::Not(Box::new(a.transform(f))),
            ScalarExpr::InList { expr, list } => ScalarExpr::InList {
                expr: Box::new(expr.transform(f)),
                list: list.clone(),
            },
            ScalarExpr::Case {
                branches,
                otherwise,
            } => ScalarExpr::Case {
                branches: branches
                    .iter()
                    .map(|(c, v)| (c.transform(f), v.transform(f)))
                    .collect(),
                otherwise: Box::new(otherwise.transform(f)),
            },
        };
        f(rebuilt)
    }

    /// Replaces column references by the mapped expressions. Unmapped
    /// columns are left alone.
    pub fn substitute(&self, map: &BTreeMap<String, ScalarExpr>) -> ScalarExpr {
        self.transform(&mut |e| match e {
            ScalarExpr::Column(ref c) => map.get(c).cloned().unwrap_or(e),
            ScalarExpr::ModelCall { model, args } => ScalarExpr::ModelCall {
                model,
                args: args
                    .into_iter()
                    .map(|a| match map.get(&a) {
                        Some(ScalarExpr::Column(renamed)) => renamed.clone(),
                        _ => a,
                    })
                    .collect(),
            },
            other => other,
        })
    }

    pub fn rename_columns(&self, renames: &BTreeMap<String, String>) -> ScalarExpr {
        let map = renames
            .iter()
            .map(|(k, v)| (k.clone(), ScalarExpr::Column(v.clone())))
            .collect();
        self.substitute(&map)
    }

    /// Static type against a schema; enforces compatible comparisons and
    /// uniform CASE branch types.
    pub fn data_type(&self, schema: &Schema) -> Result<DataType> {
        match self {
            ScalarExpr::Column(c) => schema
                .field(c)
                .map(|f| f.data_type)
                .ok_or_else(|| Error::UnknownColumn(c.clone())),
            ScalarExpr::Literal(l) => Ok(l.data_type()),
            ScalarExpr::Compare { op, left, right } => {
                let lt = left.data_type(schema)?;
                let rt = right.data_type(schema)?;
                if lt != rt {
                    return Err(Error::Type(format!(
                        "cannot compare {lt} with {rt} in `{self}`"
                    )));
                }
                if op.is_ordering() && lt != DataType::Numeric {
                    return Err(Error::Type(format!(
                        "ordering comparison on {lt} values in `{self}`"
                    )));
                }
                Ok(DataType::Boolean)
            }
            ScalarExpr::And(a, b) | ScalarExpr::Or(a, b) => {
                expect_type(a, schema, DataType::Boolean)?;
                expect_type(b, schema, DataType::Boolean)?;
                Ok(DataType::Boolean)
            }
            ScalarExpr::Not(a) => {
                expect_type(a, schema, DataType::Boolean)?;
                Ok(DataType::Boolean)
            }
            ScalarExpr::InList { expr, list } => {
                let t = expr.data_type(schema)?;
                if list.is_empty() {
                    return Err(Error::Type("empty IN list".into()));
                }
                if let Some(bad) = list.iter().find(|l| l.data_type() != t) {
                    return Err(Error::Type(format!("IN list value {bad} is not {t}")));
                }
                Ok(DataType::Boolean)
            }
            ScalarExpr::Case {
                branches,
                otherwise,
            } => {
                let t = otherwise.data_type(schema)?;
                for (cond, value) in branches {
                    expect_type(cond, schema, DataType::Boolean)?;
                    let vt = value.data_type(schema)?;
                    if vt != t {
                        return Err(Error::Type(format!(
                            "CASE branches yield {vt} and {t}"
                        )));
                    }
                }
                Ok(t)
            }
            ScalarExpr::Arith { left, right, .. } => {
                expect_type(left, schema, DataType::Numeric)?;
                expect_type(right, schema, DataType::Numeric)?;
                Ok(DataType::Numeric)
            }
            ScalarExpr::ModelCall { model, .. } => Err(Error::Plan(format!(
                "PREDICT({model}, ...) must be planned as a Predict node"
            ))),
        }
    }

    pub fn nullable(&self, schema: &Schema) -> bool {
        match self {
            ScalarExpr::Column(c) => schema.field(c).map(|f| f.nullable).unwrap_or(true),
            ScalarExpr::Literal(_) => false,
            ScalarExpr::Case {
                branches,
                otherwise,
            } => otherwise.nullable(schema) || branches.iter().any(|(_, v)| v.nullable(schema)),
            ScalarExpr::ModelCall { .. } => false,
            other => other.columns().iter().any(|c| {
                schema.field(c).map(|f| f.nullable).unwrap_or(true)
            }),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ScalarExpr::Or(..) => 1,
            ScalarExpr::And(..) => 2,
            ScalarExpr::Not(..) => 3,
            ScalarExpr::Compare { .. } | ScalarExpr::InList { .. } => 4,
            ScalarExpr::Arith {
                op: ArithOp::Add | ArithOp::Sub,
                ..
            } => 5,
            ScalarExpr::Arith { .. } => 6,
            _ => 7,
        }
    }
}

fn expect_type(e: &ScalarExpr, schema: &Schema, expected: DataType) -> Result<()> {
    let t = e.data_type(schema)?;
    if t != expected {
        return Err(Error::Type(format!("`{e}` is {t}, expected {expected}")));
    }
    Ok(())
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// SQL rendering; reparses to the same tree.
impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Column(c) => f.write_str(c),
            ScalarExpr::Literal(l) => write!(f, "{l}"),
            ScalarExpr::Compare { op, left, right } => {
                write_operand(f, left, 5)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, right, 5)
            }
            ScalarExpr::And(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" AND ")?;
                write_operand(f, b, 3)
            }
            ScalarExpr::Or(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" OR ")?;
                write_operand(f, b, 2)
            }
            ScalarExpr::Not(a) => {
                f.write_str("NOT ")?;
                write_operand(f, a, 3)
            }
            ScalarExpr::InList { expr, list } => {
                write_operand(f, expr, 5)?;
                f.write_str(" IN (")?;
                for (i, l) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                f.write_str(")")
            }
            ScalarExpr::Case {
                branches,
                otherwise,
            } => {
                f.write_str("CASE")?;
                for (c, v) in branches {
                    write!(f, " WHEN {c} THEN {v}")?;
                }
                write!(f, " ELSE {otherwise} END")
            }
            ScalarExpr::Arith { op, left, right } => {
                let prec = self.precedence();
                write_operand(f, left, prec)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, right, prec + 1)
            }
            ScalarExpr::ModelCall { model, args } => {
                write!(f, "PREDICT({model}")?;
                for a in args {
                    write!(f, ", {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::schema::Field;

    fn schema() -> Schema {
        Schema::new(vec![
            Field::new("age", DataType::Numeric, false),
            Field::new("dest", DataType::Categorical, true),
            Field::new("flag", DataType::Boolean, false),
        ])
        .unwrap()
    }

    #[test]
    fn typing_rules() {
        let s = schema();
        assert_eq!(col("age").lt_eq(num(3.0)).data_type(&s).unwrap(), DataType::Boolean);
        assert!(col("dest").lt_eq(string("JFK")).data_type(&s).is_err());
        assert!(col("age").eq(string("x")).data_type(&s).is_err());
        let case = ScalarExpr::Case {
            branches: vec![(col("flag").eq(boolean(true)), num(1.0))],
            otherwise: Box::new(string("no")),
        };
        assert!(case.data_type(&s).is_err());
    }

    #[test]
    fn display_parenthesizes_by_precedence() {
        let e = ScalarExpr::arith(
            ArithOp::Div,
            ScalarExpr::arith(ArithOp::Sub, col("age"), num(50.0)),
            num(10.0),
        )
        .lt_eq(num(0.5));
        assert_eq!(e.to_string(), "(age - 50.0) / 10.0 <= 0.5");
        let nested = ScalarExpr::arith(
            ArithOp::Sub,
            col("a"),
            ScalarExpr::arith(ArithOp::Sub, col("b"), col("c")),
        );
        assert_eq!(nested.to_string(), "a - (b - c)");
    }

    #[test]
    fn conjunct_flattening() {
        let e = col("a").eq(num(1.0)).and(col("b").eq(num(2.0)).and(col("c").eq(num(3.0))));
        assert_eq!(e.conjuncts().len(), 3);
        assert_eq!(ScalarExpr::conjunction(e.clone().into_conjuncts()).conjuncts().len(), 3);
    }
}
