use std::collections::BTreeSet;

use super::domain::{DomainEnv, FeatureDomain, Interval};
use super::stats::TableStats;
use crate::ir::{CmpOp, DataType, Literal, ScalarExpr};

/// Abstracts the rows satisfying `predicate` (and, with stats, belonging
/// to the stats' table). Atoms the analysis does not understand are Top.
pub fn derive_domains(predicate: &ScalarExpr, stats: Option<&TableStats>) -> DomainEnv {
    let env = stats.map_or_else(DomainEnv::top, stats_domains);
    env.meet(&predicate_domains(predicate))
}

/// Domains implied by the data alone. Columns with NULLs stay Top.
pub fn stats_domains(stats: &TableStats) -> DomainEnv {
    if stats.row_count == 0 {
        return DomainEnv::Unreachable;
    }
    let mut env = DomainEnv::top();
    for (name, c) in &stats.columns {
        if c.null_count > 0 || c.row_count == 0 {
            continue;
        }
        let d = match c.data_type {
            DataType::Numeric => match (c.min, c.max) {
                (Some(lo), Some(hi)) => Interval::closed(lo, hi).map(FeatureDomain::interval),
                _ => None,
            },
            DataType::Categorical | DataType::Boolean => {
                c.distinct.clone().and_then(FeatureDomain::values)
            }
        };
        if let Some(d) = d {
            env.restrict(name, &d);
        }
    }
    env
}

fn predicate_domains(e: &ScalarExpr) -> DomainEnv {
    match e {
        ScalarExpr::Literal(Literal::Bool(false)) => DomainEnv::Unreachable,
        ScalarExpr::And(a, b) => predicate_domains(a).meet(&predicate_domains(b)),
        ScalarExpr::Or(a, b) => predicate_domains(a).join(&predicate_domains(b)),
        ScalarExpr::InList { expr, list } => match expr.as_ref() {
            ScalarExpr::Column(c) => {
                let set: BTreeSet<Literal> = list.iter().cloned().collect();
                match FeatureDomain::values(set) {
                    Some(d) => single(c, d),
                    None => DomainEnv::Unreachable,
                }
            }
            _ => DomainEnv::top(),
        },
        ScalarExpr::Compare { op, left, right } => match (left.as_ref(), right.as_ref()) {
            (ScalarExpr::Column(c), ScalarExpr::Literal(l)) => atom(c, *op, l),
            (ScalarExpr::Literal(l), ScalarExpr::Column(c)) => atom(c, op.flip(), l),
            _ => DomainEnv::top(),
        },
        _ => DomainEnv::top(),
    }
}

fn single(column: &str, d: FeatureDomain) -> DomainEnv {
    let mut env = DomainEnv::top();
    env.restrict(column, &d);
    env
}

fn atom(column: &str, op: CmpOp, l: &Literal) -> DomainEnv {
    let d = match (op, l) {
        (CmpOp::Eq, _) => FeatureDomain::Constant(l.clone()),
        (CmpOp::NotEq, _) => return DomainEnv::top(),
        (op, Literal::Num(v)) => {
            let i = match op {
                CmpOp::Lt => Interval::new(f64::NEG_INFINITY, *v, false, false),
                CmpOp::LtEq => Some(Interval::at_most(*v)),
                CmpOp::Gt => Some(Interval::greater_than(*v)),
                CmpOp::GtEq => Interval::new(*v, f64::INFINITY, true, false),
                CmpOp::Eq | CmpOp::NotEq => unreachable!(),
            };
            match i {
                Some(i) => FeatureDomain::interval(i),
                None => return DomainEnv::Unreachable,
            }
        }
        _ => return DomainEnv::top(),
    };
    single(column, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ColumnStats;
    use crate::ir::{col, num};

    #[test]
    fn equality_is_constant() {
        let env = derive_domains(&col("pregnant").eq(num(1.0)), None);
        assert_eq!(env.get("pregnant"), FeatureDomain::Constant(Literal::num(1.0)));
    }

    #[test]
    fn conjunction_meets() {
        let p = col("x").lt_eq(num(3.0)).and(col("x").lt_eq(num(5.0)));
        let env = derive_domains(&p, None);
        assert_eq!(env.get("x"), FeatureDomain::Interval(Interval::at_most(3.0)));
    }

    #[test]
    fn contradiction_is_unreachable() {
        let p = ScalarExpr::compare(CmpOp::Lt, col("x"), num(1.0)).and(col("x").gt(num(2.0)));
        assert!(derive_domains(&p, None).is_unreachable());
    }

    #[test]
    fn stats_bound_ages() {
        let mut stats = TableStats {
            row_count: 5,
            ..Default::default()
        };
        stats.columns.insert(
            "age".into(),
            ColumnStats {
                data_type: DataType::Numeric,
                min: Some(36.0),
                max: Some(80.0),
                distinct: None,
                null_count: 0,
                row_count: 5,
            },
        );
        let env = derive_domains(&ScalarExpr::Literal(Literal::Bool(true)), Some(&stats));
        assert_eq!(env.get("age"), FeatureDomain::Interval(Interval::closed(36.0, 80.0).unwrap()));
    }
}
