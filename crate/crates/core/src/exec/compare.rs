use std::cmp::Ordering;

use super::table::Table;
use crate::ir::Literal;

/// Outcome of comparing two results as multisets.
#[derive(Clone, Debug, PartialEq)]
pub struct BagComparison {
    pub matched: bool,
    /// Largest absolute difference between paired numeric values.
    pub max_deviation: f64,
    pub counterexample: Option<String>,
}

fn cmp_cell(a: &Option<Literal>, b: &Option<Literal>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(Literal::Num(x)), Some(Literal::Num(y))) => x.total_cmp(y),
        (Some(x), Some(y)) => x.cmp(y),
    }
}

fn render(row: &[Option<Literal>]) -> String {
    let cells: Vec<String> = row
        .iter()
        .map(|c| c.as_ref().map_or("NULL".to_string(), |l| l.to_string()))
        .collect();
    format!("({})", cells.join(", "))
}

fn sorted_rows(t: &Table) -> Vec<Vec<Option<Literal>>> {
    let mut rows: Vec<_> = (0..t.row_count()).map(|r| t.row(r)).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| cmp_cell(x, y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    rows
}

/// Compares two tables as bags of rows. Numbers pair up when within `tol`
/// relative to `max(1, |a|, |b|)`; other values must be equal.
pub fn compare_bags(a: &Table, b: &Table, tol: f64) -> BagComparison {
    let names_a: Vec<&str> = a.schema().names().collect();
    let names_b: Vec<&str> = b.schema().names().collect();
    if names_a != names_b {
        return BagComparison {
            matched: false,
            max_deviation: f64::INFINITY,
            counterexample: Some(format!("columns [{}] vs [{}]", names_a.join(", "), names_b.join(", "))),
        };
    }
    if a.row_count() != b.row_count() {
        return BagComparison {
            matched: false,
            max_deviation: f64::INFINITY,
            counterexample: Some(format!("{} rows vs {} rows", a.row_count(), b.row_count())),
        };
    }
    let (ra, rb) = (sorted_rows(a), sorted_rows(b));
    let mut max_dev: f64 = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        for (p, q) in x.iter().zip(y) {
            let ok = match (p, q) {
                (Some(Literal::Num(u)), Some(Literal::Num(v))) => {
                    let d = (u - v).abs();
                    if d.is_nan() {
                        u.to_bits() == v.to_bits()
                    } else {
                        max_dev = max_dev.max(d);
                        d <= tol * 1f64.max(u.abs()).max(v.abs())
                    }
                }
                _ => p == q,
            };
            if !ok {
                return BagComparison {
                    matched: false,
                    max_deviation: max_dev.max((num_of(p) - num_of(q)).abs()),
                    counterexample: Some(format!("{} vs {}", render(x), render(y))),
                };
            }
        }
    }
    BagComparison {
        matched: true,
        max_deviation: max_dev,
        counterexample: None,
    }
}

fn num_of(c: &Option<Literal>) -> f64 {
    match c {
        Some(Literal::Num(v)) => *v,
        _ => f64::INFINITY,
    }
}
