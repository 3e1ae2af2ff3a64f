use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::exec::{ColumnData, Table};
use crate::ir::{DataType, Literal};

pub const DISTINCT_CAP: usize = 256;

/// Exact statistics of one column. `distinct` is `None` once more than
/// the cap of distinct values was seen.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub data_type: DataType,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub distinct: Option<BTreeSet<Literal>>,
    pub null_count: usize,
    pub row_count: usize,
}

impl ColumnStats {
    pub fn overflowed(&self) -> bool {
        self.distinct.is_none()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "type": self.data_type.short_name(),
            "min": self.min,
            "max": self.max,
            "distinct": self.distinct.as_ref().map(|s| s.iter().map(|l| l.to_string()).collect::<Vec<_>>()),
            "distinct_overflowed": self.overflowed(),
            "null_count": self.null_count,
            "row_count": self.row_count,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableStats {
    pub row_count: usize,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl TableStats {
    pub fn column(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.get(name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "row_count": self.row_count,
            "columns": self.columns.iter().map(|(k, v)| (k.clone(), v.to_json())).collect::<serde_json::Map<_, _>>(),
        })
    }
}

pub fn collect_stats(table: &Table) -> TableStats {
    collect_stats_with_cap(table, DISTINCT_CAP)
}

pub fn collect_stats_with_cap(table: &Table, cap: usize) -> TableStats {
    let mut columns = BTreeMap::new();
    for (field, column) in table.schema().fields().iter().zip(table.columns()) {
        let rows = column.len();
        let valid = |r: usize| !column.is_null(r);
        let mut min: Option<f64> = None;
        let mut max: Option<f64> = None;
        let mut distinct: Option<BTreeSet<Literal>> = Some(BTreeSet::new());
        let mut note = |value: Literal| {
            if let Some(set) = &mut distinct {
                set.insert(value);
                if set.len() > cap {
                    distinct = None;
                }
            }
        };
        match column.data() {
            ColumnData::Numeric(v) => {
                for r in (0..rows).filter(|r| valid(*r)) {
                    min = Some(min.map_or(v[r], |m| m.min(v[r])));
                    max = Some(max.map_or(v[r], |m| m.max(v[r])));
                    note(Literal::Num(v[r]));
                }
            }
            ColumnData::Boolean(v) => {
                for r in (0..rows).filter(|r| valid(*r)) {
                    note(Literal::Bool(v[r]));
                }
            }
            ColumnData::Categorical { codes, dict } => {
                let mut seen = vec![false; dict.len()];
                for r in (0..rows).filter(|r| valid(*r)) {
                    seen[codes[r] as usize] = true;
                }
                for (k, s) in seen.iter().zip(dict.iter()) {
                    if *k {
                        note(Literal::Str(s.clone()));
                    }
                }
            }
        }
        columns.insert(
            field.name.clone(),
            ColumnStats {
                data_type: field.data_type,
                min,
                max,
                distinct,
                null_count: column.null_count(),
                row_count: rows,
            },
        );
    }
    TableStats {
        row_count: table.row_count(),
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Column;
    use crate::ir::{Field, Schema};

    fn one_column(name: &str, t: DataType, c: Column) -> Table {
        Table::from_columns(Schema::new(vec![Field::new(name, t, true)]).unwrap(), vec![c]).unwrap()
    }

    #[test]
    fn constant_column() {
        let s = collect_stats(&one_column("x", DataType::Numeric, Column::numeric(vec![42.0; 10])));
        let c = s.column("x").unwrap();
        assert_eq!((c.min, c.max), (Some(42.0), Some(42.0)));
        assert_eq!(c.distinct.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn age_range() {
        let ages = vec![36.0, 52.0, 80.0, 41.0, 67.0];
        let s = collect_stats(&one_column("age", DataType::Numeric, Column::numeric(ages)));
        let c = s.column("age").unwrap();
        assert_eq!((c.min, c.max), (Some(36.0), Some(80.0)));
    }

    #[test]
    fn distinct_overflow() {
        let values: Vec<String> = (0..300).map(|i| format!("v{i}")).collect();
        let s = collect_stats(&one_column("k", DataType::Categorical, Column::categorical(&values)));
        assert!(s.column("k").unwrap().overflowed());
    }
}
