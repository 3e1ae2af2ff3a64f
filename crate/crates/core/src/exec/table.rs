use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::analysis::{collect_stats, TableStats};
use crate::error::{Error, Result};
use crate::ir::{DataType, Literal, Schema};

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Dictionary-encoded strings.
    Categorical {
        codes: Vec<u32>,
        dict: Arc<Vec<String>>,
    },
    Boolean(Vec<bool>),
}

/// A typed column with an optional validity mask (`false` = NULL).
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    data: ColumnData,
    validity: Option<Vec<bool>>,
}

impl Column {
    pub fn new(data: ColumnData, validity: Option<Vec<bool>>) -> Result<Column> {
        let c = Column { data, validity };
        if let Some(v) = &c.validity {
            if v.len() != c.len() {
                return Err(Error::Plan("validity mask length differs from column".into()));
            }
        }
        if let ColumnData::Categorical { codes, dict } = &c.data {
            if codes.iter().any(|k| *k as usize >= dict.len()) {
                return Err(Error::Plan("dictionary code out of range".into()));
            }
        }
        Ok(c.normalized())
    }

    pub fn numeric(values: Vec<f64>) -> Column {
        Column {
            data: ColumnData::Numeric(values),
            validity: None,
        }
    }

    pub fn boolean(values: Vec<bool>) -> Column {
        Column {
            data: ColumnData::Boolean(values),
            validity: None,
        }
    }

    pub fn categorical<S: AsRef<str>>(values: &[S]) -> Column {
        let mut b = ColumnBuilder::new(DataType::Categorical);
        for v in values {
            b.push_str(Some(v.as_ref()));
        }
        b.finish()
    }

    fn normalized(mut self) -> Column {
        if self.validity.as_ref().is_some_and(|v| v.iter().all(|b| *b)) {
            self.validity = None;
        }
        self
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    pub fn data_type(&self) -> DataType {
        match self.data {
            ColumnData::Numeric(_) => DataType::Numeric,
            ColumnData::Categorical { .. } => DataType::Categorical,
            ColumnData::Boolean(_) => DataType::Boolean,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Boolean(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_null(&self, row: usize) -> bool {
        self.validity.as_ref().is_some_and(|v| !v[row])
    }

    pub fn null_count(&self) -> usize {
        self.validity
            .as_ref()
            .map_or(0, |v| v.iter().filter(|b| !**b).count())
    }

    pub fn value(&self, row: usize) -> Option<Literal> {
        if self.is_null(row) {
            return None;
        }
        Some(match &self.data {
            ColumnData::Numeric(v) => Literal::Num(v[row]),
            ColumnData::Categorical { codes, dict } => Literal::Str(dict[codes[row] as usize].clone()),
            ColumnData::Boolean(v) => Literal::Bool(v[row]),
        })
    }

    /// Numeric view: numbers as-is, booleans 0/1, NULL as NaN. Categorical
    /// columns read as NaN.
    #[inline]
    pub fn feature(&self, row: usize) -> f64 {
        if self.is_null(row) {
            return f64::NAN;
        }
        match &self.data {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Boolean(v) => f64::from(u8::from(v[row])),
            ColumnData::Categorical { .. } => f64::NAN,
        }
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|r| v[*r]).collect()),
            ColumnData::Categorical { codes, dict } => ColumnData::Categorical {
                codes: rows.iter().map(|r| codes[*r]).collect(),
                dict: dict.clone(),
            },
            ColumnData::Boolean(v) => ColumnData::Boolean(rows.iter().map(|r| v[*r]).collect()),
        };
        let validity = self
            .validity
            .as_ref()
            .map(|v| rows.iter().map(|r| v[*r]).collect());
        Column { data, validity }.normalized()
    }

    /// Concatenates columns of one type, merging dictionaries.
    pub fn concat(parts: &[&Column]) -> Result<Column> {
        let Some(first) = parts.first() else {
            return Err(Error::Plan("concatenating no columns".into()));
        };
        let t = first.data_type();
        if parts.iter().any(|p| p.data_type() != t) {
            return Err(Error::Plan("concatenating columns of different types".into()));
        }
        let validity = if parts.iter().any(|p| p.validity.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|p| (0..p.len()).map(move |r| !p.is_null(r)))
                    .collect(),
            )
        } else {
            None
        };
        let data = match &first.data {
            ColumnData::Numeric(_) => ColumnData::Numeric(
                parts
                    .iter()
                    .flat_map(|p| match &p.data {
                        ColumnData::Numeric(v) => v.iter().copied(),
                        _ => unreachable!(),
                    })
                    .collect(),
            ),
            ColumnData::Boolean(_) => ColumnData::Boolean(
                parts
                    .iter()
                    .flat_map(|p| match &p.data {
                        ColumnData::Boolean(v) => v.iter().copied(),
                        _ => unreachable!(),
                    })
                    .collect(),
            ),
            ColumnData::Categorical { dict: d0, .. } => {
                let shared = parts.iter().all(|p| match &p.data {
                    ColumnData::Categorical { dict, .. } => Arc::ptr_eq(dict, d0),
                    _ => false,
                });
                if shared {
                    ColumnData::Categorical {
                        codes: parts
                            .iter()
                            .flat_map(|p| match &p.data {
                                ColumnData::Categorical { codes, .. } => codes.iter().copied(),
                                _ => unreachable!(),
                            })
                            .collect(),
                        dict: d0.clone(),
                    }
                } else {
                    let mut dict: Vec<String> = Vec::new();
                    let mut index: HashMap<String, u32> = HashMap::new();
                    let mut codes = Vec::new();
                    for p in parts {
                        let ColumnData::Categorical { codes: pc, dict: pd } = &p.data else {
                            unreachable!()
                        };
                        let remap: Vec<u32> = pd
                            .iter()
                            .map(|s| {
                                *index.entry(s.clone()).or_insert_with(|| {
                                    dict.push(s.clone());
                                    (dict.len() - 1) as u32
                                })
                            })
                            .collect();
                        codes.extend(pc.iter().map(|k| remap[*k as usize]));
                    }
                    ColumnData::Categorical {
                        codes,
                        dict: Arc::new(dict),
                    }
                }
            }
        };
        Ok(Column { data, validity }.normalized())
    }
}

/// Appends values one at a time.
#[derive(Debug)]
pub struct ColumnBuilder {
    data: ColumnData,
    validity: Vec<bool>,
    index: HashMap<String, u32>,
    dict: Vec<String>,
}

impl ColumnBuilder {
    pub fn new(data_type: DataType) -> Self {
        let data = match data_type {
            DataType::Numeric => ColumnData::Numeric(Vec::new()),
            DataType::Categorical => ColumnData::Categorical {
                codes: Vec::new(),
                dict: Arc::new(Vec::new()),
            },
            DataType::Boolean => ColumnData::Boolean(Vec::new()),
        };
        ColumnBuilder {
            data,
            validity: Vec::new(),
            index: HashMap::new(),
            dict: Vec::new(),
        }
    }

    pub fn push_null(&mut self) {
        match &mut self.data {
            ColumnData::Numeric(v) => v.push(0.0),
            ColumnData::Categorical { codes, .. } => codes.push(0),
            ColumnData::Boolean(v) => v.push(false),
        }
        self.validity.push(false);
    }

    pub fn push_num(&mut self, value: f64) {
        match &mut self.data {
            ColumnData::Numeric(v) => v.push(value),
            _ => panic!("numeric value pushed into non-numeric column"),
        }
        self.validity.push(true);
    }

    pub fn push_bool(&mut self, value: bool) {
        match &mut self.data {
            ColumnData::Boolean(v) => v.push(value),
            _ => panic!("boolean value pushed into non-boolean column"),
        }
        self.validity.push(true);
    }

    pub fn push_str(&mut self, value: Option<&str>) {
        let Some(value) = value else {
            self.push_null();
            return;
        };
        let code = match self.index.get(value) {
            Some(c) => *c,
            None => {
                self.dict.push(value.to_string());
                let c = (self.dict.len() - 1) as u32;
                self.index.insert(value.to_string(), c);
                c
            }
        };
        match &mut self.data {
            ColumnData::Categorical { codes, .. } => codes.push(code),
            _ => panic!("string value pushed into non-categorical column"),
        }
        self.validity.push(true);
    }

    pub fn push(&mut self, value: Option<&Literal>) {
        match value {
            None => self.push_null(),
            Some(Literal::Num(v)) => self.push_num(*v),
            Some(Literal::Bool(b)) => self.push_bool(*b),
            Some(Literal::Str(s)) => self.push_str(Some(s)),
        }
    }

    pub fn finish(self) -> Column {
        let mut data = self.data;
        if let ColumnData::Categorical { dict, .. } = &mut data {
            *dict = Arc::new(self.dict);
        }
        Column {
            data,
            validity: Some(self.validity),
        }
        .normalized()
    }
}

/// Immutable columnar relation.
#[derive(Clone, Debug)]
pub struct Table {
    schema: Schema,
    columns: Vec<Arc<Column>>,
    rows: usize,
    stats: OnceLock<Arc<TableStats>>,
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.rows == other.rows && self.columns == other.columns
    }
}

impl Table {
    pub fn new(schema: Schema, columns: Vec<Arc<Column>>) -> Result<Table> {
        if schema.len() != columns.len() {
            return Err(Error::Plan(format!(
                "schema has {} columns, {} given",
                schema.len(),
                columns.len()
            )));
        }
        let rows = columns.first().map_or(0, |c| c.len());
        for (f, c) in schema.fields().iter().zip(&columns) {
            if c.len() != rows {
                return Err(Error::Plan(format!("column `{}` has {} rows, expected {rows}", f.name, c.len())));
            }
            if c.data_type() != f.data_type {
                return Err(Error::Plan(format!(
                    "column `{}` holds {} data, declared {}",
                    f.name,
                    c.data_type(),
                    f.data_type
                )));
            }
            if !f.nullable && c.null_count() > 0 {
                return Err(Error::Plan(format!("NULL in non-nullable column `{}`", f.name)));
            }
        }
        Ok(Table {
            schema,
            columns,
            rows,
            stats: OnceLock::new(),
        })
    }

    pub fn from_columns(schema: Schema, columns: Vec<Column>) -> Result<Table> {
        Table::new(schema, columns.into_iter().map(Arc::new).collect())
    }

    /// Table without columns but with a row count (e.g. `SELECT` of nothing).
    pub fn empty(schema: Schema) -> Table {
        let columns = schema
            .fields()
            .iter()
            .map(|f| Arc::new(ColumnBuilder::new(f.data_type).finish()))
            .collect();
        Table {
            schema,
            columns,
            rows: 0,
            stats: OnceLock::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Arc<Column>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Arc<Column> {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Arc<Column>> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    /// Exact statistics, computed once.
    pub fn stats(&self) -> Arc<TableStats> {
        self.stats
            .get_or_init(|| Arc::new(collect_stats(self)))
            .clone()
    }

    pub fn row(&self, i: usize) -> Vec<Option<Literal>> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn take(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| Arc::new(c.take(rows))).collect(),
            rows: rows.len(),
            stats: OnceLock::new(),
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Table {
        let rows: Vec<usize> = (start..end).collect();
        self.take(&rows)
    }

    /// Row-wise concatenation; schemas must agree on names and types.
    pub fn concat(schema: Schema, parts: &[Table]) -> Result<Table> {
        if parts.is_empty() {
            return Ok(Table::empty(schema));
        }
        if parts.len() == 1 {
            return Table::new(schema, parts[0].columns.clone());
        }
        let columns = (0..schema.len())
            .map(|i| {
                let cols: Vec<&Column> = parts.iter().map(|p| p.columns[i].as_ref()).collect();
                Column::concat(&cols).map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Table::new(schema, columns)
    }

    pub fn with_schema(&self, schema: Schema) -> Result<Table> {
        Table::new(schema, self.columns.clone())
    }

    /// Writes a header line and one line per row; NULL is an empty field.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(self.schema.names()).map_err(csv_err)?;
        for r in 0..self.rows {
            let record: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c.value(r) {
                    None => String::new(),
                    Some(Literal::Num(v)) => v.to_string(),
                    Some(Literal::Bool(b)) => b.to_string(),
                    Some(Literal::Str(s)) => s,
                })
                .collect();
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV file whose header matches the schema's column names.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Workspace(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

pub fn read_csv(input: impl Read, schema: &Schema) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line());
    let header = reader.headers().map_err(|e| Error::Csv {
        line: line_of(&e).max(1),
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let expected: Vec<&str> = schema.names().collect();
    if names != expected {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "header [{}] does not match declared columns [{}]",
                names.join(", "),
                expected.join(", ")
            ),
        });
    }
    let mut builders: Vec<ColumnBuilder> = schema
        .fields()
        .iter()
        .map(|f| ColumnBuilder::new(f.data_type))
        .collect();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(Error::Csv {
                    line: line_of(&e),
                    message: e.to_string(),
                })
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        for ((field, raw), b) in schema.fields().iter().zip(record.iter()).zip(&mut builders) {
            let raw = raw.trim();
            if raw.is_empty() {
                if !field.nullable {
                    return Err(Error::Csv {
                        line,
                        message: format!("empty value in non-nullable column `{}`", field.name),
                    });
                }
                b.push_null();
                continue;
            }
            match field.data_type {
                DataType::Numeric => match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => b.push_num(v),
                    _ => {
                        return Err(Error::Csv {
                            line,
                            message: format!("column `{}`: `{raw}` is not a number", field.name),
                        })
                    }
                },
                DataType::Boolean => match raw.to_ascii_lowercase().as_str() {
                    "true" | "1" => b.push_bool(true),
                    "false" | "0" => b.push_bool(false),
                    _ => {
                        return Err(Error::Csv {
                            line,
                            message: format!("column `{}`: `{raw}` is not a boolean", field.name),
                        })
                    }
                },
                DataType::Categorical => b.push_str(Some(raw)),
            }
        }
    }
    let columns = builders.into_iter().map(|b| Arc::new(b.finish())).collect();
    let table = Table::new(schema.clone(), columns)?;
    table.stats();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Field;

    fn schema() -> Schema {
        Schema::new(vec![
            Field::new("x", DataType::Numeric, true),
            Field::new("k", DataType::Categorical, false),
        ])
        .unwrap()
    }

    #[test]
    fn loads_rows_and_nulls() {
        let t = read_csv("x,k\n1.5,a\n,b\n3,a\n".as_bytes(), &schema()).unwrap();
        assert_eq!(t.row_count(), 3);
        assert_eq!(t.column(0).null_count(), 1);
        assert_eq!(t.row(1), vec![None, Some(Literal::str("b"))]);
        assert_eq!(t.stats().column("x").unwrap().null_count, 1);
    }

    #[test]
    fn coercion_error_names_line() {
        let err = read_csv("x,k\n1,a\nabc,b\n".as_bytes(), &schema()).unwrap_err();
        match err {
            Error::Csv { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("`x`"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn header_mismatch_is_rejected() {
        assert!(read_csv("k,x\na,1\n".as_bytes(), &schema()).is_err());
    }

    #[test]
    fn concat_merges_dictionaries() {
        let a = Column::categorical(&["x", "y"]);
        let b = Column::categorical(&["y", "z"]);
        let c = Column::concat(&[&a, &b]).unwrap();
        let values: Vec<_> = (0..4).map(|i| c.value(i).unwrap()).collect();
        assert_eq!(
            values,
            ["x", "y", "y", "z"].iter().map(|s| Literal::str(*s)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_round_trip() {
        let t = read_csv("x,k\n1.5,a\n,b\n".as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &schema()).unwrap();
        assert_eq!(back, t);
    }
}
