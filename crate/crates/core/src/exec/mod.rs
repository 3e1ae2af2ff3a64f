//! Columnar execution of plans over in-memory tables.

mod compare;
mod eval;
mod predict;
mod table;

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

pub use compare::{compare_bags, BagComparison};
pub use eval::{eval_column, filter_rows, RowExpr, Val};
pub use predict::Scorer;
pub use table::{load_csv, read_csv, Column, ColumnBuilder, ColumnData, Table};

use crate::error::{Error, Result};
use crate::ir::{Field, Op, Plan, PlanNode, Schema};

pub type Database = BTreeMap<String, Arc<Table>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NullPolicy {
    #[default]
    Error,
    Drop,
}

impl std::str::FromStr for NullPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(NullPolicy::Error),
            "drop" => Ok(NullPolicy::Drop),
            other => Err(Error::Config(format!("unknown null policy `{other}`"))),
        }
    }
}

/// Which evaluator scores model nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    /// Predict nodes are interpreted, TensorEval nodes run their graph.
    #[default]
    Auto,
    ForceDirect,
    ForceTensor,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Engine::Auto),
            "direct" => Ok(Engine::ForceDirect),
            "tensor" => Ok(Engine::ForceTensor),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecConfig {
    pub batch_size: usize,
    pub threads: usize,
    pub null_policy: NullPolicy,
    pub engine: Engine,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            batch_size: 2048,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            null_policy: NullPolicy::Error,
            engine: Engine::Auto,
        }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counters gathered during one execution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Rows entering model operators.
    pub model_rows: u64,
    pub dropped_null_rows: u64,
    /// Tree nodes visited by the direct interpreter.
    pub node_visits: u64,
    pub batches: u64,
    pub tensor_batches: u64,
}

impl ExecStats {
    fn add(&mut self, o: &ExecStats) {
        self.model_rows += o.model_rows;
        self.dropped_null_rows += o.dropped_null_rows;
        self.node_visits += o.node_visits;
        self.batches += o.batches;
        self.tensor_batches += o.tensor_batches;
    }
}

pub fn execute(plan: &Plan, db: &Database, config: &ExecConfig) -> Result<Table> {
    Ok(execute_with_stats(plan, db, config)?.0)
}

pub fn execute_with_stats(plan: &Plan, db: &Database, config: &ExecConfig) -> Result<(Table, ExecStats)> {
    config.validate()?;
    let mut stats = ExecStats::default();
    let t = Executor { db, config }.node(plan, 0, &mut stats)?;
    Ok((t, stats))
}

struct Executor<'a> {
    db: &'a Database,
    config: &'a ExecConfig,
}

fn is_unary(op: &Op) -> bool {
    matches!(
        op,
        Op::Filter { .. } | Op::Project { .. } | Op::Predict { .. } | Op::TensorEval { .. } | Op::Udf { .. }
    )
}

impl Executor<'_> {
    fn node(&self, node: &Plan, id: usize, stats: &mut ExecStats) -> Result<Table> {
        match &node.op {
            Op::Scan { table } => self
                .db
                .get(table)
                .map(|t| t.as_ref().clone())
                .ok_or_else(|| Error::UnknownTable(table.clone())),
            Op::Join { keys } => {
                let left = self.node(&node.inputs[0], id + 1, stats)?;
                let right = self.node(&node.inputs[1], id + 1 + node.inputs[0].node_count(), stats)?;
                hash_join(&left, &right, keys)
            }
            Op::UnionAll => {
                let mut parts = Vec::with_capacity(node.inputs.len());
                let mut child = id + 1;
                for c in &node.inputs {
                    parts.push(self.node(c, child, stats)?);
                    child += c.node_count();
                }
                let mut fields = parts[0].schema().fields().to_vec();
                for p in &parts[1..] {
                    if p.schema().len() != fields.len() {
                        return Err(Error::Plan("UNION ALL branches differ in width".into()));
                    }
                    for (f, g) in fields.iter_mut().zip(p.schema().fields()) {
                        f.nullable |= g.nullable;
                    }
                }
                let schema = Schema::new(fields)?;
                let parts = parts
                    .iter()
                    .map(|p| Table::new(schema.clone(), p.columns().to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Table::concat(schema, &parts)
            }
            _ => self.chain(node, id, stats),
        }
    }

    /// Runs a maximal chain of unary operators, partitioned across threads.
    fn chain(&self, top: &Plan, id: usize, stats: &mut ExecStats) -> Result<Table> {
        let mut ops: Vec<(&PlanNode, usize)> = Vec::new();
        let mut cur = top;
        let mut cur_id = id;
        while is_unary(&cur.op) {
            ops.push((cur, cur_id));
            cur = cur.input();
            cur_id += 1;
        }
        ops.reverse();
        let base = self.node(cur, cur_id, stats)?;
        let rows = base.row_count();
        let threads = self.config.threads.min(rows.max(1));
        if threads <= 1 {
            let origin: Vec<usize> = (0..rows).collect();
            return Ok(self.run_chain(&ops, base, origin, stats)?.0);
        }
        let chunk = rows.div_ceil(threads);
        let results: Vec<Result<(Table, ExecStats)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|p| {
                    let (lo, hi) = (p * chunk, ((p + 1) * chunk).min(rows));
                    let part = base.slice(lo, hi);
                    let ops = &ops;
                    s.spawn(move || {
                        let mut local = ExecStats::default();
                        let origin = (lo..hi).collect();
                        self.run_chain(ops, part, origin, &mut local).map(|(t, _)| (t, local))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("partition worker panicked"))
                .collect()
        });
        let mut tables = Vec::with_capacity(threads);
        for r in results {
            let (t, local) = r?;
            stats.add(&local);
            tables.push(t);
        }
        let schema = tables[0].schema().clone();
        Table::concat(schema, &tables)
    }

    fn run_chain(
        &self,
        ops: &[(&PlanNode, usize)],
        mut table: Table,
        mut origin: Vec<usize>,
        stats: &mut ExecStats,
    ) -> Result<(Table, Vec<usize>)> {
        for (node, id) in ops {
            match &node.op {
                Op::Filter { predicate } => {
                    let rows = filter_rows(&table, predicate)?;
                    if rows.len() != table.row_count() {
                        origin = rows.iter().map(|r| origin[*r]).collect();
                        table = table.take(&rows);
                    }
                }
                Op::Project { exprs } => {
                    let fields = exprs
                        .iter()
                        .map(|(n, e)| {
                            Ok(Field::new(
                                n.clone(),
                                e.data_type(table.schema())?,
                                e.nullable(table.schema()),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let columns = exprs
                        .iter()
                        .zip(&fields)
                        .map(|((_, e), f)| eval_column(&table, e, f.data_type))
                        .collect::<Result<Vec<_>>>()?;
                    let mut fields = fields;
                    for (f, c) in fields.iter_mut().zip(&columns) {
                        f.nullable |= c.null_count() > 0;
                    }
                    let rows = table.row_count();
                    table = if columns.is_empty() {
                        Table::empty(Schema::new(fields)?)
                    } else {
                        Table::new(Schema::new(fields)?, columns)?
                    };
                    if table.row_count() != rows && !exprs.is_empty() {
                        return Err(Error::Plan("projection changed the row count".into()));
                    }
                }
                Op::Predict { outputs, .. } | Op::TensorEval { outputs, .. } => {
                    let scorer = Scorer::new(&node.op, self.config.engine)?;
                    (table, origin) = scorer.score(&table, outputs, &origin, self.config, stats)?;
                }
                Op::Udf { tag } => {
                    return Err(Error::Udf {
                        node: *id,
                        tag: tag.clone(),
                    })
                }
                _ => unreachable!("non-unary operator in chain"),
            }
        }
        Ok((table, origin))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum KeyPart<'a> {
    Num(u64),
    Bool(bool),
    Str(&'a str),
}

fn key_part(c: &Column, row: usize) -> Option<KeyPart<'_>> {
    if c.is_null(row) {
        return None;
    }
    Some(match c.data() {
        ColumnData::Numeric(v) => {
            let x = if v[row] == 0.0 { 0.0 } else { v[row] };
            if x.is_nan() {
                return None;
            }
            KeyPart::Num(x.to_bits())
        }
        ColumnData::Boolean(v) => KeyPart::Bool(v[row]),
        ColumnData::Categorical { codes, dict } => KeyPart::Str(&dict[codes[row] as usize]),
    })
}

fn row_key<'a>(cols: &[&'a Column], row: usize) -> Option<Vec<KeyPart<'a>>> {
    cols.iter().map(|c| key_part(c, row)).collect()
}

/// Inner equi-join building a hash table on the right input. NULL keys
/// never match.
pub fn hash_join(left: &Table, right: &Table, keys: &[crate::ir::JoinKey]) -> Result<Table> {
    let lookup = |t: &Table, name: &str| -> Result<usize> {
        t.schema()
            .index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let lcols = keys
        .iter()
        .map(|k| Ok(left.column(lookup(left, &k.left)?).as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let rcols = keys
        .iter()
        .map(|k| Ok(right.column(lookup(right, &k.right)?).as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut build: HashMap<Vec<KeyPart<'_>>, Vec<usize>> = HashMap::new();
    for r in 0..right.row_count() {
        if let Some(k) = row_key(&rcols, r) {
            build.entry(k).or_default().push(r);
        }
    }
    let mut li = Vec::new();
    let mut ri = Vec::new();
    for l in 0..left.row_count() {
        if let Some(matches) = row_key(&lcols, l).and_then(|k| build.get(&k)) {
            for r in matches {
                li.push(l);
                ri.push(*r);
            }
        }
    }
    let (schema, _) = Schema::concat(left.schema(), right.schema());
    let mut columns: Vec<Arc<Column>> = left.columns().iter().map(|c| Arc::new(c.take(&li))).collect();
    columns.extend(right.columns().iter().map(|c| Arc::new(c.take(&ri))));
    Table::new(schema, columns)
}

/// One benchmarked configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchEntry {
    pub config: ExecConfig,
    pub runs_secs: Vec<f64>,
    pub mean_secs: f64,
    pub rows: u64,
    pub rows_per_sec: f64,
    pub node_visits: u64,
    pub output_rows: usize,
}

impl BenchEntry {
    pub fn to_json(&self) -> Value {
        json!({
            "batch_size": self.config.batch_size,
            "threads": self.config.threads,
            "engine": format!("{:?}", self.config.engine),
            "runs_secs": self.runs_secs,
            "mean_secs": self.mean_secs,
            "rows": self.rows,
            "rows_per_sec": self.rows_per_sec,
            "node_visits": self.node_visits,
            "node_visits_per_row": if self.rows == 0 { 0.0 } else { self.node_visits as f64 / self.rows as f64 },
            "output_rows": self.output_rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn to_json(&self) -> Value {
        json!({ "entries": self.entries.iter().map(BenchEntry::to_json).collect::<Vec<_>>() })
    }
}

/// Times the plan under every configuration: `warmup` discarded runs, then
/// the mean of `runs` (at least 3) timed runs.
pub fn bench(plan: &Plan, db: &Database, grid: &[ExecConfig], warmup: usize, runs: usize) -> Result<BenchReport> {
    let runs = runs.max(3);
    let mut entries = Vec::with_capacity(grid.len());
    for config in grid {
        for _ in 0..warmup {
            execute(plan, db, config)?;
        }
        let mut times = Vec::with_capacity(runs);
        let mut last = None;
        for _ in 0..runs {
            let t0 = Instant::now();
            let r = execute_with_stats(plan, db, config)?;
            times.push(t0.elapsed().as_secs_f64());
            last = Some(r);
        }
        let (table, stats) = last.expect("at least one run");
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let rows = if stats.model_rows > 0 {
            stats.model_rows
        } else {
            table.row_count() as u64
        };
        entries.push(BenchEntry {
            config: config.clone(),
            runs_secs: times,
            mean_secs: mean,
            rows,
            rows_per_sec: if mean > 0.0 { rows as f64 / mean } else { f64::INFINITY },
            node_visits: stats.node_visits,
            output_rows: table.row_count(),
        });
    }
    Ok(BenchReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{col, num, DataType, JoinKey};

    fn db() -> Database {
        let a = Schema::new(vec![
            Field::new("id", DataType::Numeric, false),
            Field::new("x", DataType::Numeric, false),
        ])
        .unwrap();
        let b = Schema::new(vec![
            Field::new("id", DataType::Numeric, false),
            Field::new("y", DataType::Categorical, false),
        ])
        .unwrap();
        let mut db = Database::new();
        db.insert("a".into(), Arc::new(read_csv("id,x\n1,10\n2,20\n3,30\n".as_bytes(), &a).unwrap()));
        db.insert("b".into(), Arc::new(read_csv("id,y\n1,p\n1,q\n3,r\n".as_bytes(), &b).unwrap()));
        db
    }

    #[test]
    fn join_matches_duplicates() {
        let plan = PlanNode::join(PlanNode::scan("a"), PlanNode::scan("b"), vec![JoinKey::new("id", "id")]);
        let t = execute(&plan, &db(), &ExecConfig::default()).unwrap();
        assert_eq!(t.row_count(), 3);
        assert_eq!(t.schema().names().collect::<Vec<_>>(), ["id", "x", "id__2", "y"]);
    }

    #[test]
    fn false_filter_keeps_schema() {
        let plan = PlanNode::filter(PlanNode::scan("a"), crate::ir::boolean(false));
        let t = execute(&plan, &db(), &ExecConfig::default()).unwrap();
        assert_eq!(t.row_count(), 0);
        assert_eq!(t.schema().len(), 2);
    }

    #[test]
    fn udf_is_rejected_with_node_id() {
        let plan = PlanNode::project_columns(PlanNode::udf(PlanNode::scan("a"), "script"), &["x"]);
        match execute(&plan, &db(), &ExecConfig::default()) {
            Err(Error::Udf { node, tag }) => assert_eq!((node, tag.as_str()), (1, "script")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threads_do_not_change_the_bag() {
        let plan = PlanNode::filter(PlanNode::scan("a"), col("x").gt(num(15.0)));
        let one = execute(&plan, &db(), &ExecConfig { threads: 1, ..Default::default() }).unwrap();
        let three = execute(&plan, &db(), &ExecConfig { threads: 3, ..Default::default() }).unwrap();
        assert!(compare_bags(&one, &three, 0.0).matched);
    }
}
