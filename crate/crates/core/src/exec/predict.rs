//! Batched model scoring for Predict and TensorEval nodes.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::table::{Column, ColumnData, Table};
use super::{Engine, ExecConfig, ExecStats, NullPolicy};
use crate::error::{Error, Result};
use crate::ir::{DataType, DispatchKernel, ModelPayload, ModelPipeline, Op, PipelineKernel, RowIssue};
use crate::tensor::{Batch, Tensor, TensorModel};

enum Direct {
    Pipeline(PipelineKernel),
    Dispatch(DispatchKernel),
}

impl Direct {
    #[inline]
    fn eval_row(&self, row: &[f64], out: &mut [f64], visits: &mut u64) -> Result<(), RowIssue> {
        match self {
            Direct::Pipeline(k) => k.eval_row(row, out, visits),
            Direct::Dispatch(k) => k.eval_row(row, out, visits),
        }
    }
}

/// A model node prepared for scoring: how to encode inputs and which
/// engine computes outputs.
pub struct Scorer {
    pipeline: Arc<ModelPipeline>,
    direct: Direct,
    tensor: Option<Arc<TensorModel>>,
    bound: Vec<String>,
    width: usize,
}

impl Scorer {
    pub fn new(op: &Op, engine: Engine) -> Result<Scorer> {
        let (pipeline, direct, tensor, bound, width) = match op {
            Op::Predict {
                payload, inputs, ..
            } => {
                let (pipeline, direct) = match payload {
                    ModelPayload::Pipeline(p) => (p.clone(), Direct::Pipeline(p.kernel())),
                    ModelPayload::Dispatch(d) => (d.fallback.clone(), Direct::Dispatch(d.kernel())),
                };
                let tensor = match (engine, payload) {
                    (Engine::ForceTensor, ModelPayload::Pipeline(p)) => {
                        TensorModel::from_pipeline(p.clone()).ok().map(Arc::new)
                    }
                    _ => None,
                };
                let width = payload.output_width();
                (pipeline, direct, tensor, inputs.clone(), width)
            }
            Op::TensorEval {
                program, inputs, ..
            } => {
                let tensor = (engine != Engine::ForceDirect).then(|| program.clone());
                (
                    program.source.clone(),
                    Direct::Pipeline(program.source.kernel()),
                    tensor,
                    inputs.clone(),
                    program.output_width(),
                )
            }
            other => return Err(Error::Plan(format!("{} is not a model operator", other.name()))),
        };
        Ok(Scorer {
            pipeline,
            direct,
            tensor,
            bound,
            width,
        })
    }

    /// Per-column encoders from the table's physical columns.
    fn encoders<'a>(&self, table: &'a Table) -> Result<Vec<Encoder<'a>>> {
        self.bound
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let column = table
                    .column_by_name(name)
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
                let codes = match column.data() {
                    ColumnData::Categorical { dict, .. } => {
                        dict.iter().map(|s| self.pipeline.category_index(i, s)).collect()
                    }
                    _ => Vec::new(),
                };
                Ok(Encoder { column, codes })
            })
            .collect()
    }

    /// Scores `table`, returning it with the output columns appended (and
    /// rows dropped under the drop policy). `origin` maps rows to indices
    /// reported in errors.
    pub fn score(
        &self,
        table: &Table,
        outputs: &[String],
        origin: &[usize],
        config: &ExecConfig,
        stats: &mut ExecStats,
    ) -> Result<(Table, Vec<usize>)> {
        let rows = table.row_count();
        let n_in = self.bound.len();
        let encoders = self.encoders(table)?;
        let batch_size = config.batch_size.max(1);
        let mut out = vec![0.0; rows * self.width];
        let mut dropped: Vec<usize> = Vec::new();
        let mut buf = vec![0.0; batch_size * n_in];
        let mut start = 0;
        while start < rows {
            let end = (start + batch_size).min(rows);
            let n = end - start;
            for (j, enc) in encoders.iter().enumerate() {
                for r in 0..n {
                    buf[r * n_in + j] = enc.encode(start + r);
                }
            }
            let issues = match &self.tensor {
                Some(t) => self.tensor_batch(t, &buf[..n * n_in], n, &mut out[start * self.width..end * self.width], stats)?,
                None => self.direct_batch(&buf[..n * n_in], n, &mut out[start * self.width..end * self.width], stats),
            };
            for (r, issue) in issues {
                match config.null_policy {
                    NullPolicy::Drop => dropped.push(start + r),
                    NullPolicy::Error => return Err(self.issue_error(issue, table, start + r, origin[start + r])),
                }
            }
            stats.batches += 1;
            start = end;
        }
        stats.model_rows += rows as u64;
        stats.dropped_null_rows += dropped.len() as u64;
        let kept: Vec<usize> = if dropped.is_empty() {
            (0..rows).collect()
        } else {
            let mut keep = vec![true; rows];
            for d in &dropped {
                keep[*d] = false;
            }
            (0..rows).filter(|r| keep[*r]).collect()
        };
        let base = if dropped.is_empty() { table.clone() } else { table.take(&kept) };
        let mut schema = base.schema().clone();
        let mut columns = base.columns().to_vec();
        for (k, name) in outputs.iter().enumerate() {
            let values = kept.iter().map(|r| out[r * self.width + k]).collect();
            schema.push(crate::ir::Field::new(name.clone(), DataType::Numeric, false))?;
            columns.push(Arc::new(Column::numeric(values)));
        }
        let origin = kept.iter().map(|r| origin[*r]).collect();
        Ok((Table::new(schema, columns)?, origin))
    }

    fn direct_batch(&self, buf: &[f64], n: usize, out: &mut [f64], stats: &mut ExecStats) -> Vec<(usize, RowIssue)> {
        let n_in = self.bound.len();
        let mut issues = Vec::new();
        let mut visits = 0u64;
        for r in 0..n {
            let row = &buf[r * n_in..(r + 1) * n_in];
            if let Err(issue) = self
                .direct
                .eval_row(row, &mut out[r * self.width..(r + 1) * self.width], &mut visits)
            {
                issues.push((r, issue));
            }
        }
        stats.node_visits += visits;
        issues
    }

    /// Rows with NULL or unknown-category inputs go through the direct
    /// interpreter so that failures stay path-dependent.
    fn tensor_batch(
        &self,
        t: &TensorModel,
        buf: &[f64],
        n: usize,
        out: &mut [f64],
        stats: &mut ExecStats,
    ) -> Result<Vec<(usize, RowIssue)>> {
        let n_in = self.bound.len();
        let positions: Vec<usize> = t
            .inputs
            .iter()
            .map(|s| self.pipeline.input_index(&s.name).expect("graph input belongs to pipeline"))
            .collect();
        let clean: Vec<usize> = (0..n)
            .filter(|r| {
                positions.iter().zip(&t.inputs).all(|(p, s)| {
                    let v = buf[r * n_in + p];
                    !v.is_nan() && !(s.categories.is_some() && v < 0.0 && s.strict)
                })
            })
            .collect();
        let mut issues = Vec::new();
        if clean.len() < n {
            let mut visits = 0u64;
            let mut is_clean = vec![false; n];
            for r in &clean {
                is_clean[*r] = true;
            }
            for r in (0..n).filter(|r| !is_clean[*r]) {
                let row = &buf[r * n_in..(r + 1) * n_in];
                if let Err(issue) = self
                    .direct
                    .eval_row(row, &mut out[r * self.width..(r + 1) * self.width], &mut visits)
                {
                    issues.push((r, issue));
                }
            }
            stats.node_visits += visits;
        }
        if clean.is_empty() {
            return Ok(issues);
        }
        let mut batch: Batch<f64> = Batch::new(clean.len());
        for (p, s) in positions.iter().zip(&t.inputs) {
            let col: Vec<f64> = clean.iter().map(|r| buf[r * n_in + p]).collect();
            batch = batch.with(s.name.clone(), Tensor::new(clean.len(), 1, col));
        }
        let result: BTreeMap<String, Tensor<f64>> = t.graph.eval(&batch)?;
        let y = result
            .get("output")
            .ok_or_else(|| Error::Plan("tensor program has no `output`".into()))?;
        for (i, r) in clean.iter().enumerate() {
            for k in 0..self.width {
                out[r * self.width + k] = y.get(i, k);
            }
        }
        stats.tensor_batches += 1;
        issues.sort_by_key(|(r, _)| *r);
        Ok(issues)
    }

    fn issue_error(&self, issue: RowIssue, table: &Table, local: usize, row: usize) -> Error {
        match issue {
            RowIssue::Null(feature) => Error::NullFeature { row, feature },
            RowIssue::UnknownCategory(i) => {
                let column = self.bound[i].clone();
                let value = table
                    .column_by_name(&column)
                    .and_then(|c| c.value(local))
                    .map(|l| l.to_string())
                    .unwrap_or_default();
                Error::UnknownCategory { row, column, value }
            }
        }
    }
}

struct Encoder<'a> {
    column: &'a Column,
    /// Category index per dictionary code.
    codes: Vec<f64>,
}

impl Encoder<'_> {
    #[inline]
    fn encode(&self, row: usize) -> f64 {
        if self.column.is_null(row) {
            return f64::NAN;
        }
        match self.column.data() {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Boolean(v) => f64::from(u8::from(v[row])),
            ColumnData::Categorical { codes, .. } => self.codes[codes[row] as usize],
        }
    }
}
