use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use super::{DType, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row dimension: the symbolic batch size or a fixed extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Batch,
    Fixed(usize),
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Batch => f.write_str("N"),
            Dim::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub rows: Dim,
    pub cols: usize,
    pub dtype: DType,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.rows, self.cols)
    }
}

/// Operands are indices of earlier nodes, so every graph is a DAG in
/// topological order.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorOp<T> {
    /// `[N, cols]` real input.
    Input { name: String, cols: usize },
    Constant(Tensor<T>),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// Elementwise `a <= b` as 0/1 integers.
    LessEqual(usize, usize),
    Equal(usize, usize),
    Cast { input: usize, dtype: DType },
    Sigmoid(usize),
    ArgMax { input: usize, axis: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Gather { input: usize, axis: usize, indices: Vec<usize> },
}

impl<T> TensorOp<T> {
    pub fn name(&self) -> &'static str {
        match self {
            TensorOp::Input { .. } => "Input",
            TensorOp::Constant(_) => "Constant",
            TensorOp::MatMul(..) => "MatMul",
            TensorOp::Add(..) => "Add",
            TensorOp::Sub(..) => "Sub",
            TensorOp::Mul(..) => "Mul",
            TensorOp::Div(..) => "Div",
            TensorOp::LessEqual(..) => "LessEqual",
            TensorOp::Equal(..) => "Equal",
            TensorOp::Cast { .. } => "Cast",
            TensorOp::Sigmoid(_) => "Sigmoid",
            TensorOp::ArgMax { .. } => "ArgMax",
            TensorOp::Concat { .. } => "Concat",
            TensorOp::Gather { .. } => "Gather",
        }
    }

    pub fn operands(&self) -> Vec<usize> {
        self.operand_ids().as_slice().to_vec()
    }

    fn operand_ids(&self) -> Operands<'_> {
        match self {
            TensorOp::Input { .. } | TensorOp::Constant(_) => Operands::Fixed([0; 2], 0),
            TensorOp::MatMul(a, b)
            | TensorOp::Add(a, b)
            | TensorOp::Sub(a, b)
            | TensorOp::Mul(a, b)
            | TensorOp::Div(a, b)
            | TensorOp::LessEqual(a, b)
            | TensorOp::Equal(a, b) => Operands::Fixed([*a, *b], 2),
            TensorOp::Cast { input, .. }
            | TensorOp::ArgMax { input, .. }
            | TensorOp::Gather { input, .. } => Operands::Fixed([*input, 0], 1),
            TensorOp::Sigmoid(a) => Operands::Fixed([*a, 0], 1),
            TensorOp::Concat { inputs, .. } => Operands::Slice(inputs),
        }
    }

    /// Same op with operands renumbered through `map`.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> TensorOp<T>
    where
        T: Clone,
    {
        match self {
            TensorOp::Input { name, cols } => TensorOp::Input {
                name: name.clone(),
                cols: *cols,
            },
            TensorOp::Constant(t) => TensorOp::Constant(t.clone()),
            TensorOp::MatMul(a, b) => TensorOp::MatMul(map(*a), map(*b)),
            TensorOp::Add(a, b) => TensorOp::Add(map(*a), map(*b)),
            TensorOp::Sub(a, b) => TensorOp::Sub(map(*a), map(*b)),
            TensorOp::Mul(a, b) => TensorOp::Mul(map(*a), map(*b)),
            TensorOp::Div(a, b) => TensorOp::Div(map(*a), map(*b)),
            TensorOp::LessEqual(a, b) => TensorOp::LessEqual(map(*a), map(*b)),
            TensorOp::Equal(a, b) => TensorOp::Equal(map(*a), map(*b)),
            TensorOp::Cast { input, dtype } => TensorOp::Cast {
                input: map(*input),
                dtype: *dtype,
            },
            TensorOp::Sigmoid(a) => TensorOp::Sigmoid(map(*a)),
            TensorOp::ArgMax { input, axis } => TensorOp::ArgMax {
                input: map(*input),
                axis: *axis,
            },
            TensorOp::Concat { inputs, axis } => TensorOp::Concat {
                inputs: inputs.iter().map(|i| map(*i)).collect(),
                axis: *axis,
            },
            TensorOp::Gather {
                input,
                axis,
                indices,
            } => TensorOp::Gather {
                input: map(*input),
                axis: *axis,
                indices: indices.clone(),
            },
        }
    }
}

/// Named input tensors sharing the leading dimension `rows`.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub rows: usize,
    pub inputs: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(rows: usize) -> Self {
        Batch {
            rows,
            inputs: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, tensor: Tensor<T>) -> Self {
        self.inputs.insert(name.into(), tensor);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorGraph<T> {
    nodes: Vec<TensorOp<T>>,
    outputs: Vec<(String, usize)>,
}

impl<T: Scalar> Default for TensorGraph<T> {
    fn default() -> Self {
        TensorGraph::new()
    }
}

impl<T: Scalar> TensorGraph<T> {
    pub fn new() -> Self {
        TensorGraph {
            nodes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Appends a node; operands must already exist.
    pub fn push(&mut self, op: TensorOp<T>) -> usize {
        let id = self.nodes.len();
        for o in op.operands() {
            assert!(o < id, "operand {o} of node {id} does not precede it");
        }
        self.nodes.push(op);
        id
    }

    pub fn input(&mut self, name: impl Into<String>, cols: usize) -> usize {
        self.push(TensorOp::Input {
            name: name.into(),
            cols,
        })
    }

    pub fn constant(&mut self, t: Tensor<T>) -> usize {
        self.push(TensorOp::Constant(t))
    }

    pub fn set_output(&mut self, name: impl Into<String>, node: usize) {
        let name = name.into();
        assert!(node < self.nodes.len());
        self.outputs.retain(|(n, _)| *n != name);
        self.outputs.push((name, node));
    }

    pub fn nodes(&self) -> &[TensorOp<T>] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TensorOp<T> {
        &self.nodes[id]
    }

    pub fn outputs(&self) -> &[(String, usize)] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn from_parts(nodes: Vec<TensorOp<T>>, outputs: Vec<(String, usize)>) -> Self {
        TensorGraph { nodes, outputs }
    }

    /// Input names and widths in node order.
    pub fn input_specs(&self) -> Vec<(&str, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TensorOp::Input { name, cols } => Some((name.as_str(), *cols)),
                _ => None,
            })
            .collect()
    }

    pub fn count(&self, name: &str) -> usize {
        self.nodes.iter().filter(|n| n.name() == name).count()
    }

    /// Static shapes with the batch dimension symbolic.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.nodes.len());
        for (id, op) in self.nodes.iter().enumerate() {
            let err = |message: String| Error::Shape { node: id, message };
            let s = |i: usize| shapes[i];
            let shape = match op {
                TensorOp::Input { cols, .. } => Shape {
                    rows: Dim::Batch,
                    cols: *cols,
                    dtype: DType::Real,
                },
                TensorOp::Constant(t) => Shape {
                    rows: Dim::Fixed(t.rows()),
                    cols: t.cols(),
                    dtype: t.dtype(),
                },
                TensorOp::MatMul(a, b) => {
                    let (a, b) = (s(*a), s(*b));
                    if b.rows != Dim::Fixed(a.cols) {
                        return Err(err(format!("matmul inner dimensions {a} x {b}")));
                    }
                    Shape {
                        rows: a.rows,
                        cols: b.cols,
                        dtype: DType::Real,
                    }
                }
                TensorOp::Add(a, b)
                | TensorOp::Sub(a, b)
                | TensorOp::Mul(a, b)
                | TensorOp::Div(a, b)
                | TensorOp::LessEqual(a, b)
                | TensorOp::Equal(a, b) => {
                    let (x, y) = (s(*a), s(*b));
                    let rows = broadcast_dim(x.rows, y.rows)
                        .ok_or_else(|| err(format!("cannot broadcast {x} with {y}")))?;
                    let cols = broadcast_len(x.cols, y.cols)
                        .ok_or_else(|| err(format!("cannot broadcast {x} with {y}")))?;
                    let dtype = match op {
                        TensorOp::LessEqual(..) | TensorOp::Equal(..) => DType::Int,
                        _ if x.dtype == DType::Int && y.dtype == DType::Int => DType::Int,
                        _ => DType::Real,
                    };
                    Shape { rows, cols, dtype }
                }
                TensorOp::Cast { input, dtype } => Shape {
                    dtype: *dtype,
                    ..s(*input)
                },
                TensorOp::Sigmoid(a) => Shape {
                    dtype: DType::Real,
                    ..s(*a)
                },
                TensorOp::ArgMax { input, axis } => {
                    let x = s(*input);
                    match axis {
                        0 => Shape {
                            rows: Dim::Fixed(1),
                            cols: x.cols,
                            dtype: DType::Int,
                        },
                        1 => Shape {
                            rows: x.rows,
                            cols: 1,
                            dtype: DType::Int,
                        },
                        _ => return Err(err(format!("argmax axis {axis} out of range"))),
                    }
                }
                TensorOp::Concat { inputs, axis } => {
                    if inputs.is_empty() {
                        return Err(err("concat of nothing".into()));
                    }
                    let first = s(inputs[0]);
                    let dtype = if inputs.iter().all(|i| s(*i).dtype == DType::Int) {
                        DType::Int
                    } else {
                        DType::Real
                    };
                    match axis {
                        1 => {
                            let mut rows = first.rows;
                            let mut cols = 0;
                            for i in inputs {
                                rows = broadcast_dim(rows, s(*i).rows).ok_or_else(|| {
                                    err(format!("concat rows {} vs {}", rows, s(*i).rows))
                                })?;
                                cols += s(*i).cols;
                            }
                            Shape { rows, cols, dtype }
                        }
                        0 => {
                            let mut rows = 0;
                            for i in inputs {
                                match s(*i).rows {
                                    Dim::Fixed(n) if s(*i).cols == first.cols => rows += n,
                                    _ => {
                                        return Err(err(format!(
                                            "row concat of {} and {}",
                                            first,
                                            s(*i)
                                        )))
                                    }
                                }
                            }
                            Shape {
                                rows: Dim::Fixed(rows),
                                cols: first.cols,
                                dtype,
                            }
                        }
                        _ => return Err(err(format!("concat axis {axis} out of range"))),
                    }
                }
                TensorOp::Gather {
                    input,
                    axis,
                    indices,
                } => {
                    let x = s(*input);
                    match axis {
                        1 => {
                            if let Some(bad) = indices.iter().find(|i| **i >= x.cols) {
                                return Err(err(format!("gather index {bad} outside {x}")));
                            }
                            Shape {
                                cols: indices.len(),
                                ..x
                            }
                        }
                        0 => match x.rows {
                            Dim::Fixed(n) if indices.iter().all(|i| *i < n) => Shape {
                                rows: Dim::Fixed(indices.len()),
                                ..x
                            },
                            _ => return Err(err(format!("row gather outside {x}"))),
                        },
                        _ => return Err(err(format!("gather axis {axis} out of range"))),
                    }
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    fn live(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        for (_, o) in &self.outputs {
            live[*o] = true;
        }
        for id in (0..self.nodes.len()).rev() {
            if live[id] {
                for &o in self.nodes[id].operand_ids().as_slice() {
                    live[o] = true;
                }
            }
        }
        live
    }

    /// Evaluates every output on a batch. Single-row outputs are repeated
    /// to the batch size.
    pub fn eval(&self, batch: &Batch<T>) -> Result<BTreeMap<String, Tensor<T>>> {
        let outputs = self.eval_with(batch.rows, |name| batch.inputs.get(name))?;
        Ok(self
            .outputs
            .iter()
            .map(|(n, _)| n.clone())
            .zip(outputs)
            .collect())
    }

    /// Evaluates with inputs supplied by a lookup; returns outputs in
    /// declaration order.
    pub fn eval_with<'a>(
        &'a self,
        rows: usize,
        lookup: impl Fn(&str) -> Option<&'a Tensor<T>>,
    ) -> Result<Vec<Tensor<T>>> {
        let live = self.live();
        let mut last_use: Vec<usize> = (0..self.nodes.len()).collect();
        for (id, op) in self.nodes.iter().enumerate() {
            for &i in op.operand_ids().as_slice() {
                last_use[i] = id;
            }
        }
        for (_, id) in &self.outputs {
            last_use[*id] = usize::MAX;
        }
        let mut values: Vec<Option<Cow<'a, Tensor<T>>>> = vec![None; self.nodes.len()];
        for (id, op) in self.nodes.iter().enumerate() {
            if !live[id] {
                continue;
            }
            let err = |message: String| Error::Shape { node: id, message };
            let v = |i: usize| -> &Tensor<T> { values[i].as_deref().expect("operand evaluated") };
            let out: Cow<'a, Tensor<T>> = match op {
                TensorOp::Input { name, cols } => {
                    let t = lookup(name).ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    if t.rows() != rows || t.cols() != *cols {
                        return Err(err(format!(
                            "input `{name}` is [{}, {}], expected [{rows}, {cols}]",
                            t.rows(),
                            t.cols()
                        )));
                    }
                    Cow::Borrowed(t)
                }
                TensorOp::Constant(t) => Cow::Borrowed(t),
                TensorOp::Cast { input, dtype }
                    if last_use[*input] == id && matches!(values[*input], Some(Cow::Owned(_))) =>
                {
                    let Some(Cow::Owned(t)) = values[*input].take() else {
                        unreachable!()
                    };
                    let (r, c) = (t.rows(), t.cols());
                    let mut data = t.into_data();
                    if *dtype == DType::Int {
                        data.iter_mut().for_each(|e| *e = e.trunc());
                    }
                    Cow::Owned(Tensor::new(r, c, data).with_dtype(*dtype))
                }
                other => {
                    let out = match other.operand_ids() {
                        Operands::Fixed(ids, n) => {
                            let args = [v(ids[0]), v(ids[n - 1])];
                            apply(other, &args[..n])
                        }
                        Operands::Slice(ids) => {
                            let args: Vec<&Tensor<T>> = ids.iter().map(|&i| v(i)).collect();
                            apply(other, &args)
                        }
                    };
                    Cow::Owned(out.map_err(err)?)
                }
            };
            values[id] = Some(out);
            for &i in op.operand_ids().as_slice() {
                if last_use[i] == id {
                    values[i] = None;
                }
            }
        }
        self.outputs
            .iter()
            .map(|(name, id)| {
                let t = values[*id].as_deref().expect("output evaluated");
                if t.rows() == rows {
                    Ok(t.clone())
                } else if t.rows() == 1 {
                    Ok(t.broadcast_rows(rows))
                } else {
                    Err(Error::Shape {
                        node: *id,
                        message: format!("output `{name}` has {} rows for a batch of {rows}", t.rows()),
                    })
                }
            })
            .collect()
    }

    /// Node list plus producer-to-consumer edges.
    pub fn to_json(&self) -> Value {
        let shapes = self.infer_shapes().ok();
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, op)| {
                let mut node = json!({ "id": id, "op": op.name() });
                let obj = node.as_object_mut().expect("object");
                match op {
                    TensorOp::Input { name, .. } => {
                        obj.insert("name".into(), json!(name));
                    }
                    TensorOp::Constant(t) => {
                        obj.insert("value".into(), json!(t.to_f64_rows()));
                    }
                    TensorOp::Cast { dtype, .. } => {
                        obj.insert("dtype".into(), json!(format!("{dtype:?}").to_lowercase()));
                    }
                    TensorOp::ArgMax { axis, .. } | TensorOp::Concat { axis, .. } => {
                        obj.insert("axis".into(), json!(axis));
                    }
                    TensorOp::Gather { axis, indices, .. } => {
                        obj.insert("axis".into(), json!(axis));
                        obj.insert("indices".into(), json!(indices));
                    }
                    _ => {}
                }
                if let Some(shapes) = &shapes {
                    obj.insert("shape".into(), json!(shapes[id].to_string()));
                }
                node
            })
            .collect();
        let edges: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(id, op)| op.operands().into_iter().map(move |o| json!([o, id])))
            .collect();
        let outputs: serde_json::Map<String, Value> = self
            .outputs
            .iter()
            .map(|(n, id)| (n.clone(), json!(id)))
            .collect();
        json!({ "nodes": nodes, "edges": edges, "outputs": outputs })
    }
}

/// Computes a non-leaf op from evaluated operands.
pub(crate) fn apply<T: Scalar>(op: &TensorOp<T>, args: &[&Tensor<T>]) -> std::result::Result<Tensor<T>, String> {
    let bool_of = |c: bool| if c { T::one() } else { T::zero() };
    match op {
        TensorOp::Input { name, .. } => Err(format!("input `{name}` has no operands")),
        TensorOp::Constant(t) => Ok(t.clone()),
        TensorOp::MatMul(..) => matmul(args[0], args[1]),
        TensorOp::Add(..) => elementwise(args[0], args[1], |x, y| x + y, false),
        TensorOp::Sub(..) => elementwise(args[0], args[1], |x, y| x - y, false),
        TensorOp::Mul(..) => elementwise(args[0], args[1], |x, y| x * y, false),
        TensorOp::Div(..) => elementwise(args[0], args[1], |x, y| x / y, false),
        TensorOp::LessEqual(..) => elementwise(args[0], args[1], |x, y| bool_of(x <= y), true),
        TensorOp::Equal(..) => elementwise(args[0], args[1], |x, y| bool_of(x == y), true),
        TensorOp::Cast { dtype, .. } => {
            let x = args[0];
            let data = match dtype {
                DType::Int => x.data().iter().map(|e| e.trunc()).collect(),
                DType::Real => x.data().to_vec(),
            };
            Ok(Tensor::new(x.rows(), x.cols(), data).with_dtype(*dtype))
        }
        TensorOp::Sigmoid(_) => {
            let x = args[0];
            Ok(Tensor::new(x.rows(), x.cols(), x.data().iter().map(|e| e.sigmoid()).collect()))
        }
        TensorOp::ArgMax { axis, .. } => argmax(args[0], *axis),
        TensorOp::Concat { axis, .. } => concat(args, *axis),
        TensorOp::Gather { axis, indices, .. } => gather(args[0], *axis, indices),
    }
}

fn broadcast_dim(a: Dim, b: Dim) -> Option<Dim> {
    match (a, b) {
        (Dim::Fixed(1), x) | (x, Dim::Fixed(1)) => Some(x),
        (Dim::Batch, Dim::Batch) => Some(Dim::Batch),
        (Dim::Fixed(x), Dim::Fixed(y)) if x == y => Some(a),
        _ => None,
    }
}

fn broadcast_len(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        (1, x) | (x, 1) => Some(x),
        (x, y) if x == y => Some(x),
        _ => None,
    }
}

fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> std::result::Result<Tensor<T>, String> {
    if a.cols() != b.rows() {
        return Err(format!(
            "matmul inner dimensions [{}, {}] x [{}, {}]",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); n * m];
    let (ad, bd) = (a.data(), b.data());
    if m == 0 || k == 0 {
        return Ok(Tensor::new(n, m, out));
    }
    for (row, arow) in out.chunks_exact_mut(m).zip(ad.chunks_exact(k)) {
        for (&x, brow) in arow.iter().zip(bd.chunks_exact(m)) {
            if x == T::zero() {
                continue;
            }
            for (o, w) in row.iter_mut().zip(brow) {
                *o = *o + x * *w;
            }
        }
    }
    Ok(Tensor::new(n, m, out))
}

fn elementwise<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
    to_int: bool,
) -> std::result::Result<Tensor<T>, String> {
    let shape_err = || {
        format!(
            "cannot broadcast [{}, {}] with [{}, {}]",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )
    };
    let rows = broadcast_len(a.rows(), b.rows()).ok_or_else(shape_err)?;
    let cols = broadcast_len(a.cols(), b.cols()).ok_or_else(shape_err)?;
    let dtype = if to_int || (a.dtype() == DType::Int && b.dtype() == DType::Int) {
        DType::Int
    } else {
        DType::Real
    };
    let data = if a.rows() == b.rows() && a.cols() == b.cols() {
        a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect()
    } else if b.rows() == 1 && b.cols() == cols && a.cols() == cols {
        let bd = b.data();
        let mut data = Vec::with_capacity(rows * cols);
        for r in a.data().chunks(cols.max(1)) {
            data.extend(r.iter().zip(bd).map(|(x, y)| f(*x, *y)));
        }
        data
    } else {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = a.get(if a.rows() == 1 { 0 } else { r }, if a.cols() == 1 { 0 } else { c });
                let y = b.get(if b.rows() == 1 { 0 } else { r }, if b.cols() == 1 { 0 } else { c });
                data.push(f(x, y));
            }
        }
        data
    };
    Ok(Tensor::new(rows, cols, data).with_dtype(dtype))
}

fn argmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> std::result::Result<Tensor<T>, String> {
    let pick = |len: usize, at: &dyn Fn(usize) -> T| -> T {
        let mut best = 0;
        for i in 1..len {
            if at(i) > at(best) {
                best = i;
            }
        }
        T::from_index(best)
    };
    let t = match axis {
        1 => Tensor::new(
            x.rows(),
            1,
            (0..x.rows()).map(|r| pick(x.cols(), &|c| x.get(r, c))).collect(),
        ),
        0 => Tensor::new(
            1,
            x.cols(),
            (0..x.cols()).map(|c| pick(x.rows(), &|r| x.get(r, c))).collect(),
        ),
        _ => return Err(format!("argmax axis {axis} out of range")),
    };
    Ok(t.with_dtype(DType::Int))
}

fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> std::result::Result<Tensor<T>, String> {
    let dtype = if parts.iter().all(|p| p.dtype() == DType::Int) {
        DType::Int
    } else {
        DType::Real
    };
    match axis {
        1 => {
            let rows = parts.iter().map(|p| p.rows()).max().unwrap_or(0);
            if let Some(p) = parts.iter().find(|p| p.rows() != rows && p.rows() != 1) {
                return Err(format!("concat rows {} vs {rows}", p.rows()));
            }
            let cols: usize = parts.iter().map(|p| p.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    let pr = if p.rows() == 1 { 0 } else { r };
                    data.extend_from_slice(&p.data()[pr * p.cols()..(pr + 1) * p.cols()]);
                }
            }
            Ok(Tensor::new(rows, cols, data).with_dtype(dtype))
        }
        0 => {
            let cols = parts.first().map_or(0, |p| p.cols());
            if parts.iter().any(|p| p.cols() != cols) {
                return Err("row concat with differing widths".into());
            }
            let rows = parts.iter().map(|p| p.rows()).sum();
            let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            Ok(Tensor::new(rows, cols, data).with_dtype(dtype))
        }
        _ => Err(format!("concat axis {axis} out of range")),
    }
}

fn gather<T: Scalar>(
    x: &Tensor<T>,
    axis: usize,
    indices: &[usize],
) -> std::result::Result<Tensor<T>, String> {
    match axis {
        1 => {
            if let Some(bad) = indices.iter().find(|i| **i >= x.cols()) {
                return Err(format!("gather index {bad} outside {} columns", x.cols()));
            }
            let mut data = Vec::with_capacity(x.rows() * indices.len());
            for r in 0..x.rows() {
                for &c in indices {
                    data.push(x.get(r, c));
                }
            }
            Ok(Tensor::new(x.rows(), indices.len(), data).with_dtype(x.dtype()))
        }
        0 => {
            if let Some(bad) = indices.iter().find(|i| **i >= x.rows()) {
                return Err(format!("gather index {bad} outside {} rows", x.rows()));
            }
            let data = indices
                .iter()
                .flat_map(|&r| x.data()[r * x.cols()..(r + 1) * x.cols()].iter().copied())
                .collect();
            Ok(Tensor::new(indices.len(), x.cols(), data).with_dtype(x.dtype()))
        }
        _ => Err(format!("gather axis {axis} out of range")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_graph_returns_input() {
        let mut g = TensorGraph::<f64>::new();
        let x = g.input("x", 2);
        g.set_output("y", x);
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let out = g.eval(&Batch::new(2).with("x", t.clone())).unwrap();
        assert_eq!(out["y"], t);
    }

    #[test]
    fn matmul_shape_mismatch_names_node() {
        let mut g = TensorGraph::<f64>::new();
        let x = g.input("x", 2);
        let w = g.constant(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]));
        let m = g.push(TensorOp::MatMul(x, w));
        g.set_output("y", m);
        assert!(matches!(g.infer_shapes(), Err(Error::Shape { node: 2, .. })));
        let err = g
            .eval(&Batch::new(1).with("x", Tensor::row(&[1.0, 1.0])))
            .unwrap_err();
        assert!(matches!(err, Error::Shape { node: 2, .. }));
    }

    #[test]
    fn unbound_input_is_reported() {
        let mut g = TensorGraph::<f64>::new();
        let x = g.input("x", 1);
        g.set_output("y", x);
        assert!(matches!(g.eval(&Batch::new(1)), Err(Error::UnboundInput(_))));
    }

    #[test]
    fn broadcasting_and_argmax() {
        let mut g = TensorGraph::<f32>::new();
        let x = g.input("x", 3);
        let b = g.constant(Tensor::row(&[0.0, 1.0, 0.0]));
        let s = g.push(TensorOp::Add(x, b));
        let a = g.push(TensorOp::ArgMax { input: s, axis: 1 });
        g.set_output("label", a);
        let t = Tensor::from_rows(&[vec![1.0, 0.0, 0.5], vec![2.0, 2.0, 3.0]]);
        let out = g.eval(&Batch::new(2).with("x", t)).unwrap();
        // ties resolve to the lowest index
        assert_eq!(out["label"].data(), &[0.0, 1.0]);
        assert_eq!(out["label"].dtype(), DType::Int);
    }
}

enum Operands<'a> {
    Fixed([usize; 2], usize),
    Slice(&'a [usize]),
}

impl Operands<'_> {
    fn as_slice(&self) -> &[usize] {
        match self {
            Operands::Fixed(ids, n) => &ids[..*n],
            Operands::Slice(ids) => ids,
        }
    }
}
