use std::collections::{BTreeMap, HashMap};

use super::graph::{apply, TensorGraph, TensorOp};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Replaces bound inputs by constants and precomputes what becomes
/// constant. Besides plain folding of all-constant nodes, a product
/// `Concat(parts) x W` with constant parts feeding an `Add` or `LessEqual`
/// against a constant has the constant parts' contribution moved into that
/// constant, dropping the parts from the product. Unreachable nodes are
/// removed, so the result never has more nodes than the input.
pub fn const_fold<T: Scalar>(
    graph: &TensorGraph<T>,
    bindings: &BTreeMap<String, Tensor<T>>,
) -> Result<TensorGraph<T>> {
    graph.infer_shapes()?;
    let mut nodes: Vec<TensorOp<T>> = Vec::with_capacity(graph.len());
    for (id, op) in graph.nodes().iter().enumerate() {
        match op {
            TensorOp::Input { name, cols } if bindings.contains_key(name) => {
                let t = &bindings[name];
                if t.cols() != *cols || t.rows() != 1 {
                    return Err(Error::Shape {
                        node: id,
                        message: format!(
                            "binding for `{name}` is [{}, {}], expected [1, {cols}]",
                            t.rows(),
                            t.cols()
                        ),
                    });
                }
                nodes.push(TensorOp::Constant(t.clone()));
            }
            other => nodes.push(other.clone()),
        }
    }
    fold_constants(&mut nodes)?;
    let mut outputs = graph.outputs().to_vec();
    let mut nodes = absorb_constant_parts(nodes, &mut outputs);
    fold_constants(&mut nodes)?;
    Ok(prune_dead(nodes, outputs))
}

fn constant<T>(nodes: &[TensorOp<T>], id: usize) -> Option<&Tensor<T>> {
    match &nodes[id] {
        TensorOp::Constant(t) => Some(t),
        _ => None,
    }
}

fn fold_constants<T: Scalar>(nodes: &mut [TensorOp<T>]) -> Result<()> {
    for id in 0..nodes.len() {
        let operands = nodes[id].operands();
        if operands.is_empty() || !operands.iter().all(|o| constant(nodes, *o).is_some()) {
            continue;
        }
        let args: Vec<&Tensor<T>> = operands.iter().map(|o| constant(nodes, *o).unwrap()).collect();
        let value = apply(&nodes[id], &args).map_err(|message| Error::Shape { node: id, message })?;
        nodes[id] = TensorOp::Constant(value);
    }
    Ok(())
}

struct Absorbed {
    weight_rest: Tensor<f64>,
    /// Constant parts' contribution, one row.
    delta: Vec<f64>,
    parts_rest: Vec<usize>,
}

/// Splits `Concat(parts) x W` into the constant parts' contribution and the
/// remaining product, if any part is a single-row constant.
fn split_product<T: Scalar>(nodes: &[TensorOp<T>], widths: &[usize], mm: usize) -> Option<Absorbed> {
    let TensorOp::MatMul(x, w) = &nodes[mm] else {
        return None;
    };
    let w = constant(nodes, *w)?;
    let TensorOp::Concat { inputs: parts, axis: 1 } = &nodes[*x] else {
        return None;
    };
    let mut delta = vec![0.0; w.cols()];
    let mut kept_rows = Vec::new();
    let mut parts_rest = Vec::new();
    let mut offset = 0;
    let mut absorbed_any = false;
    for &p in parts {
        let cols = match constant(nodes, p) {
            Some(c) if c.rows() == 1 => {
                for k in 0..c.cols() {
                    let v = c.get(0, k).to_param();
                    if v != 0.0 {
                        for (j, d) in delta.iter_mut().enumerate() {
                            *d += v * w.get(offset + k, j).to_param();
                        }
                    }
                }
                absorbed_any = true;
                c.cols()
            }
            _ => {
                parts_rest.push(p);
                let cols = widths[p];
                kept_rows.extend(offset..offset + cols);
                cols
            }
        };
        offset += cols;
    }
    if !absorbed_any || parts_rest.is_empty() || offset != w.rows() {
        return None;
    }
    let data = kept_rows
        .iter()
        .flat_map(|&r| (0..w.cols()).map(move |j| (r, j)))
        .map(|(r, j)| w.get(r, j).to_param())
        .collect();
    Some(Absorbed {
        weight_rest: Tensor::new(kept_rows.len(), w.cols(), data),
        delta,
        parts_rest,
    })
}

fn absorb_constant_parts<T: Scalar>(
    nodes: Vec<TensorOp<T>>,
    outputs: &mut [(String, usize)],
) -> Vec<TensorOp<T>> {
    let mut uses = vec![0usize; nodes.len()];
    for op in &nodes {
        for o in op.operands() {
            uses[o] += 1;
        }
    }
    for (_, o) in outputs.iter() {
        uses[*o] += 1;
    }
    let Ok(shapes) = TensorGraph::from_parts(nodes.clone(), outputs.to_vec()).infer_shapes() else {
        return nodes;
    };
    let widths: Vec<usize> = shapes.iter().map(|s| s.cols).collect();
    let mut out: Vec<TensorOp<T>> = Vec::with_capacity(nodes.len());
    let mut map: Vec<usize> = Vec::with_capacity(nodes.len());
    let mut concat_memo: HashMap<Vec<usize>, usize> = HashMap::new();
    for op in nodes.iter() {
        // (product, constant operand, is-threshold)
        let pattern = match op {
            TensorOp::LessEqual(a, b) if constant(&nodes, *b).is_some() => Some((*a, *b, true)),
            TensorOp::Add(a, b) if constant(&nodes, *b).is_some() => Some((*a, *b, false)),
            TensorOp::Add(a, b) if constant(&nodes, *a).is_some() => Some((*b, *a, false)),
            _ => None,
        };
        let rewritten = pattern.and_then(|(mm, c, threshold)| {
            if uses[mm] != 1 {
                return None;
            }
            let split = split_product(&nodes, &widths, mm)?;
            let bound = constant(&nodes, c)?;
            if bound.rows() != 1 || (bound.cols() != split.delta.len() && bound.cols() != 1) {
                return None;
            }
            Some((split, bound.clone(), threshold))
        });
        let Some((split, bound, threshold)) = rewritten else {
            out.push(op.remap(|o| map[o]));
            map.push(out.len() - 1);
            continue;
        };
        let parts: Vec<usize> = split.parts_rest.iter().map(|p| map[*p]).collect();
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            *concat_memo.entry(parts.clone()).or_insert_with(|| {
                out.push(TensorOp::Concat {
                    inputs: parts.clone(),
                    axis: 1,
                });
                out.len() - 1
            })
        };
        let weight = split.weight_rest.data().iter().map(|v| T::from_param(*v)).collect();
        out.push(TensorOp::Constant(Tensor::new(
            split.weight_rest.rows(),
            split.weight_rest.cols(),
            weight,
        )));
        let w = out.len() - 1;
        out.push(TensorOp::MatMul(x, w));
        let product = out.len() - 1;
        let adjusted: Vec<T> = split
            .delta
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let b = bound.get(0, if bound.cols() == 1 { 0 } else { j });
                if threshold {
                    b - T::from_param(*d)
                } else {
                    b + T::from_param(*d)
                }
            })
            .collect();
        out.push(TensorOp::Constant(Tensor::new(1, adjusted.len(), adjusted)));
        let c = out.len() - 1;
        out.push(if threshold {
            TensorOp::LessEqual(product, c)
        } else {
            TensorOp::Add(product, c)
        });
        map.push(out.len() - 1);
    }
    for (_, o) in outputs.iter_mut() {
        *o = map[*o];
    }
    out
}

fn prune_dead<T: Scalar>(nodes: Vec<TensorOp<T>>, outputs: Vec<(String, usize)>) -> TensorGraph<T> {
    let mut live = vec![false; nodes.len()];
    for (_, o) in &outputs {
        live[*o] = true;
    }
    for id in (0..nodes.len()).rev() {
        if live[id] {
            for o in nodes[id].operands() {
                live[o] = true;
            }
        }
    }
    let mut map = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for (id, op) in nodes.iter().enumerate() {
        if live[id] {
            kept.push(op.remap(|o| map[o]));
            map[id] = kept.len() - 1;
        }
    }
    let outputs = outputs.into_iter().map(|(n, o)| (n, map[o])).collect();
    TensorGraph::from_parts(kept, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Batch;

    #[test]
    fn no_bindings_keeps_graph() {
        let mut g = TensorGraph::<f64>::new();
        let x = g.input("x", 1);
        let c = g.constant(Tensor::scalar(2.0));
        let m = g.push(TensorOp::Mul(x, c));
        g.set_output("y", m);
        assert_eq!(const_fold(&g, &BTreeMap::new()).unwrap(), g);
    }

    #[test]
    fn fully_constant_graph_collapses_to_one_node() {
        let mut g = TensorGraph::<f64>::new();
        let x = g.input("x", 1);
        let c = g.constant(Tensor::scalar(2.0));
        let m = g.push(TensorOp::Mul(x, c));
        let s = g.push(TensorOp::Sigmoid(m));
        g.set_output("y", s);
        let folded = const_fold(&g, &[("x".to_string(), Tensor::scalar(0.0))].into()).unwrap();
        assert_eq!(folded.len(), 1);
        let out = folded.eval(&Batch::new(3)).unwrap();
        assert_eq!(out["y"].data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn constant_concat_part_moves_into_threshold() {
        let mut g = TensorGraph::<f64>::new();
        let a = g.input("a", 1);
        let p = g.input("p", 1);
        let x = g.push(TensorOp::Concat {
            inputs: vec![a, p],
            axis: 1,
        });
        let w = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let m = g.push(TensorOp::MatMul(x, w));
        let b = g.constant(Tensor::row(&[3.0, 0.5]));
        let le = g.push(TensorOp::LessEqual(m, b));
        g.set_output("s", le);
        let folded = const_fold(&g, &[("p".to_string(), Tensor::scalar(1.0))].into()).unwrap();
        assert!(folded.len() < g.len());
        assert_eq!(folded.count("Input"), 1);
        for v in [2.0, 3.0, 4.0] {
            let full = g
                .eval(&Batch::new(1).with("a", Tensor::scalar(v)).with("p", Tensor::scalar(1.0)))
                .unwrap();
            let part = folded.eval(&Batch::new(1).with("a", Tensor::scalar(v))).unwrap();
            assert_eq!(full["s"].data(), part["s"].data());
        }
    }
}
