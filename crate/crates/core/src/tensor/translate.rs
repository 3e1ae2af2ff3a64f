use std::collections::BTreeMap;
use std::sync::Arc;

use super::graph::{TensorGraph, TensorOp};
use super::{DType, Tensor};
use crate::error::{Error, Result};
use crate::ir::{
    Aggregation, DataType, Featurizer, Link, Model, ModelPipeline, OutputKind, Tree, TreeNode,
    UnknownPolicy,
};
use crate::scalar::Scalar;

/// The three-stage matrix form of one tree over a feature vector `X`:
/// `S = (X A <= B)`, `I = (S C == D)`, `values = I E`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeMatrices {
    /// `features x internal`, one 1 per column selecting the split feature.
    pub a: Vec<Vec<f64>>,
    /// Per internal node threshold.
    pub b: Vec<f64>,
    /// `internal x leaves`: +1 when the leaf lies left of the node, -1 when
    /// right, 0 when the node is not an ancestor.
    pub c: Vec<Vec<f64>>,
    /// Per leaf count of left edges on its root path.
    pub d: Vec<f64>,
    /// `leaves x arity` leaf values.
    pub e: Vec<Vec<f64>>,
}

impl TreeMatrices {
    pub fn new(tree: &Tree, feature_count: usize, feature_index: impl Fn(&str) -> usize) -> Self {
        let mut internal = BTreeMap::new();
        let mut leaves = BTreeMap::new();
        for (i, n) in tree.nodes().iter().enumerate() {
            if n.is_leaf() {
                leaves.insert(i, leaves.len());
            } else {
                internal.insert(i, internal.len());
            }
        }
        let mut a = vec![vec![0.0; internal.len()]; feature_count];
        let mut b = vec![0.0; internal.len()];
        let mut c = vec![vec![0.0; leaves.len()]; internal.len()];
        let mut d = vec![0.0; leaves.len()];
        let mut e = vec![Vec::new(); leaves.len()];
        let mut stack: Vec<(usize, Vec<(usize, bool)>)> = vec![(0, Vec::new())];
        while let Some((i, path)) = stack.pop() {
            match tree.node(i) {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let k = internal[&i];
                    a[feature_index(feature)][k] = 1.0;
                    b[k] = *threshold;
                    let mut lp = path.clone();
                    lp.push((k, true));
                    let mut rp = path;
                    rp.push((k, false));
                    stack.push((*left, lp));
                    stack.push((*right, rp));
                }
                TreeNode::Leaf { values } => {
                    let l = leaves[&i];
                    for (k, went_left) in path {
                        c[k][l] = if went_left { 1.0 } else { -1.0 };
                        if went_left {
                            d[l] += 1.0;
                        }
                    }
                    e[l] = values.clone();
                }
            }
        }
        TreeMatrices { a, b, c, d, e }
    }
}

/// How the executor feeds one graph input: numeric/boolean values as-is,
/// categoricals as their index in `categories` (-1 when unknown).
#[derive(Clone, Debug, PartialEq)]
pub struct TensorInputSpec {
    pub name: String,
    pub data_type: DataType,
    pub categories: Option<Vec<String>>,
    /// Unknown categories are an error rather than all-zeros.
    pub strict: bool,
}

/// A pipeline lowered to a tensor graph, with the pipeline kept for
/// reference and direct fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorModel {
    pub graph: TensorGraph<f64>,
    pub inputs: Vec<TensorInputSpec>,
    pub source: Arc<ModelPipeline>,
}

impl TensorModel {
    pub fn from_pipeline(pipeline: Arc<ModelPipeline>) -> Result<TensorModel> {
        let graph = translate_pipeline(&pipeline)?;
        Ok(TensorModel::with_graph(pipeline, graph))
    }

    /// Wraps an already lowered (for instance folded) graph.
    pub fn with_graph(pipeline: Arc<ModelPipeline>, graph: TensorGraph<f64>) -> TensorModel {
        let inputs = graph
            .input_specs()
            .iter()
            .map(|(name, _)| {
                let i = pipeline.input_index(name).expect("graph input is a pipeline input");
                let p = &pipeline.inputs()[i];
                let (categories, strict) = match pipeline.featurizer_for(name) {
                    Some(Featurizer::OneHot {
                        categories,
                        unknown,
                        ..
                    }) => (Some(categories.clone()), *unknown == UnknownPolicy::Error),
                    _ => (None, false),
                };
                TensorInputSpec {
                    name: p.name.clone(),
                    data_type: p.data_type,
                    categories,
                    strict,
                }
            })
            .collect();
        TensorModel {
            graph,
            inputs,
            source: pipeline,
        }
    }

    pub fn output_width(&self) -> usize {
        self.source.output_width()
    }
}

/// Lowers a pipeline to a graph with one `[N, 1]` input per used pipeline
/// input and a single output named `output`.
pub fn translate_pipeline<T: Scalar>(pipeline: &ModelPipeline) -> Result<TensorGraph<T>> {
    let mut g = TensorGraph::<T>::new();
    let used = pipeline.used_features();
    let model_features = pipeline.model().features();
    let mut parts = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for input in pipeline.inputs() {
        if !used.contains(&input.name) {
            continue;
        }
        let x = g.input(input.name.clone(), 1);
        let column = &input.name;
        match pipeline.featurizer_for(column) {
            Some(Featurizer::OneHot { categories, .. }) => {
                let codes: Vec<f64> = (0..categories.len()).map(|k| k as f64).collect();
                let cats = g.constant(Tensor::row(&codes));
                let eq = g.push(TensorOp::Equal(x, cats));
                let onehot = g.push(TensorOp::Cast {
                    input: eq,
                    dtype: DType::Real,
                });
                let picked: Vec<usize> = (0..categories.len())
                    .filter(|k| model_features.contains(&crate::ir::onehot_feature(column, &categories[*k])))
                    .collect();
                for k in &picked {
                    index.insert(crate::ir::onehot_feature(column, &categories[*k]), index.len());
                }
                let part = if picked.len() == categories.len() {
                    onehot
                } else {
                    g.push(TensorOp::Gather {
                        input: onehot,
                        axis: 1,
                        indices: picked,
                    })
                };
                parts.push(part);
            }
            Some(Featurizer::StandardScale { mean, std, .. }) => {
                let m = g.constant(Tensor::scalar(*mean));
                let s = g.constant(Tensor::scalar(*std));
                let centered = g.push(TensorOp::Sub(x, m));
                parts.push(g.push(TensorOp::Div(centered, s)));
                index.insert(column.clone(), index.len());
            }
            None => {
                if input.data_type == DataType::Categorical {
                    return Err(Error::Model(format!(
                        "categorical input `{column}` is used without an encoder"
                    )));
                }
                parts.push(x);
                index.insert(column.clone(), index.len());
            }
        }
    }
    let features = index.len();
    let x = match parts.len() {
        0 => None,
        1 => Some(parts[0]),
        _ => Some(g.push(TensorOp::Concat {
            inputs: parts,
            axis: 1,
        })),
    };
    let feature_index = |f: &str| index[f];
    let arity = pipeline.model().output_arity();
    let scores = match pipeline.model() {
        Model::Linear {
            weights,
            intercept,
            link,
        } => {
            let b = g.constant(Tensor::scalar(*intercept));
            let z = match x {
                Some(x) => {
                    let mut w = vec![0.0; features];
                    for (f, v) in weights {
                        if *v != 0.0 {
                            w[feature_index(f)] = *v;
                        }
                    }
                    let w = g.constant(Tensor::column(&w));
                    let m = g.push(TensorOp::MatMul(x, w));
                    g.push(TensorOp::Add(m, b))
                }
                None => b,
            };
            match link {
                Link::Identity => z,
                Link::Sigmoid => g.push(TensorOp::Sigmoid(z)),
            }
        }
        Model::DecisionTree(t) => lower_tree(&mut g, t, x, features, &feature_index),
        Model::TreeEnsemble { trees, aggregation } => {
            let mut acc = lower_tree(&mut g, &trees[0], x, features, &feature_index);
            for t in &trees[1..] {
                let v = lower_tree(&mut g, t, x, features, &feature_index);
                acc = g.push(TensorOp::Add(acc, v));
            }
            if *aggregation == Aggregation::Mean {
                let n = g.constant(Tensor::scalar(trees.len() as f64));
                acc = g.push(TensorOp::Div(acc, n));
            }
            acc
        }
    };
    let out = match pipeline.output() {
        OutputKind::Scores => scores,
        OutputKind::Label => {
            let label = g.push(TensorOp::ArgMax {
                input: scores,
                axis: 1,
            });
            g.push(TensorOp::Cast {
                input: label,
                dtype: DType::Real,
            })
        }
    };
    debug_assert!(arity > 0);
    g.set_output("output", out);
    g.infer_shapes()?;
    Ok(g)
}

fn lower_tree<T: Scalar>(
    g: &mut TensorGraph<T>,
    tree: &Tree,
    x: Option<usize>,
    features: usize,
    feature_index: &impl Fn(&str) -> usize,
) -> usize {
    let m = TreeMatrices::new(tree, features, feature_index);
    let Some(x) = x.filter(|_| !m.b.is_empty()) else {
        // A single leaf: its values, broadcast over the batch.
        return g.constant(Tensor::row(&m.e[0]));
    };
    let a = g.constant(Tensor::from_rows(&m.a));
    let b = g.constant(Tensor::row(&m.b));
    let c = g.constant(Tensor::from_rows(&m.c));
    let d = g.constant(Tensor::row(&m.d));
    let e = g.constant(Tensor::from_rows(&m.e));
    let xa = g.push(TensorOp::MatMul(x, a));
    let le = g.push(TensorOp::LessEqual(xa, b));
    let s = g.push(TensorOp::Cast {
        input: le,
        dtype: DType::Real,
    });
    let sc = g.push(TensorOp::MatMul(s, c));
    let eq = g.push(TensorOp::Equal(sc, d));
    let ind = g.push(TensorOp::Cast {
        input: eq,
        dtype: DType::Real,
    });
    g.push(TensorOp::MatMul(ind, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{onehot_feature, PipelineInput, TreeShape};
    use crate::tensor::Batch;

    fn bp_tree() -> ModelPipeline {
        let tree = Tree::from_shape(&TreeShape::split(
            "bp",
            140.0,
            TreeShape::leaf(2.0),
            TreeShape::leaf(9.0),
        ))
        .unwrap();
        ModelPipeline::new(
            vec![PipelineInput::new("bp", DataType::Numeric)],
            vec![],
            Model::DecisionTree(tree),
            OutputKind::Scores,
        )
        .unwrap()
    }

    #[test]
    fn single_split_matrices() {
        let p = bp_tree();
        let Model::DecisionTree(t) = p.model() else { unreachable!() };
        let m = TreeMatrices::new(t, 1, |_| 0);
        assert_eq!(m.a, vec![vec![1.0]]);
        assert_eq!(m.b, vec![140.0]);
        assert_eq!(m.c, vec![vec![1.0, -1.0]]);
        assert_eq!(m.d, vec![1.0, 0.0]);
        assert_eq!(m.e, vec![vec![2.0], vec![9.0]]);
    }

    #[test]
    fn single_split_graph_scores_by_hand() {
        let g: TensorGraph<f64> = translate_pipeline(&bp_tree()).unwrap();
        let out = g
            .eval(&Batch::new(2).with("bp", Tensor::column(&[150.0, 120.0])))
            .unwrap();
        assert_eq!(out["output"].data(), &[9.0, 2.0]);
    }

    #[test]
    fn linear_dot_product() {
        let p = ModelPipeline::new(
            vec![
                PipelineInput::new("x1", DataType::Numeric),
                PipelineInput::new("x2", DataType::Numeric),
            ],
            vec![],
            Model::linear(vec![("x1".into(), 2.0), ("x2".into(), -1.0)], 0.5, Link::Identity).unwrap(),
            OutputKind::Scores,
        )
        .unwrap();
        let g: TensorGraph<f64> = translate_pipeline(&p).unwrap();
        assert_eq!(g.count("MatMul"), 1);
        let out = g
            .eval(
                &Batch::new(1)
                    .with("x1", Tensor::scalar(1.0))
                    .with("x2", Tensor::scalar(1.0)),
            )
            .unwrap();
        assert_eq!(out["output"].data(), &[1.5]);
    }

    #[test]
    fn onehot_lowering_matches_direct() {
        let cats: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = ModelPipeline::new(
            vec![PipelineInput::new("k", DataType::Categorical)],
            vec![Featurizer::OneHot {
                column: "k".into(),
                categories: cats.clone(),
                unknown: UnknownPolicy::Zeros,
            }],
            Model::linear(
                vec![(onehot_feature("k", "a"), 1.0), (onehot_feature("k", "c"), 3.0)],
                0.25,
                Link::Sigmoid,
            )
            .unwrap(),
            OutputKind::Scores,
        )
        .unwrap();
        let g: TensorGraph<f64> = translate_pipeline(&p).unwrap();
        let codes = [0.0, 1.0, 2.0, -1.0];
        let out = g.eval(&Batch::new(4).with("k", Tensor::column(&codes))).unwrap();
        for (r, code) in codes.iter().enumerate() {
            assert_eq!(out["output"].get(r, 0), p.eval_encoded(&[*code]).unwrap()[0]);
        }
    }
}
