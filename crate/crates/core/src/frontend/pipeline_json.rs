//! JSON pipeline documents.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "inputs": [{"name": "age", "type": "numeric"}, {"name": "gender", "type": "categorical"}],
//!   "featurizers": [
//!     {"type": "one_hot", "column": "gender", "categories": ["F", "M"], "unknown": "zeros"},
//!     {"type": "standard_scale", "column": "age", "mean": 40.0, "std": 12.5}
//!   ],
//!   "model": {"type": "decision_tree", "nodes": [
//!     {"id": 0, "feature": "age", "threshold": 0.5, "left": 1, "right": 2},
//!     {"id": 1, "value": [3.0]},
//!     {"id": 2, "value": [9.0]}
//!   ]},
//!   "output": "scores"
//! }
//! ```
//!
//! `tree_ensemble` models carry `aggregation` (`sum` | `mean`) and
//! `trees: [{"nodes": [...]}]`; `linear` models carry
//! `weights: [{"feature": f, "weight": w}]`, `intercept` and `link`
//! (`identity` | `sigmoid`). The root of a tree is its first node.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ir::{
    Aggregation, DataType, Featurizer, Link, Model, ModelPipeline, OutputKind, PipelineInput, Tree,
    TreeNode, UnknownPolicy,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Doc {
    format_version: u32,
    inputs: Vec<InputDoc>,
    featurizers: Vec<FeaturizerDoc>,
    model: ModelDoc,
    output: OutputDoc,
}

/// Tagged sections are read through `Value` so error paths survive.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    format_version: u32,
    inputs: Vec<InputDoc>,
    #[serde(default)]
    featurizers: Vec<Value>,
    model: Value,
    output: OutputDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OneHotDoc {
    column: String,
    categories: Vec<String>,
    #[serde(default = "default_unknown")]
    unknown: UnknownDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleDoc {
    column: String,
    mean: f64,
    std: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleDoc {
    aggregation: AggDoc,
    trees: Vec<TreeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearDoc {
    weights: Vec<WeightDoc>,
    intercept: f64,
    #[serde(default = "default_link")]
    link: LinkDoc,
}

fn typed<T: DeserializeOwned>(value: Value, path: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        doc_err(full, e.into_inner().to_string())
    })
}

/// Splits off the `type` tag of a tagged section.
fn tagged(value: Value, path: &str) -> Result<(String, Value)> {
    let Value::Object(mut map) = value else {
        return Err(doc_err(path, "expected an object"));
    };
    match map.remove("type") {
        Some(Value::String(t)) => Ok((t, Value::Object(map))),
        Some(_) => Err(doc_err(format!("{path}.type"), "expected a string")),
        None => Err(doc_err(path, "missing field `type`")),
    }
}

fn featurizer_from_value(value: Value, path: &str) -> Result<FeaturizerDoc> {
    let (kind, rest) = tagged(value, path)?;
    match kind.as_str() {
        "one_hot" => {
            let d: OneHotDoc = typed(rest, path)?;
            Ok(FeaturizerDoc::OneHot {
                column: d.column,
                categories: d.categories,
                unknown: d.unknown,
            })
        }
        "standard_scale" => {
            let d: ScaleDoc = typed(rest, path)?;
            Ok(FeaturizerDoc::StandardScale {
                column: d.column,
                mean: d.mean,
                std: d.std,
            })
        }
        other => Err(doc_err(
            format!("{path}.type"),
            format!("unknown featurizer `{other}`, expected one_hot or standard_scale"),
        )),
    }
}

fn model_from_value(value: Value) -> Result<ModelDoc> {
    let (kind, rest) = tagged(value, "model")?;
    match kind.as_str() {
        "decision_tree" => Ok(ModelDoc::DecisionTree {
            nodes: typed::<TreeDoc>(rest, "model")?.nodes,
        }),
        "tree_ensemble" => {
            let d: EnsembleDoc = typed(rest, "model")?;
            Ok(ModelDoc::TreeEnsemble {
                aggregation: d.aggregation,
                trees: d.trees,
            })
        }
        "linear" => {
            let d: LinearDoc = typed(rest, "model")?;
            Ok(ModelDoc::Linear {
                weights: d.weights,
                intercept: d.intercept,
                link: d.link,
            })
        }
        other => Err(doc_err(
            "model.type",
            format!("unknown model type `{other}`, expected decision_tree, tree_ensemble or linear"),
        )),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    name: String,
    #[serde(rename = "type")]
    data_type: DataType,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum UnknownDoc {
    Zeros,
    Error,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FeaturizerDoc {
    OneHot {
        column: String,
        categories: Vec<String>,
        unknown: UnknownDoc,
    },
    StandardScale {
        column: String,
        mean: f64,
        std: f64,
    },
}

fn default_unknown() -> UnknownDoc {
    UnknownDoc::Zeros
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightDoc {
    feature: String,
    weight: f64,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum AggDoc {
    Sum,
    Mean,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum LinkDoc {
    Identity,
    Sigmoid,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelDoc {
    DecisionTree {
        nodes: Vec<NodeDoc>,
    },
    TreeEnsemble {
        aggregation: AggDoc,
        trees: Vec<TreeDoc>,
    },
    Linear {
        weights: Vec<WeightDoc>,
        intercept: f64,
        link: LinkDoc,
    },
}

fn default_link() -> LinkDoc {
    LinkDoc::Identity
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum OutputDoc {
    Scores,
    Label,
}

fn doc_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Pipeline {
        path: path.into(),
        message: message.into(),
    }
}

fn finite(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(doc_err(path, format!("number {v} is not finite")))
    }
}

fn tree_from_doc(nodes: &[NodeDoc], path: &str) -> Result<Tree> {
    if nodes.is_empty() {
        return Err(doc_err(path, "tree has no nodes"));
    }
    let mut index = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(doc_err(format!("{path}[{i}].id"), format!("duplicate node id {}", n.id)));
        }
    }
    let mut out = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        let at = format!("{path}[{i}]");
        let node = match (&n.feature, n.threshold, n.left, n.right, &n.value) {
            (Some(feature), Some(t), Some(l), Some(r), None) => {
                let child = |id: u64, side: &str| {
                    index.get(&id).copied().ok_or_else(|| {
                        doc_err(format!("{at}.{side}"), format!("node {} references missing node id {id}", n.id))
                    })
                };
                TreeNode::split(
                    feature.clone(),
                    finite(&format!("{at}.threshold"), t)?,
                    child(l, "left")?,
                    child(r, "right")?,
                )
            }
            (None, None, None, None, Some(values)) => {
                for (k, v) in values.iter().enumerate() {
                    finite(&format!("{at}.value[{k}]"), *v)?;
                }
                TreeNode::Leaf {
                    values: values.clone(),
                }
            }
            _ => {
                return Err(doc_err(
                    at,
                    "a node needs either feature/threshold/left/right or value",
                ))
            }
        };
        out.push(node);
    }
    Tree::new(out).map_err(|e| doc_err(path, e.to_string()))
}

fn tree_to_doc(tree: &Tree) -> Vec<NodeDoc> {
    tree.nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeDoc {
                id: i as u64,
                feature: Some(feature.clone()),
                threshold: Some(*threshold),
                left: Some(*left as u64),
                right: Some(*right as u64),
                value: None,
            },
            TreeNode::Leaf { values } => NodeDoc {
                id: i as u64,
                feature: None,
                threshold: None,
                left: None,
                right: None,
                value: Some(values.clone()),
            },
        })
        .collect()
}

fn from_doc(raw: RawDoc) -> Result<ModelPipeline> {
    let doc = Doc {
        format_version: raw.format_version,
        inputs: raw.inputs,
        featurizers: raw
            .featurizers
            .into_iter()
            .enumerate()
            .map(|(i, v)| featurizer_from_value(v, &format!("featurizers[{i}]")))
            .collect::<Result<_>>()?,
        model: model_from_value(raw.model)?,
        output: raw.output,
    };
    if doc.format_version != FORMAT_VERSION {
        return Err(doc_err(
            "format_version",
            format!("unsupported version {}, expected {FORMAT_VERSION}", doc.format_version),
        ));
    }
    let inputs = doc
        .inputs
        .into_iter()
        .map(|i| PipelineInput::new(i.name, i.data_type))
        .collect();
    let mut featurizers = Vec::new();
    for (i, f) in doc.featurizers.into_iter().enumerate() {
        featurizers.push(match f {
            FeaturizerDoc::OneHot {
                column,
                categories,
                unknown,
            } => Featurizer::OneHot {
                column,
                categories,
                unknown: match unknown {
                    UnknownDoc::Zeros => UnknownPolicy::Zeros,
                    UnknownDoc::Error => UnknownPolicy::Error,
                },
            },
            FeaturizerDoc::StandardScale { column, mean, std } => Featurizer::StandardScale {
                column,
                mean: finite(&format!("featurizers[{i}].mean"), mean)?,
                std: finite(&format!("featurizers[{i}].std"), std)?,
            },
        });
    }
    let model = match doc.model {
        ModelDoc::DecisionTree { nodes } => Model::DecisionTree(tree_from_doc(&nodes, "model.nodes")?),
        ModelDoc::TreeEnsemble { aggregation, trees } => {
            let trees = trees
                .iter()
                .enumerate()
                .map(|(k, t)| tree_from_doc(&t.nodes, &format!("model.trees[{k}].nodes")))
                .collect::<Result<Vec<_>>>()?;
            let aggregation = match aggregation {
                AggDoc::Sum => Aggregation::Sum,
                AggDoc::Mean => Aggregation::Mean,
            };
            Model::ensemble(trees, aggregation).map_err(|e| doc_err("model.trees", e.to_string()))?
        }
        ModelDoc::Linear {
            weights,
            intercept,
            link,
        } => {
            let mut ws = Vec::with_capacity(weights.len());
            for (k, w) in weights.into_iter().enumerate() {
                ws.push((w.feature, finite(&format!("model.weights[{k}].weight"), w.weight)?));
            }
            let link = match link {
                LinkDoc::Identity => Link::Identity,
                LinkDoc::Sigmoid => Link::Sigmoid,
            };
            Model::linear(ws, finite("model.intercept", intercept)?, link)
                .map_err(|e| doc_err("model", e.to_string()))?
        }
    };
    let output = match doc.output {
        OutputDoc::Scores => OutputKind::Scores,
        OutputDoc::Label => OutputKind::Label,
    };
    ModelPipeline::new(inputs, featurizers, model, output).map_err(|e| doc_err(".", e.to_string()))
}

fn to_doc(p: &ModelPipeline) -> Doc {
    let model = match p.model() {
        Model::DecisionTree(t) => ModelDoc::DecisionTree { nodes: tree_to_doc(t) },
        Model::TreeEnsemble { trees, aggregation } => ModelDoc::TreeEnsemble {
            aggregation: match aggregation {
                Aggregation::Sum => AggDoc::Sum,
                Aggregation::Mean => AggDoc::Mean,
            },
            trees: trees.iter().map(|t| TreeDoc { nodes: tree_to_doc(t) }).collect(),
        },
        Model::Linear {
            weights,
            intercept,
            link,
        } => ModelDoc::Linear {
            weights: weights
                .iter()
                .map(|(f, w)| WeightDoc {
                    feature: f.clone(),
                    weight: *w,
                })
                .collect(),
            intercept: *intercept,
            link: match link {
                Link::Identity => LinkDoc::Identity,
                Link::Sigmoid => LinkDoc::Sigmoid,
            },
        },
    };
    Doc {
        format_version: FORMAT_VERSION,
        inputs: p
            .inputs()
            .iter()
            .map(|i| InputDoc {
                name: i.name.clone(),
                data_type: i.data_type,
            })
            .collect(),
        featurizers: p
            .featurizers()
            .iter()
            .map(|f| match f {
                Featurizer::OneHot {
                    column,
                    categories,
                    unknown,
                } => FeaturizerDoc::OneHot {
                    column: column.clone(),
                    categories: categories.clone(),
                    unknown: match unknown {
                        UnknownPolicy::Zeros => UnknownDoc::Zeros,
                        UnknownPolicy::Error => UnknownDoc::Error,
                    },
                },
                Featurizer::StandardScale { column, mean, std } => FeaturizerDoc::StandardScale {
                    column: column.clone(),
                    mean: *mean,
                    std: *std,
                },
            })
            .collect(),
        model,
        output: match p.output() {
            OutputKind::Scores => OutputDoc::Scores,
            OutputKind::Label => OutputDoc::Label,
        },
    }
}

/// Parses a pipeline document.
pub fn load_pipeline(text: &str) -> Result<ModelPipeline> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: RawDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        doc_err(path, e.into_inner().to_string())
    })?;
    from_doc(doc)
}

pub fn load_pipeline_file(path: &Path) -> Result<ModelPipeline> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Workspace(format!("cannot read model `{}`: {e}", path.display())))?;
    load_pipeline(&text).map_err(|e| match e {
        Error::Pipeline { path: p, message } => Error::Pipeline {
            path: format!("{}: {p}", path.display()),
            message,
        },
        other => other,
    })
}

/// Canonical pretty-printed document for a pipeline.
pub fn pipeline_to_json(p: &ModelPipeline) -> String {
    serde_json::to_string_pretty(&to_doc(p)).expect("pipeline documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREE: &str = r#"{
      "format_version": 1,
      "inputs": [{"name": "a", "type": "numeric"}, {"name": "b", "type": "numeric"}],
      "model": {"type": "decision_tree", "nodes": [
        {"id": 10, "feature": "a", "threshold": 1.0, "left": 11, "right": 14},
        {"id": 11, "feature": "b", "threshold": 2.0, "left": 12, "right": 13},
        {"id": 12, "value": [1.0]},
        {"id": 13, "value": [2.0]},
        {"id": 14, "feature": "b", "threshold": 5.0, "left": 15, "right": 16},
        {"id": 15, "value": [3.0]},
        {"id": 16, "value": [4.0]}
      ]},
      "output": "scores"
    }"#;

    #[test]
    fn seven_node_tree_has_three_splits() {
        let p = load_pipeline(TREE).unwrap();
        let Model::DecisionTree(t) = p.model() else {
            panic!("expected a tree")
        };
        let leaves = t.nodes().iter().filter(|n| n.is_leaf()).count();
        assert_eq!((t.node_count() - leaves, leaves), (3, 4));
    }

    #[test]
    fn canonical_round_trip() {
        let p = load_pipeline(TREE).unwrap();
        let text = pipeline_to_json(&p);
        let q = load_pipeline(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, pipeline_to_json(&q));
    }

    #[test]
    fn linear_with_sigmoid() {
        let doc = r#"{"format_version": 1,
          "inputs": [{"name": "x", "type": "numeric"}, {"name": "y", "type": "numeric"}, {"name": "z", "type": "boolean"}],
          "model": {"type": "linear", "weights": [{"feature": "x", "weight": 0.5},
             {"feature": "y", "weight": -1.0}, {"feature": "z", "weight": 2.0}], "intercept": 0.1, "link": "sigmoid"},
          "output": "scores"}"#;
        let p = load_pipeline(doc).unwrap();
        assert!(matches!(p.model(), Model::Linear { link: Link::Sigmoid, weights, .. } if weights.len() == 3));
    }

    #[test]
    fn missing_child_names_the_id() {
        let doc = TREE.replace("\"right\": 16", "\"right\": 99");
        let err = load_pipeline(&doc).unwrap_err().to_string();
        assert!(err.contains("99"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let doc = TREE.replace("\"output\": \"scores\"", "\"output\": \"scores\", \"extra\": 1");
        assert!(load_pipeline(&doc).unwrap_err().to_string().contains("extra"));
        let doc = TREE.replace("{\"id\": 12, \"value\"", "{\"id\": 12, \"bogus\": 0, \"value\"");
        let err = load_pipeline(&doc).unwrap_err().to_string();
        assert!(err.contains("model.nodes[2]"), "{err}");
    }

    #[test]
    fn huge_number_is_rejected() {
        let doc = TREE.replace("\"threshold\": 5.0", "\"threshold\": 1e999");
        assert!(load_pipeline(&doc).is_err());
    }
}
