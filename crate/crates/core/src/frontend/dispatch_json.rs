//! Documents for compiled cluster dispatchers.
//!
//! ```json
//! {"format_version": 1, "cluster_dispatch": {
//!    "features": ["dep_delay"], "means": [..], "stds": [..], "centroids": [[..]],
//!    "clusters": [{"constants": {"dest": "JFK"}, "pipeline": {..}}],
//!    "fallback": {..}}}
//! ```
//!
//! Pipelines are embedded pipeline documents.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pipeline_json::{load_pipeline, pipeline_to_json, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::ir::{ClusterDispatch, ClusterSpec, Literal};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format_version: u32,
    cluster_dispatch: DispatchDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DispatchDoc {
    features: Vec<String>,
    means: Vec<f64>,
    stds: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    clusters: Vec<ClusterDoc>,
    fallback: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterDoc {
    constants: BTreeMap<String, Value>,
    pipeline: Value,
}

fn literal_to_value(l: &Literal) -> Value {
    match l {
        Literal::Num(v) => Value::from(*v),
        Literal::Str(s) => Value::from(s.clone()),
        Literal::Bool(b) => Value::from(*b),
    }
}

fn value_to_literal(v: &Value, path: &str) -> Result<Literal> {
    match v {
        Value::Number(n) => n.as_f64().map(Literal::num).ok_or_else(|| bad(path, "number out of range")),
        Value::String(s) => Ok(Literal::Str(s.clone())),
        Value::Bool(b) => Ok(Literal::Bool(*b)),
        _ => Err(bad(path, "constant must be a number, string or boolean")),
    }
}

fn bad(path: &str, message: &str) -> Error {
    Error::Pipeline {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn embedded(v: Value, path: &str) -> Result<Arc<crate::ir::ModelPipeline>> {
    load_pipeline(&v.to_string()).map(Arc::new).map_err(|e| match e {
        Error::Pipeline { path: p, message } => Error::Pipeline {
            path: format!("{path}.{p}"),
            message,
        },
        other => other,
    })
}

/// Whether a model document holds a dispatcher rather than a pipeline.
pub fn is_dispatch_doc(text: &str) -> bool {
    serde_json::from_str::<Value>(text).is_ok_and(|v| v.get("cluster_dispatch").is_some())
}

pub fn load_dispatch(text: &str) -> Result<ClusterDispatch> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let env: Envelope = serde_path_to_error::deserialize(de).map_err(|e| Error::Pipeline {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    if env.format_version != FORMAT_VERSION {
        return Err(bad("format_version", &format!("unsupported version {}", env.format_version)));
    }
    let d = env.cluster_dispatch;
    let dims = d.features.len();
    if d.means.len() != dims || d.stds.len() != dims || d.centroids.iter().any(|c| c.len() != dims) {
        return Err(bad("cluster_dispatch", "features, means, stds and centroids disagree in length"));
    }
    if d.centroids.len() != d.clusters.len() {
        return Err(bad("cluster_dispatch", "one centroid per cluster"));
    }
    let fallback = embedded(d.fallback, "cluster_dispatch.fallback")?;
    let mut clusters = Vec::new();
    for (i, c) in d.clusters.into_iter().enumerate() {
        let path = format!("cluster_dispatch.clusters[{i}]");
        let mut constants = BTreeMap::new();
        for (k, v) in &c.constants {
            if fallback.input_index(k).is_none() {
                return Err(bad(&format!("{path}.constants.{k}"), "not a pipeline input"));
            }
            constants.insert(k.clone(), value_to_literal(v, &format!("{path}.constants.{k}"))?);
        }
        let pipeline = embedded(c.pipeline, &format!("{path}.pipeline"))?;
        if pipeline.inputs() != fallback.inputs() {
            return Err(bad(&path, "specialized pipeline inputs differ from the fallback"));
        }
        clusters.push(ClusterSpec { constants, pipeline });
    }
    for f in &d.features {
        if fallback.input_index(f).is_none() {
            return Err(bad("cluster_dispatch.features", &format!("`{f}` is not a pipeline input")));
        }
    }
    Ok(ClusterDispatch {
        features: d.features,
        means: d.means,
        stds: d.stds,
        centroids: d.centroids,
        clusters,
        fallback,
    })
}

pub fn dispatch_to_json(d: &ClusterDispatch) -> String {
    let embed = |p: &crate::ir::ModelPipeline| -> Value {
        serde_json::from_str(&pipeline_to_json(p)).expect("pipeline documents are JSON")
    };
    let env = Envelope {
        format_version: FORMAT_VERSION,
        cluster_dispatch: DispatchDoc {
            features: d.features.clone(),
            means: d.means.clone(),
            stds: d.stds.clone(),
            centroids: d.centroids.clone(),
            clusters: d
                .clusters
                .iter()
                .map(|c| ClusterDoc {
                    constants: c.constants.iter().map(|(k, v)| (k.clone(), literal_to_value(v))).collect(),
                    pipeline: embed(&c.pipeline),
                })
                .collect(),
            fallback: embed(&d.fallback),
        },
    };
    serde_json::to_string_pretty(&env).expect("dispatch documents always serialize")
}
