use std::collections::BTreeMap;
use std::sync::Arc;

use super::pipeline::{ModelPipeline, PipelineKernel, RowIssue};
use super::value::Literal;

/// One cluster's specialization: the literal assignments every training
/// member shared, and the pipeline folded under them.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec {
    pub constants: BTreeMap<String, Literal>,
    pub pipeline: Arc<ModelPipeline>,
}

/// Per-cluster specialized pipelines with a guarded fallback. All pipelines
/// share the fallback's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDispatch {
    /// Numeric input names used for the distance, in centroid order.
    pub features: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Centroids in standardized space.
    pub centroids: Vec<Vec<f64>>,
    pub clusters: Vec<ClusterSpec>,
    pub fallback: Arc<ModelPipeline>,
}

impl ClusterDispatch {
    pub fn kernel(&self) -> DispatchKernel {
        let f = &self.fallback;
        let feature_inputs = self
            .features
            .iter()
            .map(|n| f.input_index(n).expect("dispatch feature is a pipeline input"))
            .collect();
        let guards = self
            .clusters
            .iter()
            .map(|c| {
                c.constants
                    .iter()
                    .map(|(col, lit)| {
                        let i = f.input_index(col).expect("constant is a pipeline input");
                        (i, f.encode_input(i, Some(lit)))
                    })
                    .collect()
            })
            .collect();
        DispatchKernel {
            feature_inputs,
            means: self.means.clone(),
            stds: self.stds.clone(),
            centroids: self.centroids.clone(),
            guards,
            kernels: self.clusters.iter().map(|c| c.pipeline.kernel()).collect(),
            fallback: f.kernel(),
        }
    }
}

/// Row-level router over encoded rows.
#[derive(Clone, Debug)]
pub struct DispatchKernel {
    feature_inputs: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    guards: Vec<Vec<(usize, f64)>>,
    kernels: Vec<PipelineKernel>,
    fallback: PipelineKernel,
}

impl DispatchKernel {
    /// Nearest-centroid cluster whose guard the row satisfies; `None` means
    /// the fallback serves the row.
    pub fn route(&self, row: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (k, c) in self.centroids.iter().enumerate() {
            let mut d = 0.0;
            for (j, &i) in self.feature_inputs.iter().enumerate() {
                let z = (row[i] - self.means[j]) / self.stds[j] - c[j];
                d += z * z;
            }
            if d.is_nan() {
                return None;
            }
            if d < best_d {
                best_d = d;
                best = Some(k);
            }
        }
        let k = best?;
        self.guards[k]
            .iter()
            .all(|(i, v)| row[*i] == *v)
            .then_some(k)
    }

    pub fn output_width(&self) -> usize {
        self.fallback.output_width()
    }

    pub fn eval_row(
        &self,
        row: &[f64],
        out: &mut [f64],
        visits: &mut u64,
    ) -> Result<(), RowIssue> {
        match self.route(row) {
            Some(k) => self.kernels[k].eval_row(row, out, visits),
            None => self.fallback.eval_row(row, out, visits),
        }
    }
}
