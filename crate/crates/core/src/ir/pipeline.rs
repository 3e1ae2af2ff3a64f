//! Model pipelines: declared inputs, featurizers and a model.
//!
//! Feature namespace: numeric and boolean inputs pass through under their
//! own name (a StandardScale replaces the raw value, keeping the name);
//! OneHot on column `c` emits one feature `c=v` per category `v`.

use std::collections::{BTreeMap, BTreeSet};

use super::model::{Aggregation, Link, Model, TreeNode};
use super::schema::DataType;
use super::value::Literal;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineInput {
    pub name: String,
    pub data_type: DataType,
}

impl PipelineInput {
    pub fn new(name: impl Into<String>, data_type: DataType) -> Self {
        PipelineInput {
            name: name.into(),
            data_type,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnknownPolicy {
    /// Unknown categories encode as all zeros.
    Zeros,
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Featurizer {
    OneHot {
        column: String,
        categories: Vec<String>,
        unknown: UnknownPolicy,
    },
    StandardScale {
        column: String,
        mean: f64,
        std: f64,
    },
}

impl Featurizer {
    pub fn column(&self) -> &str {
        match self {
            Featurizer::OneHot { column, .. } | Featurizer::StandardScale { column, .. } => column,
        }
    }
}

pub fn onehot_feature(column: &str, category: &str) -> String {
    format!("{column}={category}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Scores,
    /// Index of the highest score, lowest index on ties.
    Label,
}

/// Where a model feature comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSource {
    Passthrough { input: usize },
    Scaled { input: usize, mean: f64, std: f64 },
    OneHot { input: usize, category: usize },
}

impl FeatureSource {
    pub fn input(&self) -> usize {
        match self {
            FeatureSource::Passthrough { input }
            | FeatureSource::Scaled { input, .. }
            | FeatureSource::OneHot { input, .. } => *input,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPipeline {
    inputs: Vec<PipelineInput>,
    featurizers: Vec<Featurizer>,
    model: Model,
    output: OutputKind,
    features: BTreeMap<String, FeatureSource>,
}

impl ModelPipeline {
    pub fn new(
        inputs: Vec<PipelineInput>,
        featurizers: Vec<Featurizer>,
        model: Model,
        output: OutputKind,
    ) -> Result<Self> {
        for (i, input) in inputs.iter().enumerate() {
            if inputs[..i].iter().any(|p| p.name == input.name) {
                return Err(Error::Model(format!("duplicate pipeline input `{}`", input.name)));
            }
        }
        let position = |name: &str| inputs.iter().position(|p| p.name == name);
        let mut featurized = BTreeSet::new();
        let mut features = BTreeMap::new();
        for f in &featurizers {
            let column = f.column();
            let Some(input) = position(column) else {
                return Err(Error::Model(format!(
                    "featurizer references undeclared input `{column}`"
                )));
            };
            if !featurized.insert(column.to_string()) {
                return Err(Error::Model(format!("input `{column}` featurized twice")));
            }
            match f {
                Featurizer::OneHot { categories, .. } => {
                    if inputs[input].data_type != DataType::Categorical {
                        return Err(Error::Model(format!(
                            "one-hot over non-categorical input `{column}`"
                        )));
                    }
                    if categories.is_empty() {
                        return Err(Error::Model(format!("one-hot `{column}` has no categories")));
                    }
                    for (k, c) in categories.iter().enumerate() {
                        if categories[..k].contains(c) {
                            return Err(Error::Model(format!(
                                "one-hot `{column}` repeats category `{c}`"
                            )));
                        }
                        features.insert(
                            onehot_feature(column, c),
                            FeatureSource::OneHot { input, category: k },
                        );
                    }
                }
                Featurizer::StandardScale { mean, std, .. } => {
                    if inputs[input].data_type != DataType::Numeric {
                        return Err(Error::Model(format!(
                            "standard-scale over non-numeric input `{column}`"
                        )));
                    }
                    if !mean.is_finite() || !std.is_finite() || *std <= 0.0 {
                        return Err(Error::Model(format!(
                            "standard-scale `{column}` needs finite mean and positive std"
                        )));
                    }
                    features.insert(
                        column.to_string(),
                        FeatureSource::Scaled {
                            input,
                            mean: *mean,
                            std: *std,
                        },
                    );
                }
            }
        }
        for (input, p) in inputs.iter().enumerate() {
            if p.data_type != DataType::Categorical && !featurized.contains(&p.name) {
                if features.contains_key(&p.name) {
                    return Err(Error::Model(format!(
                        "feature name `{}` produced twice",
                        p.name
                    )));
                }
                features.insert(p.name.clone(), FeatureSource::Passthrough { input });
            }
        }
        for feature in model.referenced_features() {
            if !features.contains_key(&feature) {
                return Err(Error::Model(format!(
                    "model feature `{feature}` is produced by no featurizer or input"
                )));
            }
        }
        if model.output_arity() == 0 {
            return Err(Error::Model("model has no outputs".into()));
        }
        Ok(ModelPipeline {
            inputs,
            featurizers,
            model,
            output,
            features,
        })
    }

    pub fn inputs(&self) -> &[PipelineInput] {
        &self.inputs
    }

    pub fn featurizers(&self) -> &[Featurizer] {
        &self.featurizers
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn output(&self) -> OutputKind {
        self.output
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|p| p.name == name)
    }

    pub fn featurizer_for(&self, column: &str) -> Option<&Featurizer> {
        self.featurizers.iter().find(|f| f.column() == column)
    }

    pub fn feature_source(&self, feature: &str) -> Option<&FeatureSource> {
        self.features.get(feature)
    }

    /// Every feature the featurizers and passthrough inputs produce.
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// Input columns that can influence the output.
    pub fn used_features(&self) -> BTreeSet<String> {
        self.model
            .features()
            .iter()
            .map(|f| self.inputs[self.features[f].input()].name.clone())
            .collect()
    }

    pub fn output_width(&self) -> usize {
        match self.output {
            OutputKind::Scores => self.model.output_arity(),
            OutputKind::Label => 1,
        }
    }

    pub fn with_model(&self, model: Model) -> Result<ModelPipeline> {
        ModelPipeline::new(self.inputs.clone(), self.featurizers.clone(), model, self.output)
    }

    /// Drops inputs (and their featurizers) that do not influence the output.
    /// Returns the narrowed pipeline and the kept input positions. Linear
    /// weights that are zero are removed as well.
    pub fn restrict_to_used(&self) -> Result<(ModelPipeline, Vec<usize>)> {
        let used = self.used_features();
        let kept: Vec<usize> = (0..self.inputs.len())
            .filter(|&i| used.contains(&self.inputs[i].name))
            .collect();
        let inputs = kept.iter().map(|&i| self.inputs[i].clone()).collect();
        let featurizers = self
            .featurizers
            .iter()
            .filter(|f| used.contains(f.column()))
            .cloned()
            .collect();
        let model = match &self.model {
            Model::Linear {
                weights,
                intercept,
                link,
            } => Model::Linear {
                weights: weights.iter().filter(|(_, w)| *w != 0.0).cloned().collect(),
                intercept: *intercept,
                link: *link,
            },
            other => other.clone(),
        };
        Ok((ModelPipeline::new(inputs, featurizers, model, self.output)?, kept))
    }

    /// Encodes a literal for input `i` the way the executor feeds pipelines:
    /// numerics as-is, booleans 0/1, categoricals as the one-hot category
    /// index (-1 when unknown), NULL as NaN.
    pub fn encode_input(&self, i: usize, value: Option<&Literal>) -> f64 {
        let Some(value) = value else {
            return f64::NAN;
        };
        match value {
            Literal::Str(s) => self.category_index(i, s),
            other => other.as_feature_value().unwrap_or(f64::NAN),
        }
    }

    pub fn category_index(&self, i: usize, value: &str) -> f64 {
        match self.featurizer_for(&self.inputs[i].name) {
            Some(Featurizer::OneHot { categories, .. }) => categories
                .iter()
                .position(|c| c == value)
                .map(|k| k as f64)
                .unwrap_or(-1.0),
            _ => -1.0,
        }
    }

    pub fn kernel(&self) -> PipelineKernel {
        PipelineKernel::new(self)
    }

    /// Direct evaluation of one encoded row.
    pub fn eval_encoded(&self, row: &[f64]) -> std::result::Result<Vec<f64>, RowIssue> {
        let kernel = self.kernel();
        let mut out = vec![0.0; self.output_width()];
        kernel.eval_row(row, &mut out, &mut 0)?;
        Ok(out)
    }
}

/// Why a row could not be scored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RowIssue {
    /// A NULL was read by the model; carries the feature name.
    Null(String),
    /// Unknown category under the error policy; carries the input index.
    UnknownCategory(usize),
}

#[derive(Clone, Debug)]
enum KFeature {
    Pass(usize),
    Scaled { input: usize, mean: f64, std: f64 },
    OneHot { input: usize, category: f64, strict: bool },
}

const LEAF: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct KNode {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
}

#[derive(Clone, Debug)]
struct KTree {
    nodes: Vec<KNode>,
    /// For leaves, `left` indexes here in steps of the arity.
    values: Vec<f64>,
}

#[derive(Clone, Debug)]
enum KModel {
    Trees {
        trees: Vec<KTree>,
        mean: bool,
    },
    Linear {
        terms: Vec<(usize, f64)>,
        intercept: f64,
        sigmoid: bool,
    },
}

/// Index-resolved form of a pipeline for fast row-at-a-time scoring.
#[derive(Clone, Debug)]
pub struct PipelineKernel {
    features: Vec<KFeature>,
    feature_names: Vec<String>,
    model: KModel,
    arity: usize,
    label: bool,
}

impl PipelineKernel {
    fn new(p: &ModelPipeline) -> Self {
        let mut feature_names: Vec<String> = Vec::new();
        let mut features = Vec::new();
        let mut slot = |name: &str| -> usize {
            if let Some(i) = feature_names.iter().position(|n| n == name) {
                return i;
            }
            let kf = match &p.features[name] {
                FeatureSource::Passthrough { input } => KFeature::Pass(*input),
                FeatureSource::Scaled { input, mean, std } => KFeature::Scaled {
                    input: *input,
                    mean: *mean,
                    std: *std,
                },
                FeatureSource::OneHot { input, category } => KFeature::OneHot {
                    input: *input,
                    category: *category as f64,
                    strict: matches!(
                        p.featurizer_for(&p.inputs[*input].name),
                        Some(Featurizer::OneHot {
                            unknown: UnknownPolicy::Error,
                            ..
                        })
                    ),
                },
            };
            feature_names.push(name.to_string());
            features.push(kf);
            feature_names.len() - 1
        };
        let mut compile_tree = |t: &super::model::Tree| -> KTree {
            let mut nodes = Vec::with_capacity(t.node_count());
            let mut values = Vec::new();
            for n in t.nodes() {
                match n {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => nodes.push(KNode {
                        feature: slot(feature) as u32,
                        threshold: *threshold,
                        left: *left as u32,
                        right: *right as u32,
                    }),
                    TreeNode::Leaf { values: v } => {
                        nodes.push(KNode {
                            feature: LEAF,
                            threshold: 0.0,
                            left: values.len() as u32,
                            right: 0,
                        });
                        values.extend_from_slice(v);
                    }
                }
            }
            KTree { nodes, values }
        };
        let model = match &p.model {
            Model::DecisionTree(t) => KModel::Trees {
                trees: vec![compile_tree(t)],
                mean: false,
            },
            Model::TreeEnsemble { trees, aggregation } => KModel::Trees {
                trees: trees.iter().map(&mut compile_tree).collect(),
                mean: *aggregation == Aggregation::Mean,
            },
            Model::Linear {
                weights,
                intercept,
                link,
            } => {
                let terms = weights
                    .iter()
                    .filter(|(_, w)| *w != 0.0)
                    .map(|(f, w)| (slot(f), *w))
                    .collect();
                KModel::Linear {
                    terms,
                    intercept: *intercept,
                    sigmoid: *link == Link::Sigmoid,
                }
            }
        };
        PipelineKernel {
            features,
            feature_names,
            model,
            arity: p.model.output_arity(),
            label: p.output == OutputKind::Label,
        }
    }

    #[inline]
    fn feature(&self, f: usize, row: &[f64]) -> std::result::Result<f64, RowIssue> {
        let v = match &self.features[f] {
            KFeature::Pass(i) => row[*i],
            KFeature::Scaled { input, mean, std } => (row[*input] - mean) / std,
            KFeature::OneHot {
                input,
                category,
                strict,
            } => {
                let code = row[*input];
                if code < 0.0 && *strict {
                    return Err(RowIssue::UnknownCategory(*input));
                }
                if code.is_nan() {
                    code
                } else if code == *category {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if v.is_nan() {
            return Err(RowIssue::Null(self.feature_names[f].clone()));
        }
        Ok(v)
    }

    pub fn output_width(&self) -> usize {
        if self.label {
            1
        } else {
            self.arity
        }
    }

    /// Scores one encoded row into `out`; adds visited tree nodes to `visits`.
    pub fn eval_row(
        &self,
        row: &[f64],
        out: &mut [f64],
        visits: &mut u64,
    ) -> std::result::Result<(), RowIssue> {
        let mut scores = [0.0f64; 16];
        let mut heap;
        let acc: &mut [f64] = if self.arity <= 16 {
            &mut scores[..self.arity]
        } else {
            heap = vec![0.0; self.arity];
            &mut heap
        };
        match &self.model {
            KModel::Trees { trees, mean } => {
                for t in trees {
                    let mut i = 0usize;
                    loop {
                        *visits += 1;
                        let n = &t.nodes[i];
                        if n.feature == LEAF {
                            let at = n.left as usize;
                            for (a, v) in acc.iter_mut().zip(&t.values[at..at + self.arity]) {
                                *a += v;
                            }
                            break;
                        }
                        let v = self.feature(n.feature as usize, row)?;
                        i = if v <= n.threshold { n.left } else { n.right } as usize;
                    }
                }
                if *mean {
                    let k = trees.len() as f64;
                    for a in acc.iter_mut() {
                        *a /= k;
                    }
                }
            }
            KModel::Linear {
                terms,
                intercept,
                sigmoid,
            } => {
                let mut s = 0.0;
                for (f, w) in terms {
                    s += w * self.feature(*f, row)?;
                }
                s += intercept;
                acc[0] = if *sigmoid { 1.0 / (1.0 + (-s).exp()) } else { s };
            }
        }
        if self.label {
            out[0] = argmax(acc) as f64;
        } else {
            out.copy_from_slice(acc);
        }
        Ok(())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::model::{Tree, TreeNode};

    fn dest_pipeline(weights: &[f64]) -> ModelPipeline {
        let cats = ["JFK", "SEA", "LAX", "ORD", "BOS"];
        ModelPipeline::new(
            vec![
                PipelineInput::new("dest", DataType::Categorical),
                PipelineInput::new("dist", DataType::Numeric),
            ],
            vec![Featurizer::OneHot {
                column: "dest".into(),
                categories: cats.iter().map(|c| c.to_string()).collect(),
                unknown: UnknownPolicy::Zeros,
            }],
            Model::linear(
                cats.iter()
                    .zip(weights)
                    .map(|(c, w)| (onehot_feature("dest", c), *w))
                    .collect(),
                0.5,
                Link::Identity,
            )
            .unwrap(),
            OutputKind::Scores,
        )
        .unwrap()
    }

    #[test]
    fn used_features_of_all_zero_linear_is_empty() {
        let p = dest_pipeline(&[0.0; 5]);
        assert!(p.used_features().is_empty());
    }

    #[test]
    fn onehot_with_two_nonzero_weights_needs_source_column() {
        let p = dest_pipeline(&[0.0, 1.0, 0.0, -2.0, 0.0]);
        let expected: BTreeSet<String> = ["dest".to_string()].into_iter().collect();
        assert_eq!(p.used_features(), expected);
        let (narrow, kept) = p.restrict_to_used().unwrap();
        assert_eq!(kept, vec![0]);
        assert_eq!(narrow.model().referenced_features().len(), 2);
    }

    #[test]
    fn kernel_scores_encoded_rows() {
        let p = dest_pipeline(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let sea = p.encode_input(0, Some(&Literal::str("SEA")));
        assert_eq!(p.eval_encoded(&[sea, 0.0]).unwrap(), vec![2.5]);
        let unknown = p.encode_input(0, Some(&Literal::str("XXX")));
        assert_eq!(p.eval_encoded(&[unknown, 0.0]).unwrap(), vec![0.5]);
        assert_eq!(
            p.eval_encoded(&[f64::NAN, 0.0]),
            Err(RowIssue::Null("dest=JFK".into()))
        );
    }

    #[test]
    fn rejects_feature_without_source() {
        let tree = Tree::new(vec![
            TreeNode::split("missing", 1.0, 1, 2),
            TreeNode::leaf(1.0),
            TreeNode::leaf(2.0),
        ])
        .unwrap();
        let err = ModelPipeline::new(
            vec![PipelineInput::new("a", DataType::Numeric)],
            vec![],
            Model::DecisionTree(tree),
            OutputKind::Scores,
        );
        assert!(err.is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
