//! Seeded generators for models, tables and complete workspaces: random
//! trees, forests and linear pipelines, the hospital length-of-stay
//! example and clustered flight data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exec::{ColumnBuilder, Table};
use crate::ir::{
    onehot_feature, Aggregation, DataType, Featurizer, Field, Link, Model, ModelPipeline, OutputKind,
    PipelineInput, Schema, TableMeta, Tree, TreeShape, UnknownPolicy,
};
use crate::workspace::Workspace;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Features of the form `x0`, `x1`, ...
pub fn feature_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Thresholds on a quarter grid in [-10, 10].
fn threshold(rng: &mut impl Rng) -> f64 {
    rng.gen_range(-40..=40) as f64 / 4.0
}

fn leaf(rng: &mut impl Rng, arity: usize) -> TreeShape {
    TreeShape::Leaf((0..arity).map(|_| rng.gen_range(-50..=50) as f64 / 4.0).collect())
}

/// A random tree over `features` with depth at most `max_depth`. Inner
/// nodes stop splitting with probability `stop` once below the root.
pub fn random_tree(rng: &mut impl Rng, features: &[String], max_depth: usize, arity: usize, stop: f64) -> Tree {
    fn grow(rng: &mut impl Rng, features: &[String], depth: usize, arity: usize, stop: f64, root: bool) -> TreeShape {
        if depth == 0 || (!root && rng.gen_bool(stop)) {
            return leaf(rng, arity);
        }
        let f = features.choose(rng).expect("at least one feature").clone();
        let t = threshold(rng);
        let l = grow(rng, features, depth - 1, arity, stop, false);
        let r = grow(rng, features, depth - 1, arity, stop, false);
        TreeShape::split(f, t, l, r)
    }
    Tree::from_shape(&grow(rng, features, max_depth, arity, stop, true)).expect("generated trees are well formed")
}

/// Numeric inputs `x0..xn` without featurizers.
pub fn numeric_pipeline(n: usize, model: Model, output: OutputKind) -> ModelPipeline {
    let inputs = feature_names(n)
        .into_iter()
        .map(|f| PipelineInput::new(f, DataType::Numeric))
        .collect();
    ModelPipeline::new(inputs, Vec::new(), model, output).expect("numeric pipelines are well formed")
}

pub fn random_forest(rng: &mut impl Rng, n_features: usize, trees: usize, max_depth: usize) -> ModelPipeline {
    let names = feature_names(n_features);
    let trees = (0..trees).map(|_| random_tree(rng, &names, max_depth, 1, 0.1)).collect();
    numeric_pipeline(
        n_features,
        Model::ensemble(trees, Aggregation::Mean).expect("same arity"),
        OutputKind::Scores,
    )
}

/// A linear pipeline over `n` numeric features where exactly
/// `n - ceil((1 - sparsity) * n)` weights are zero.
pub fn sparse_linear(rng: &mut impl Rng, n: usize, sparsity: f64) -> ModelPipeline {
    let kept = ((1.0 - sparsity) * n as f64).ceil() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let nonzero: std::collections::BTreeSet<usize> = idx[..kept].iter().copied().collect();
    let weights = feature_names(n)
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let w = if nonzero.contains(&i) {
                let m = rng.gen_range(0.05..2.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            } else {
                0.0
            };
            (f, w)
        })
        .collect();
    numeric_pipeline(
        n,
        Model::linear(weights, rng.gen_range(-1.0..1.0), Link::Sigmoid).expect("finite weights"),
        OutputKind::Scores,
    )
}

pub const CATEGORIES: [&str; 4] = ["a", "b", "c", "d"];

/// Which model a mixed pipeline carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Tree,
    Forest,
    Linear,
}

/// A pipeline over numeric `x*`, a scaled numeric `s`, a one-hot
/// categorical `cat` and a boolean `flag`. Trees may carry vector leaves
/// scored through argmax.
pub fn mixed_pipeline(rng: &mut impl Rng, kind: ModelKind, n_numeric: usize) -> ModelPipeline {
    let mut inputs: Vec<PipelineInput> = feature_names(n_numeric)
        .into_iter()
        .map(|f| PipelineInput::new(f, DataType::Numeric))
        .collect();
    inputs.push(PipelineInput::new("s", DataType::Numeric));
    inputs.push(PipelineInput::new("cat", DataType::Categorical));
    inputs.push(PipelineInput::new("flag", DataType::Boolean));
    let featurizers = vec![
        Featurizer::StandardScale {
            column: "s".into(),
            mean: rng.gen_range(-2.0..2.0),
            std: rng.gen_range(0.5..3.0),
        },
        Featurizer::OneHot {
            column: "cat".into(),
            categories: CATEGORIES.iter().map(|c| c.to_string()).collect(),
            unknown: UnknownPolicy::Zeros,
        },
    ];
    let mut features = feature_names(n_numeric);
    features.push("s".into());
    features.extend(CATEGORIES.iter().map(|c| onehot_feature("cat", c)));
    features.push("flag".into());
    let fix_thresholds = |t: Tree| -> Tree {
        fn walk(s: TreeShape) -> TreeShape {
            match s {
                TreeShape::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let binary = feature.starts_with("cat=") || feature == "flag";
                    TreeShape::Split {
                        threshold: if binary { 0.5 } else { threshold / 4.0 },
                        feature,
                        left: Box::new(walk(*left)),
                        right: Box::new(walk(*right)),
                    }
                }
                leaf => leaf,
            }
        }
        Tree::from_shape(&walk(t.to_shape())).expect("same structure")
    };
    let (model, output) = match kind {
        ModelKind::Tree => {
            let arity = if rng.gen_bool(0.5) { 1 } else { 3 };
            let depth = rng.gen_range(1..=10);
            let t = fix_thresholds(random_tree(rng, &features, depth, arity, 0.25));
            let out = if arity == 1 { OutputKind::Scores } else { OutputKind::Label };
            (Model::DecisionTree(t), out)
        }
        ModelKind::Forest => {
            let n = rng.gen_range(2..=50);
            let trees = (0..n)
                .map(|_| {
                    let depth = rng.gen_range(1..=6);
                    fix_thresholds(random_tree(rng, &features, depth, 1, 0.3))
                })
                .collect();
            let agg = if rng.gen_bool(0.5) { Aggregation::Sum } else { Aggregation::Mean };
            (Model::ensemble(trees, agg).expect("same arity"), OutputKind::Scores)
        }
        ModelKind::Linear => {
            let weights = features
                .iter()
                .map(|f| (f.clone(), if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) }))
                .collect();
            let link = if rng.gen_bool(0.5) { Link::Sigmoid } else { Link::Identity };
            (
                Model::linear(weights, rng.gen_range(-1.0..1.0), link).expect("finite"),
                OutputKind::Scores,
            )
        }
    };
    ModelPipeline::new(inputs, featurizers, model, output).expect("mixed pipelines are well formed")
}

/// Random rows for a pipeline's inputs: numerics in [-3, 3], categories
/// including an unseen one, booleans.
pub fn random_input_table(rng: &mut impl Rng, pipeline: &ModelPipeline, rows: usize) -> Table {
    let fields: Vec<Field> = pipeline
        .inputs()
        .iter()
        .map(|i| Field::new(i.name.clone(), i.data_type, false))
        .collect();
    let columns = pipeline
        .inputs()
        .iter()
        .map(|i| {
            let mut b = ColumnBuilder::new(i.data_type);
            for _ in 0..rows {
                match i.data_type {
                    DataType::Numeric => b.push_num(rng.gen_range(-3.0..3.0)),
                    DataType::Boolean => b.push_bool(rng.gen_bool(0.5)),
                    DataType::Categorical => {
                        let c = if rng.gen_bool(0.05) {
                            "zz"
                        } else {
                            CATEGORIES.choose(rng).expect("non-empty")
                        };
                        b.push_str(Some(c));
                    }
                }
            }
            b.finish()
        })
        .collect();
    Table::from_columns(Schema::new(fields).expect("distinct inputs"), columns).expect("equal lengths")
}

/// Numeric columns `x0..xn` uniform in [lo, hi).
pub fn numeric_table(rng: &mut impl Rng, n: usize, rows: usize, lo: f64, hi: f64) -> Table {
    let names = feature_names(n);
    let fields = names.iter().map(|f| Field::new(f.clone(), DataType::Numeric, false)).collect();
    let columns = (0..n)
        .map(|_| {
            let mut b = ColumnBuilder::new(DataType::Numeric);
            for _ in 0..rows {
                b.push_num(rng.gen_range(lo..hi));
            }
            b.finish()
        })
        .collect();
    Table::from_columns(Schema::new(fields).expect("distinct"), columns).expect("equal lengths")
}

/// The hospital length-of-stay example: patients joined with blood and
/// prenatal tests, scored by a tree rooted at `age <= 35`.
pub mod hospital {
    use super::*;

    pub const MODEL: &str = "los";

    /// Pregnant patients whose predicted stay exceeds a week.
    pub const QUERY: &str = "SELECT patient_info.id, PREDICT(los, age, gender, pregnant, bp, fetal_hr) AS stay \
FROM patient_info \
JOIN blood_tests ON patient_info.id = blood_tests.id \
JOIN prenatal_tests ON patient_info.id = prenatal_tests.id \
WHERE pregnant = 1 AND PREDICT(los, age, gender, pregnant, bp, fetal_hr) > 7";

    /// Node count of the full tree.
    pub const TREE_NODES: usize = 139;
    /// Node count once `pregnant = 1` has been propagated into the tree.
    pub const PRUNED_NODES: usize = 131;
    /// Nodes of the `age > 35` subtree.
    pub const RIGHT_NODES: usize = 131;

    fn gender_split(a: f64, b: f64) -> TreeShape {
        TreeShape::split("gender=M", 0.5, TreeShape::leaf(a), TreeShape::leaf(b))
    }

    /// Full depth-6 tree over age, bp and fetal_hr for older pregnant
    /// patients. Every threshold lies strictly inside the range left open by
    /// its ancestors and the data, so no split is decided statically; leaves
    /// straddle the one-week mark.
    fn older_pregnant(depth: usize, i: usize, ranges: [(f64, f64); 3]) -> TreeShape {
        if depth == 0 {
            return TreeShape::leaf(3.0 + ((i * 7) % 12) as f64);
        }
        let f = (6 - depth) % 3;
        let (lo, hi) = ranges[f];
        let t = (lo + (hi - lo) * (0.4 + 0.05 * (i % 4) as f64)).round();
        let (mut l, mut r) = (ranges, ranges);
        l[f] = (lo, t);
        r[f] = (t, hi);
        TreeShape::split(
            ["age", "bp", "fetal_hr"][f],
            t,
            older_pregnant(depth - 1, 2 * i, l),
            older_pregnant(depth - 1, 2 * i + 1, r),
        )
    }

    pub fn tree() -> Tree {
        let young = TreeShape::split(
            "pregnant",
            0.5,
            gender_split(2.0, 3.0),
            TreeShape::split("bp", 140.0, TreeShape::leaf(4.0), TreeShape::leaf(9.0)),
        );
        let old = TreeShape::split("pregnant", 0.5, gender_split(5.0, 8.0), older_pregnant(6, 0, [(35.0, 70.0), (90.0, 180.0), (110.0, 170.0)]));
        Tree::from_shape(&TreeShape::split("age", 35.0, young, old)).expect("well formed")
    }

    pub fn pipeline() -> ModelPipeline {
        let inputs = vec![
            PipelineInput::new("age", DataType::Numeric),
            PipelineInput::new("gender", DataType::Categorical),
            PipelineInput::new("pregnant", DataType::Numeric),
            PipelineInput::new("bp", DataType::Numeric),
            PipelineInput::new("fetal_hr", DataType::Numeric),
        ];
        let featurizers = vec![Featurizer::OneHot {
            column: "gender".into(),
            categories: vec!["F".into(), "M".into()],
            unknown: UnknownPolicy::Zeros,
        }];
        ModelPipeline::new(inputs, featurizers, Model::DecisionTree(tree()), OutputKind::Scores)
            .expect("well formed")
    }

    fn schema(fields: &[(&str, DataType)]) -> Schema {
        Schema::new(fields.iter().map(|(n, t)| Field::new(*n, *t, false)).collect()).expect("distinct")
    }

    /// Catalog entries with keys and foreign keys, and the generated rows.
    /// Every patient has exactly one blood and one prenatal record.
    pub fn tables(rows: usize, seed: u64) -> Vec<(TableMeta, Table)> {
        let mut rng = rng(seed);
        let (mut id, mut age, mut gender, mut pregnant, mut bp, mut hr) = (
            ColumnBuilder::new(DataType::Numeric),
            ColumnBuilder::new(DataType::Numeric),
            ColumnBuilder::new(DataType::Categorical),
            ColumnBuilder::new(DataType::Numeric),
            ColumnBuilder::new(DataType::Numeric),
            ColumnBuilder::new(DataType::Numeric),
        );
        for i in 0..rows {
            let female = rng.gen_bool(0.6);
            id.push_num(i as f64 + 1.0);
            age.push_num(rng.gen_range(18..=70) as f64);
            gender.push_str(Some(if female { "F" } else { "M" }));
            pregnant.push_num(if female && rng.gen_bool(0.4) { 1.0 } else { 0.0 });
            bp.push_num(rng.gen_range(90..=180) as f64);
            hr.push_num(rng.gen_range(110..=170) as f64);
        }
        let ids = id.finish();
        let patient = Table::from_columns(
            schema(&[
                ("id", DataType::Numeric),
                ("age", DataType::Numeric),
                ("gender", DataType::Categorical),
                ("pregnant", DataType::Numeric),
            ]),
            vec![ids.clone(), age.finish(), gender.finish(), pregnant.finish()],
        )
        .expect("equal lengths");
        let blood = Table::from_columns(
            schema(&[("id", DataType::Numeric), ("bp", DataType::Numeric)]),
            vec![ids.clone(), bp.finish()],
        )
        .expect("equal lengths");
        let prenatal = Table::from_columns(
            schema(&[("id", DataType::Numeric), ("fetal_hr", DataType::Numeric)]),
            vec![ids, hr.finish()],
        )
        .expect("equal lengths");
        vec![
            (
                TableMeta::new("patient_info", patient.schema().clone())
                    .with_unique_key("id")
                    .with_foreign_key("id", "blood_tests", "id")
                    .with_foreign_key("id", "prenatal_tests", "id"),
                patient,
            ),
            (
                TableMeta::new("blood_tests", blood.schema().clone())
                    .with_unique_key("id")
                    .with_foreign_key("id", "patient_info", "id"),
                blood,
            ),
            (
                TableMeta::new("prenatal_tests", prenatal.schema().clone())
                    .with_unique_key("id")
                    .with_foreign_key("id", "patient_info", "id"),
                prenatal,
            ),
        ]
    }

    /// Writes the example workspace, optionally without key constraints.
    pub fn workspace(dir: &Path, rows: usize, seed: u64, constraints: bool) -> Result<Workspace> {
        let tables: Vec<(TableMeta, Table)> = tables(rows, seed)
            .into_iter()
            .map(|(mut m, t)| {
                if !constraints {
                    m.unique_keys.clear();
                    m.foreign_keys.clear();
                }
                (m, t)
            })
            .collect();
        let refs: Vec<(TableMeta, &Table)> = tables.iter().map(|(m, t)| (m.clone(), t)).collect();
        Workspace::create(dir, &refs, &[(MODEL, &pipeline())])
    }
}

/// Flight-delay style data scored by a small boosted ensemble: each destination's flights sit in their own
/// region of (dep_delay, distance), so k-means clusters align with `dest`.
pub mod flights {
    use super::*;

    pub const MODEL: &str = "delay";
    pub const DESTS: [&str; 5] = ["JFK", "SEA", "LAX", "ORD", "ATL"];
    pub const QUERY: &str = "SELECT dep_delay, dest, PREDICT(delay, dep_delay, distance, dest) AS p FROM flights";

    pub fn pipeline() -> ModelPipeline {
        let inputs = vec![
            PipelineInput::new("dep_delay", DataType::Numeric),
            PipelineInput::new("distance", DataType::Numeric),
            PipelineInput::new("dest", DataType::Categorical),
        ];
        let featurizers = vec![
            Featurizer::StandardScale {
                column: "dep_delay".into(),
                mean: 20.0,
                std: 15.0,
            },
            Featurizer::StandardScale {
                column: "distance".into(),
                mean: 1200.0,
                std: 700.0,
            },
            Featurizer::OneHot {
                column: "dest".into(),
                categories: DESTS.iter().map(|d| d.to_string()).collect(),
                unknown: UnknownPolicy::Zeros,
            },
        ];
        let model = Model::ensemble((0..DESTS.len()).map(delay_tree).collect(), Aggregation::Sum).expect("well formed");
        ModelPipeline::new(inputs, featurizers, model, OutputKind::Scores).expect("well formed")
    }

    /// Tree `i` asks whether the flight goes to `DESTS[i]` before looking
    /// at the scaled delay and distance.
    fn delay_tree(i: usize) -> Tree {
        let leaf = |v: f64| TreeShape::leaf(v);
        let base = 0.1 * i as f64;
        let other = TreeShape::split("distance", -0.5 + 0.2 * i as f64, leaf(base), leaf(base + 0.3));
        let here = TreeShape::split(
            "dep_delay",
            0.3 * i as f64 - 0.5,
            TreeShape::split("distance", 0.4 - 0.3 * i as f64, leaf(base + 0.05), leaf(base + 0.6)),
            leaf(base + 1.2),
        );
        let shape = TreeShape::split(onehot_feature("dest", DESTS[i]), 0.5, other, here);
        Tree::from_shape(&shape).expect("well formed")
    }

    pub fn table(rows: usize, seed: u64) -> Table {
        let mut rng = rng(seed);
        let centers = [(5.0, 300.0), (45.0, 2400.0), (15.0, 2500.0), (60.0, 700.0), (25.0, 1000.0)];
        let mut delay = ColumnBuilder::new(DataType::Numeric);
        let mut dist = ColumnBuilder::new(DataType::Numeric);
        let mut dest = ColumnBuilder::new(DataType::Categorical);
        for _ in 0..rows {
            let k = rng.gen_range(0..DESTS.len());
            let (d, m) = centers[k];
            delay.push_num((d + rng.gen_range(-4.0..4.0f64)).round());
            dist.push_num((m + rng.gen_range(-80.0..80.0f64)).round());
            dest.push_str(Some(DESTS[k]));
        }
        let schema = Schema::new(vec![
            Field::new("dep_delay", DataType::Numeric, false),
            Field::new("distance", DataType::Numeric, false),
            Field::new("dest", DataType::Categorical, false),
        ])
        .expect("distinct");
        Table::from_columns(schema, vec![delay.finish(), dist.finish(), dest.finish()]).expect("equal lengths")
    }

    pub fn workspace(dir: &Path, rows: usize, seed: u64) -> Result<Workspace> {
        let t = table(rows, seed);
        let meta = TableMeta::new("flights", t.schema().clone());
        Workspace::create(dir, &[(meta, &t)], &[(MODEL, &pipeline())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hospital_tree_sizes() {
        let t = hospital::tree();
        assert_eq!(t.node_count(), hospital::TREE_NODES);
        let TreeShape::Split { right, .. } = t.to_shape() else {
            panic!("root splits");
        };
        assert_eq!(Tree::from_shape(&right).unwrap().node_count(), hospital::RIGHT_NODES);
    }

    #[test]
    fn sparse_linear_zero_count() {
        let p = sparse_linear(&mut rng(1), 400, 0.8096);
        let Model::Linear { weights, .. } = p.model() else { unreachable!() };
        let nonzero = weights.iter().filter(|(_, w)| *w != 0.0).count();
        assert_eq!(nonzero, (0.1904f64 * 400.0).ceil() as usize);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = mixed_pipeline(&mut rng(3), ModelKind::Forest, 4);
        let b = mixed_pipeline(&mut rng(3), ModelKind::Forest, 4);
        assert_eq!(a, b);
    }
}
