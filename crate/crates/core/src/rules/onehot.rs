//! Folding one-hot encoders under constant and value-set domains.

use std::collections::BTreeSet;

use super::prune::{feature_bounds, prune_model};
use crate::analysis::{DomainEnv, FeatureDomain};
use crate::error::Result;
use crate::ir::{onehot_feature, Featurizer, Literal, Model, ModelPipeline, UnknownPolicy};

/// Values a one-hot column can take, when the domain narrows it to a set
/// of strings the encoder may fold over.
fn folded_values(domain: &FeatureDomain, categories: &[String], unknown: UnknownPolicy) -> Option<BTreeSet<String>> {
    let values: Vec<&Literal> = match domain {
        FeatureDomain::Constant(c) => vec![c],
        FeatureDomain::ValueSet(s) => s.iter().collect(),
        _ => return None,
    };
    let strings: Option<BTreeSet<String>> = values.iter().map(|v| v.as_str().map(str::to_string)).collect();
    let strings = strings?;
    if unknown == UnknownPolicy::Error && !strings.iter().all(|s| categories.contains(s)) {
        return None;
    }
    Some(strings)
}

/// Specializes one-hot encoders to the values their column can take.
///
/// Indicator features of categories outside the domain are always 0 and
/// disappear from the model; when the domain is a single known category its
/// indicator is always 1, and a linear model absorbs its weight into the
/// intercept. Tree splits on now-constant indicators are resolved. The
/// encoder keeps only categories inside the domain. Returns `None` when
/// nothing changes.
pub fn fold_onehot(pipeline: &ModelPipeline, env: &DomainEnv) -> Result<Option<ModelPipeline>> {
    let mut folds: Vec<(String, Vec<String>, BTreeSet<String>)> = Vec::new();
    for f in pipeline.featurizers() {
        if let Featurizer::OneHot {
            column,
            categories,
            unknown,
        } = f
        {
            if let Some(values) = folded_values(&env.get(column), categories, *unknown) {
                let kept = categories.iter().filter(|c| values.contains(*c)).count();
                if kept < categories.len() || values.len() == 1 {
                    folds.push((column.clone(), categories.clone(), values));
                }
            }
        }
    }
    if folds.is_empty() {
        return Ok(None);
    }

    let model = match pipeline.model() {
        Model::Linear {
            weights,
            intercept,
            link,
        } => {
            let mut intercept = *intercept;
            let mut kept = Vec::with_capacity(weights.len());
            'weights: for (feature, w) in weights {
                for (column, categories, values) in &folds {
                    for c in categories {
                        if *feature == onehot_feature(column, c) {
                            if !values.contains(c) {
                                continue 'weights;
                            }
                            if values.len() == 1 {
                                intercept += w;
                                continue 'weights;
                            }
                        }
                    }
                }
                kept.push((feature.clone(), *w));
            }
            Model::linear(kept, intercept, *link)?
        }
        tree_model => {
            let bounds = feature_bounds(pipeline, env);
            let onehot_only = bounds
                .into_iter()
                .filter(|(f, _)| {
                    folds
                        .iter()
                        .any(|(column, cats, _)| cats.iter().any(|c| *f == onehot_feature(column, c)))
                })
                .collect();
            prune_model(tree_model, &onehot_only)
        }
    };

    let referenced = model.referenced_features();
    let featurizers = pipeline
        .featurizers()
        .iter()
        .filter_map(|f| match f {
            Featurizer::OneHot {
                column,
                categories,
                unknown,
            } => match folds.iter().find(|(c, _, _)| c == column) {
                None => Some(f.clone()),
                Some((_, _, values)) => {
                    // Categories whose indicator the model still reads must stay.
                    let kept: Vec<String> = categories
                        .iter()
                        .filter(|c| values.contains(*c) || referenced.contains(&onehot_feature(column, c)))
                        .cloned()
                        .collect();
                    (!kept.is_empty()).then(|| Featurizer::OneHot {
                        column: column.clone(),
                        categories: kept,
                        unknown: *unknown,
                    })
                }
            },
            other => Some(other.clone()),
        })
        .collect();
    let out = ModelPipeline::new(pipeline.inputs().to_vec(), featurizers, model, pipeline.output())?;
    Ok((out != *pipeline).then_some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DataType, Link, OutputKind, PipelineInput};

    fn dest_model() -> ModelPipeline {
        let cats: Vec<String> = ["JFK", "SEA", "LAX", "ORD", "ATL"].iter().map(|s| s.to_string()).collect();
        let mut weights: Vec<(String, f64)> = cats
            .iter()
            .enumerate()
            .map(|(i, c)| (onehot_feature("dest", c), i as f64 + 0.5))
            .collect();
        weights.push(("dist".into(), 0.25));
        ModelPipeline::new(
            vec![
                PipelineInput::new("dest", DataType::Categorical),
                PipelineInput::new("dist", DataType::Numeric),
            ],
            vec![Featurizer::OneHot {
                column: "dest".into(),
                categories: cats,
                unknown: UnknownPolicy::Zeros,
            }],
            Model::linear(weights, 1.0, Link::Identity).unwrap(),
            OutputKind::Scores,
        )
        .unwrap()
    }

    fn env(d: FeatureDomain) -> DomainEnv {
        let mut e = DomainEnv::top();
        e.restrict("dest", &d);
        e
    }

    #[test]
    fn constant_folds_into_intercept() {
        let p = fold_onehot(&dest_model(), &env(FeatureDomain::Constant(Literal::str("JFK"))))
            .unwrap()
            .unwrap();
        let Model::Linear { weights, intercept, .. } = p.model() else {
            panic!()
        };
        assert_eq!(weights.len(), 1);
        assert_eq!(*intercept, 1.5);
    }

    #[test]
    fn value_set_shrinks_encoder() {
        let set = [Literal::str("JFK"), Literal::str("SEA")].into_iter().collect();
        let p = fold_onehot(&dest_model(), &env(FeatureDomain::ValueSet(set))).unwrap().unwrap();
        match &p.featurizers()[0] {
            Featurizer::OneHot { categories, .. } => assert_eq!(categories, &["JFK", "SEA"]),
            _ => panic!(),
        }
        assert_eq!(p.model().feature_count(), 3);
    }

    #[test]
    fn full_value_set_is_unchanged() {
        let set = ["JFK", "SEA", "LAX", "ORD", "ATL"].iter().map(|s| Literal::str(*s)).collect();
        assert!(fold_onehot(&dest_model(), &env(FeatureDomain::ValueSet(set))).unwrap().is_none());
    }
}
