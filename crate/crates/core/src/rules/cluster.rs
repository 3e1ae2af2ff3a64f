//! Model clustering: k-means over the numeric inputs, then one pipeline
//! specialized to the constants of each cluster, served behind a guard.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::onehot::fold_onehot;
use super::prune::{feature_bounds, prune_model};
use crate::analysis::{DomainEnv, FeatureDomain};
use crate::error::{Error, Result};
use crate::exec::Table;
use crate::ir::{ClusterDispatch, ClusterSpec, DataType, Literal, ModelPipeline};
use crate::scalar::Scalar;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T> {
    pub centroids: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
}

fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding. Stops after
/// [`MAX_ITERATIONS`] or when centroids move less than [`TOLERANCE`]
/// relative to their norm. A cluster left empty is reseeded with the point
/// farthest from its centroid (lowest index on ties).
pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64) -> Result<KMeans<T>> {
    if k == 0 {
        return Err(Error::Cluster("k must be at least 1".into()));
    }
    let distinct: BTreeSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_param().to_bits()).collect())
        .collect();
    if k > distinct.len() {
        return Err(Error::Cluster(format!(
            "k = {k} exceeds the {} distinct sample rows",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<T>> = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0]).to_param()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = d2.iter().rposition(|d| *d > 0.0).expect("k <= distinct rows");
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &centroids[centroids.len() - 1]).to_param());
        }
    }

    let dims = points[0].len();
    let mut assignment = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![T::zero(); dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s = *s + *v;
            }
        }
        let mut next: Vec<Vec<T>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / T::from_index(n)).collect()
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = dist2(&points[a], &next[assignment[a]]);
                        let db = dist2(&points[b], &next[assignment[b]]);
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                    })
                    .expect("points are non-empty");
                next[c] = points[far].clone();
                counts[c] = 1;
                counts[assignment[far]] -= 1;
                assignment[far] = c;
            }
        }
        let shift: f64 = next.iter().zip(&centroids).map(|(a, b)| dist2(a, b).to_param()).sum();
        let norm: f64 = centroids.iter().map(|c| dist2(c, &vec![T::zero(); dims]).to_param()).sum();
        centroids = next;
        if shift.sqrt() <= TOLERANCE * norm.sqrt().max(1.0) {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(p, &centroids).0;
    }
    Ok(KMeans {
        centroids,
        assignment,
        iterations,
    })
}

/// Per-cluster summary of a compiled dispatcher.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub members: usize,
    pub constants: BTreeMap<String, Literal>,
    pub feature_count: usize,
    pub node_count: usize,
}

/// Clusters the sample on the pipeline's numeric inputs and specializes the
/// pipeline to the columns constant within each cluster. `bound[i]` names
/// the sample column feeding pipeline input `i`. Rows with a NULL numeric
/// input do not take part in clustering.
pub fn cluster_compile(
    sample: &Table,
    pipeline: &Arc<ModelPipeline>,
    bound: &[String],
    k: usize,
    seed: u64,
) -> Result<(ClusterDispatch, Vec<ClusterReport>)> {
    if sample.row_count() == 0 {
        return Err(Error::Cluster("sample is empty".into()));
    }
    let columns = bound
        .iter()
        .map(|c| {
            sample
                .column_by_name(c)
                .cloned()
                .ok_or_else(|| Error::UnknownColumn(c.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let numeric: Vec<usize> = (0..pipeline.inputs().len())
        .filter(|&i| pipeline.inputs()[i].data_type == DataType::Numeric)
        .collect();
    let rows: Vec<usize> = (0..sample.row_count())
        .filter(|&r| numeric.iter().all(|&i| !columns[i].is_null(r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Cluster("no sample row has all numeric inputs".into()));
    }
    let n = rows.len() as f64;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for &i in &numeric {
        let m = rows.iter().map(|&r| columns[i].feature(r)).sum::<f64>() / n;
        let v = rows.iter().map(|&r| (columns[i].feature(r) - m).powi(2)).sum::<f64>() / n;
        means.push(m);
        stds.push(if v > 0.0 { v.sqrt() } else { 1.0 });
    }
    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            numeric
                .iter()
                .enumerate()
                .map(|(j, &i)| (columns[i].feature(r) - means[j]) / stds[j])
                .collect()
        })
        .collect();
    let km = kmeans(&points, k, seed)?;

    let mut clusters = Vec::with_capacity(k);
    let mut reports = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> = rows
            .iter()
            .zip(&km.assignment)
            .filter(|(_, a)| **a == c)
            .map(|(r, _)| *r)
            .collect();
        let mut constants = BTreeMap::new();
        for (i, input) in pipeline.inputs().iter().enumerate() {
            let first = columns[i].value(members[0]);
            if let Some(v) = first {
                if members.iter().all(|&r| columns[i].value(r).as_ref() == Some(&v)) {
                    constants.insert(input.name.clone(), v);
                }
            }
        }
        let specialized = Arc::new(specialize(pipeline, &constants)?);
        reports.push(ClusterReport {
            members: members.len(),
            constants: constants.clone(),
            feature_count: specialized.model().feature_count(),
            node_count: specialized.model().node_count(),
        });
        clusters.push(ClusterSpec {
            constants,
            pipeline: specialized,
        });
    }
    Ok((
        ClusterDispatch {
            features: numeric.iter().map(|&i| pipeline.inputs()[i].name.clone()).collect(),
            means,
            stds,
            centroids: km.centroids,
            clusters,
            fallback: pipeline.clone(),
        },
        reports,
    ))
}

/// The pipeline folded and pruned under constant inputs. Inputs stay the
/// same so the dispatcher can feed every cluster the same encoded row.
pub fn specialize(pipeline: &ModelPipeline, constants: &BTreeMap<String, Literal>) -> Result<ModelPipeline> {
    let mut env = DomainEnv::top();
    for (c, v) in constants {
        env.restrict(c, &FeatureDomain::Constant(v.clone()));
    }
    let folded = fold_onehot(pipeline, &env)?.unwrap_or_else(|| pipeline.clone());
    let pruned = prune_model(folded.model(), &feature_bounds(&folded, &env));
    folded.with_model(pruned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let d = i as f64 * 0.01;
            pts.push(vec![d, d]);
            pts.push(vec![10.0 + d, 10.0 - d]);
        }
        let km = kmeans(&pts, 2, 7).unwrap();
        for pair in km.assignment.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert_eq!(km, kmeans(&pts, 2, 7).unwrap());
    }

    #[test]
    fn k_above_distinct_rows_fails() {
        let pts = vec![vec![1.0f64], vec![1.0], vec![2.0]];
        assert!(matches!(kmeans(&pts, 3, 0), Err(Error::Cluster(_))));
    }

    #[test]
    fn f32_points_work() {
        let pts: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32]).collect();
        let km = kmeans(&pts, 3, 1).unwrap();
        assert_eq!(km.centroids.len(), 3);
    }
}
