//! Committee construction: partition the training data, then pick the
//! best-fitting distinct model per partition.
//!
//! Clustering runs k-means (k-means++ seeding, 10 restarts) on z-scored
//! vectors of inputs plus response. The cluster count grows with the data,
//! `min(10, floor(n/3))`, so ensembles start small and never exceed 10
//! members. When only one cluster forms the Pareto front of the population
//! stands in as the committee.

use thiserror::Error;

use crate::data::Dataset;
use crate::evolution::{self, Population};
use crate::model::StackModel;
use crate::rng::GeneticRng;

/// Hard cap on committee size.
pub const MAX_CLUSTERS: usize = 10;

/// Cluster assignment of every training point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per training point, values in `0..k`.
    pub assignments: Vec<usize>,
    pub k: usize,
}

/// How the committee was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleSource {
    /// One best model per data cluster.
    Clustered,
    /// Pareto front of the population (single-cluster fallback).
    ParetoFallback,
}

/// A committee member: the model plus its affine alignment fitted on the
/// full training set, so member responses share the target's scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub model: StackModel,
    pub scale: f64,
    pub offset: f64,
}

impl EnsembleMember {
    /// Aligned response at `x`; `None` when the model is invalid there.
    pub fn respond(&self, x: &[f64]) -> Option<f64> {
        self.model.evaluate(x).map(|v| self.scale * v + self.offset)
    }
}

/// An ordered set of distinct models used for disagreement queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
    pub source: EnsembleSource,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("population has fewer than two distinct models; spawn more before building an ensemble")]
    TooFewDistinctModels,
}

/// Cluster count rule: at least three points per cluster on average,
/// capped at [`MAX_CLUSTERS`].
pub fn cluster_count(n: usize) -> usize {
    (n / 3).clamp(1, MAX_CLUSTERS)
}

/// Partitions the training data. For `k >= 2` this is k-means on z-scored
/// (inputs, response) vectors; a collapse to one nonempty cluster degrades
/// to `k = 1`.
pub fn cluster_data(train: &Dataset, rng: &mut GeneticRng) -> Clustering {
    assert!(!train.is_empty(), "cannot cluster an empty dataset");
    let k = cluster_count(train.len());
    if k == 1 {
        return Clustering {
            assignments: vec![0; train.len()],
            k: 1,
        };
    }
    let vectors = zscore_vectors(train);
    let assignments = kmeans(&vectors, k, 10, 100, rng);
    let found = normalize_labels(assignments);
    Clustering {
        k: found.1,
        assignments: found.0,
    }
}

/// Feature vectors for clustering: inputs and response, each dimension
/// z-scored. Constant dimensions contribute zero.
fn zscore_vectors(train: &Dataset) -> Vec<Vec<f64>> {
    let dim = train.dim() + 1;
    let n = train.len();
    let feature = |p: &crate::data::LabeledPoint, d: usize| -> f64 {
        if d < p.inputs.len() {
            p.inputs[d]
        } else {
            p.response
        }
    };
    let mut means = vec![0.0; dim];
    for p in &train.points {
        for (d, m) in means.iter_mut().enumerate() {
            *m += feature(p, d);
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut stds = vec![0.0; dim];
    for p in &train.points {
        for (d, s) in stds.iter_mut().enumerate() {
            let diff = feature(p, d) - means[d];
            *s += diff * diff;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
    }
    train
        .points
        .iter()
        .map(|p| {
            (0..dim)
                .map(|d| {
                    if stds[d] > 0.0 {
                        (feature(p, d) - means[d]) / stds[d]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Lloyd iterations with k-means++ seeding and restarts; returns the
/// assignment with the lowest within-cluster sum of squares. Clusters that
/// empty out are dropped, so the label set may be smaller than `k`.
pub fn kmeans(
    vectors: &[Vec<f64>],
    k: usize,
    restarts: usize,
    max_iters: usize,
    rng: &mut GeneticRng,
) -> Vec<usize> {
    let k = k.min(vectors.len()).max(1);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let (assignment, inertia) = kmeans_once(vectors, k, max_iters, rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assignment));
        }
    }
    best.expect("at least one restart").1
}

fn kmeans_once(
    vectors: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut GeneticRng,
) -> (Vec<usize>, f64) {
    use rand::Rng;
    let n = vectors.len();
    let dim = vectors[0].len();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(vectors[rng.gen_range(0..n)].clone());
    let mut dists: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(vectors[next].clone());
        for (i, v) in vectors.iter().enumerate() {
            let d = sq_dist(v, centroids.last().unwrap());
            if d < dists[i] {
                dists[i] = d;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let mut nearest = 0;
            let mut best = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(v, centroid);
                if d < best {
                    best = d;
                    nearest = c;
                }
            }
            if assignment[i] != nearest {
                assignment[i] = nearest;
                changed = true;
            }
        }
        // recompute centroids, dropping any that emptied
        let mut counts = vec![0usize; centroids.len()];
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        for (i, v) in vectors.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (d, x) in v.iter().enumerate() {
                sums[assignment[i]][d] += x;
            }
        }
        let mut kept: Vec<Vec<f64>> = Vec::new();
        let mut remap = vec![usize::MAX; centroids.len()];
        for (c, count) in counts.iter().enumerate() {
            if *count > 0 {
                remap[c] = kept.len();
                kept.push(sums[c].iter().map(|s| s / *count as f64).collect());
            }
        }
        if kept.len() < centroids.len() {
            for a in &mut assignment {
                *a = remap[*a];
            }
            centroids = kept;
            continue;
        }
        centroids = kept;
        if !changed {
            break;
        }
    }
    let inertia: f64 = vectors
        .iter()
        .zip(&assignment)
        .map(|(v, &a)| sq_dist(v, &centroids[a]))
        .sum();
    (assignment, inertia)
}

/// Remaps labels to a dense `0..k` range in order of first appearance.
fn normalize_labels(assignment: Vec<usize>) -> (Vec<usize>, usize) {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::with_capacity(assignment.len());
    for a in assignment {
        let dense = match map.iter().find(|(orig, _)| *orig == a) {
            Some((_, d)) => *d,
            None => {
                let d = map.len();
                map.push((a, d));
                d
            }
        };
        out.push(dense);
    }
    let k = map.len();
    (out, k)
}

/// Builds the committee.
///
/// With two or more clusters: for each cluster in index order, every
/// model's mean absolute error over that cluster's points (after full-train
/// affine alignment) is computed and the best not-yet-chosen model joins;
/// a model already taken falls through to the next best. With one cluster:
/// the population's Pareto front, truncated to the 10 lowest-loss members,
/// padded from the next nondominated ranks if fewer than two remain.
pub fn build_ensemble(
    pop: &Population,
    train: &Dataset,
    clustering: &Clustering,
) -> Result<Ensemble, EnsembleError> {
    let distinct = distinct_indices(pop);
    if distinct.len() < 2 {
        return Err(EnsembleError::TooFewDistinctModels);
    }

    if clustering.k >= 2 {
        // alignment and per-point absolute errors for every distinct model
        let aligned: Vec<(usize, f64, f64, Vec<f64>)> = distinct
            .iter()
            .map(|&idx| {
                let model = &pop.models[idx].model;
                let (a, b) = evolution::align_model(model, train);
                let mut scratch = Vec::new();
                let errors: Vec<f64> = train
                    .points
                    .iter()
                    .map(|p| match model.evaluate_with(&p.inputs, &mut scratch) {
                        Some(v) => (a * v + b - p.response).abs(),
                        None => f64::INFINITY,
                    })
                    .collect();
                (idx, a, b, errors)
            })
            .collect();

        let mut chosen: Vec<usize> = Vec::new(); // positions into `aligned`
        for cluster in 0..clustering.k {
            let points: Vec<usize> = clustering
                .assignments
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c == cluster)
                .map(|(i, _)| i)
                .collect();
            let mut best: Option<(f64, usize)> = None;
            for (pos, (_, _, _, errors)) in aligned.iter().enumerate() {
                if chosen.contains(&pos) {
                    continue;
                }
                let mae: f64 =
                    points.iter().map(|&i| errors[i]).sum::<f64>() / points.len() as f64;
                let better = match best {
                    Some((b, _)) => mae < b,
                    None => true,
                };
                if better {
                    best = Some((mae, pos));
                }
            }
            if let Some((_, pos)) = best {
                chosen.push(pos);
            }
        }
        let members: Vec<EnsembleMember> = chosen
            .into_iter()
            .map(|pos| {
                let (idx, a, b, _) = &aligned[pos];
                EnsembleMember {
                    model: pop.models[*idx].model.clone(),
                    scale: *a,
                    offset: *b,
                }
            })
            .collect();
        if members.len() < 2 {
            return Err(EnsembleError::TooFewDistinctModels);
        }
        return Ok(Ensemble {
            members,
            source: EnsembleSource::Clustered,
        });
    }

    // single-cluster fallback: Pareto front, deduplicated, sized into [2, 10]
    let order = evolution::rank_order(pop);
    let fits: Vec<_> = pop.models.iter().map(|s| s.fitness).collect();
    let ranks = evolution::nondominated_ranks(&fits);
    let mut picked: Vec<usize> = Vec::new();
    let take_from_rank = |rank: usize, picked: &mut Vec<usize>| {
        for &idx in &order {
            if picked.len() >= MAX_CLUSTERS {
                break;
            }
            if ranks[idx] != rank {
                continue;
            }
            let model = &pop.models[idx].model;
            if picked.iter().any(|&p| pop.models[p].model == *model) {
                continue;
            }
            picked.push(idx);
        }
    };
    take_from_rank(0, &mut picked);
    let mut next_rank = 1;
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    while picked.len() < 2 && next_rank <= max_rank {
        take_from_rank(next_rank, &mut picked);
        next_rank += 1;
    }
    if picked.len() < 2 {
        return Err(EnsembleError::TooFewDistinctModels);
    }
    let members = picked
        .into_iter()
        .map(|idx| {
            let model = pop.models[idx].model.clone();
            let (a, b) = evolution::align_model(&model, train);
            EnsembleMember {
                model,
                scale: a,
                offset: b,
            }
        })
        .collect();
    Ok(Ensemble {
        members,
        source: EnsembleSource::ParetoFallback,
    })
}

/// Indices of structurally distinct models, first occurrence wins.
fn distinct_indices(pop: &Population) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, s) in pop.models.iter().enumerate() {
        if !out.iter().any(|&j| pop.models[j].model == s.model) {
            out.push(i);
        }
    }
    out
}
