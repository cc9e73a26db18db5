//! Characteristic samples: prototype clustering of drift regions or
//! segments under plain, drift-aware geodesic, or forest-kernel metrics,
//! with per-prototype occurrence profiles.

use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::localization::{LocusReport, Region};
use crate::models::TimeModel;
use crate::seed;
use crate::segmentation::{histogram_tv, time_bin, Segmentation, TIME_BINS};

/// Symmetric pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    /// Upper triangle, row-major: entry (i, j) for i < j.
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.data[a * self.n - a * (a + 1) / 2 + (b - a - 1)]
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance kind for prototype selection and counterfactual search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    /// k-NN graph weighted by `d_L + lambda * d_X`, distances via all-pairs
    /// shortest paths. `d_L` is the total variation between the model's
    /// predicted time distributions at the endpoints.
    DriftGeodesic {
        k_neighbors: usize,
        lambda: f64,
    },
    /// `1 - rf_kernel(x, y)`: fraction of forest trees separating x and y.
    ForestKernel,
}

impl Default for MetricKind {
    fn default() -> Self {
        MetricKind::DriftGeodesic {
            k_neighbors: 10,
            lambda: 1.0,
        }
    }
}

/// Model context supplying the drift-aware part of a metric.
#[derive(Clone, Copy)]
pub enum ModelContext<'a> {
    /// No model available: only the euclidean metric works.
    None,
    /// Before/after classifier: time distributions are Bernoullis.
    Classifier(&'a TimeModel),
    /// Segmentation: time distributions are per-segment occurrence
    /// histograms, and the underlying model serves the forest kernel.
    Segments(&'a Segmentation),
}

impl<'a> ModelContext<'a> {
    fn model(&self) -> Option<&'a TimeModel> {
        match self {
            ModelContext::None => None,
            ModelContext::Classifier(m) => Some(m),
            ModelContext::Segments(s) => Some(&s.model),
        }
    }
}

/// Pairwise distances between `samples` under the requested metric.
pub fn pairwise_drift_distance(
    samples: &[Vec<f64>],
    ctx: ModelContext,
    kind: MetricKind,
) -> Result<DistanceMatrix> {
    if samples.is_empty() {
        return Err(DriftError::EmptyGroup);
    }
    let n = samples.len();
    match kind {
        MetricKind::Euclidean => Ok(DistanceMatrix::from_fn(n, |i, j| {
            l2(&samples[i], &samples[j])
        })),
        MetricKind::ForestKernel => {
            let model = ctx
                .model()
                .ok_or(DriftError::WrongModelKind("forest_kernel needs a model"))?;
            let tuples: Result<Vec<Vec<usize>>> =
                samples.iter().map(|x| model.leaf_tuple(x)).collect();
            let tuples = tuples?;
            Ok(DistanceMatrix::from_fn(n, |i, j| {
                let same = tuples[i]
                    .iter()
                    .zip(&tuples[j])
                    .filter(|(a, b)| a == b)
                    .count();
                1.0 - same as f64 / tuples[i].len() as f64
            }))
        }
        MetricKind::DriftGeodesic {
            k_neighbors,
            lambda,
        } => {
            if k_neighbors < 2 {
                return Err(DriftError::InvalidConfig("k_neighbors must be >= 2".into()));
            }
            if lambda < 0.0 {
                return Err(DriftError::InvalidConfig("lambda must be >= 0".into()));
            }
            let drift_dist = drift_distances(samples, ctx)?;
            let feature_dist = DistanceMatrix::from_fn(n, |i, j| l2(&samples[i], &samples[j]));
            let edges = knn_edges(&feature_dist, k_neighbors.min(n.saturating_sub(1)).max(1));
            let weighted: Vec<(usize, usize, f64)> = edges
                .into_iter()
                .map(|(i, j)| (i, j, drift_dist.get(i, j) + lambda * feature_dist.get(i, j)))
                .collect();
            let augmented = connect_components(n, weighted, |i, j| {
                drift_dist.get(i, j) + lambda * feature_dist.get(i, j)
            });
            shortest_paths(n, &augmented)
        }
    }
}

/// Total variation between predicted time distributions for every pair.
fn drift_distances(samples: &[Vec<f64>], ctx: ModelContext) -> Result<DistanceMatrix> {
    let n = samples.len();
    match ctx {
        ModelContext::None => Err(DriftError::WrongModelKind(
            "drift_geodesic needs a model context",
        )),
        ModelContext::Classifier(model) => {
            let probs: Result<Vec<f64>> = samples.iter().map(|x| model.p_after(x)).collect();
            let probs = probs?;
            Ok(DistanceMatrix::from_fn(n, |i, j| {
                (probs[i] - probs[j]).abs()
            }))
        }
        ModelContext::Segments(seg) => {
            let hists: Result<Vec<&Vec<u64>>> = samples
                .iter()
                .map(|x| {
                    let (id, _) = seg.model.predict_moments(x)?;
                    seg.segments
                        .get(&id)
                        .map(|info| &info.time_histogram)
                        .ok_or(DriftError::WrongModelKind("sample outside segmentation"))
                })
                .collect();
            let hists = hists?;
            Ok(DistanceMatrix::from_fn(n, |i, j| {
                histogram_tv(hists[i], hists[j])
            }))
        }
    }
}

/// Symmetrized k-nearest-neighbour edge list under the given distances.
fn knn_edges(dist: &DistanceMatrix, k: usize) -> Vec<(usize, usize)> {
    let n = dist.n();
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            dist.get(i, a)
                .partial_cmp(&dist.get(i, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in others.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges.into_iter().collect()
}

/// Repairs a disconnected graph by repeatedly adding the lightest edge
/// between two components.
fn connect_components(
    n: usize,
    mut edges: Vec<(usize, usize, f64)>,
    weight: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize, f64)> {
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut Vec<usize>, i: usize) -> usize {
        if comp[i] != i {
            let root = find(comp, comp[i]);
            comp[i] = root;
        }
        comp[i]
    }
    for &(i, j, _) in &edges {
        let (a, b) = (find(&mut comp, i), find(&mut comp, j));
        if a != b {
            comp[a.max(b)] = a.min(b);
        }
    }
    loop {
        let mut roots: Vec<usize> = (0..n).map(|i| find(&mut comp, i)).collect();
        roots.sort_unstable();
        roots.dedup();
        if roots.len() <= 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                if find(&mut comp, i) == find(&mut comp, j) {
                    continue;
                }
                let w = weight(i, j);
                if best.map_or(true, |(bw, bi, bj)| {
                    w < bw || (w == bw && (i, j) < (bi, bj))
                }) {
                    best = Some((w, i, j));
                }
            }
        }
        let (w, i, j) = best.expect("components remain");
        edges.push((i, j, w));
        let (a, b) = (find(&mut comp, i), find(&mut comp, j));
        comp[a.max(b)] = a.min(b);
    }
    edges
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: BinaryHeap is a max-heap, we want the smallest distance
        other
            .0
            .partial_cmp(&self.0)
            .expect("finite weights")
            .then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest paths over an undirected weighted edge list.
pub fn shortest_paths(n: usize, edges: &[(usize, usize, f64)]) -> Result<DistanceMatrix> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, w) in edges {
        adj[i].push((j, w));
        adj[j].push((i, w));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|source| {
            let mut dist = vec![f64::INFINITY; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapEntry(0.0, source));
            while let Some(HeapEntry(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &(v, w) in &adj[u] {
                    let nd = d + w;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(HeapEntry(nd, v));
                    }
                }
            }
            dist
        })
        .collect();
    for row in &rows {
        if row.iter().any(|d| d.is_infinite()) {
            return Err(DriftError::DisconnectedGraph);
        }
    }
    Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j]))
}

/// One prototype with its assigned members (indices are local to the group
/// passed to [`select_prototypes`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeCluster {
    /// Centroid under euclidean means; the medoid sample otherwise.
    pub prototype: Vec<f64>,
    /// Local index of the medoid, or of the member nearest the centroid.
    pub anchor_local: usize,
    pub member_local: Vec<usize>,
}

/// Clustering metric for [`select_prototypes`].
pub enum PrototypeMetric<'a> {
    /// k-means on raw feature vectors.
    EuclideanMeans,
    /// PAM-style k-medoids on a precomputed matrix.
    Matrix(&'a DistanceMatrix),
}

/// Clusters a group into `k` prototypes.
pub fn select_prototypes(
    samples: &[Vec<f64>],
    k: usize,
    metric: &PrototypeMetric,
    seed_value: u64,
) -> Result<Vec<PrototypeCluster>> {
    let n = samples.len();
    if n == 0 {
        return Err(DriftError::EmptyGroup);
    }
    if k == 0 || k > n {
        return Err(DriftError::KTooLarge { k, size: n });
    }
    match metric {
        PrototypeMetric::EuclideanMeans => Ok(kmeans(samples, k, seed_value)),
        PrototypeMetric::Matrix(dist) => {
            if dist.n() != n {
                return Err(DriftError::DimensionMismatch {
                    expected: n,
                    got: dist.n(),
                });
            }
            Ok(pam(samples, dist, k))
        }
    }
}

fn kmeans(samples: &[Vec<f64>], k: usize, seed_value: u64) -> Vec<PrototypeCluster> {
    use rand::Rng;
    let n = samples.len();
    let d = samples[0].len();
    let mut rng = seed::rng_for(seed_value, seed::STREAM_CLUSTER);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(samples[rng.random_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = samples
            .iter()
            .map(|x| {
                centroids
                    .iter()
                    .map(|c| {
                        let dd = l2(x, c);
                        dd * dd
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(samples[next].clone());
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, x) in samples.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    l2(x, &centroids[a])
                        .partial_cmp(&l2(x, &centroids[b]))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap();
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, x) in samples.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, &v) in sums[assignment[i]].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        l2(&samples[a], &centroids[assignment[a]])
                            .partial_cmp(&l2(&samples[b], &centroids[assignment[b]]))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[c] = samples[far].clone();
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centroids[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    (0..k)
        .map(|c| {
            let member_local: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            let anchor_local = member_local
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    l2(&samples[a], &centroids[c])
                        .partial_cmp(&l2(&samples[b], &centroids[c]))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap_or(0);
            PrototypeCluster {
                prototype: centroids[c].clone(),
                anchor_local,
                member_local,
            }
        })
        .collect()
}

/// PAM: greedy BUILD initialization, then best-improvement SWAP until a
/// local optimum. The objective (total distance to nearest medoid) is
/// non-increasing across swaps, so termination is guaranteed.
fn pam(samples: &[Vec<f64>], dist: &DistanceMatrix, k: usize) -> Vec<PrototypeCluster> {
    let n = dist.n();
    let mut medoids: Vec<usize> = Vec::with_capacity(k);

    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let mut total = 0.0;
            for j in 0..n {
                let mut nearest = dist.get(cand, j);
                for &m in &medoids {
                    nearest = nearest.min(dist.get(m, j));
                }
                total += nearest;
            }
            if best.map_or(true, |(bt, bc)| total < bt || (total == bt && cand < bc)) {
                best = Some((total, cand));
            }
        }
        medoids.push(best.expect("candidate exists").1);
    }

    let cost = |medoids: &[usize]| -> f64 {
        (0..n)
            .map(|j| {
                medoids
                    .iter()
                    .map(|&m| dist.get(m, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let mut current = cost(&medoids);
    loop {
        let mut best_swap: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = cost(&trial);
                if c < current - 1e-15 && best_swap.map_or(true, |(bc, _, _)| c < bc) {
                    best_swap = Some((c, slot, cand));
                }
            }
        }
        match best_swap {
            Some((c, slot, cand)) => {
                medoids[slot] = cand;
                debug_assert!(c <= current);
                current = c;
            }
            None => break,
        }
    }
    medoids.sort_unstable();

    let mut clusters: Vec<PrototypeCluster> = medoids
        .iter()
        .map(|&m| PrototypeCluster {
            prototype: samples[m].clone(),
            anchor_local: m,
            member_local: Vec::new(),
        })
        .collect();
    for j in 0..n {
        let slot = (0..k)
            .min_by(|&a, &b| {
                dist.get(medoids[a], j)
                    .partial_cmp(&dist.get(medoids[b], j))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        clusters[slot].member_local.push(j);
    }
    clusters
}

/// Identifier of a prototype group: a drift region or a drift segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case")]
pub enum GroupId {
    Region { region: Region },
    Segment { id: u64 },
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupId::Region { region } => write!(f, "region:{region:?}"),
            GroupId::Segment { id } => write!(f, "segment:{id}"),
        }
    }
}

/// A prototype with dataset-level member indices and its occurrence profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeEntry {
    pub prototype: Vec<f64>,
    /// Dataset index of the prototype sample (medoid, or member nearest the
    /// centroid under euclidean means).
    pub anchor_index: usize,
    pub member_indices: Vec<usize>,
    /// Occurrence counts of the members over the standard time bins.
    pub occurrence_profile: Vec<u64>,
}

/// Prototypes per drift region or flagged segment.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PrototypeSet {
    pub groups: Vec<(GroupId, Vec<PrototypeEntry>)>,
    pub warnings: Vec<String>,
}

impl PrototypeSet {
    pub fn entries(&self) -> impl Iterator<Item = (&GroupId, &PrototypeEntry)> {
        self.groups
            .iter()
            .flat_map(|(id, list)| list.iter().map(move |e| (id, e)))
    }
}

/// Grouping source for prototype construction.
pub enum Grouping<'a> {
    Locus(&'a LocusReport),
    Segments(&'a Segmentation),
}

/// Builds prototypes for every drift group.
///
/// Locus groupings yield a Before and an After group (locus members only);
/// segmentations yield one group per flagged segment. Groups smaller than
/// `k_per_group` are served with a clamped k and a warning; empty groups are
/// skipped with a warning.
pub fn build_prototypes(
    ds: &Dataset,
    grouping: &Grouping,
    k_per_group: usize,
    metric: MetricKind,
    ctx: ModelContext,
    seed_value: u64,
) -> Result<PrototypeSet> {
    if k_per_group == 0 {
        return Err(DriftError::KTooLarge { k: 0, size: 0 });
    }
    let groups: Vec<(GroupId, Vec<usize>)> = match grouping {
        Grouping::Locus(report) => {
            if report.len() != ds.len() {
                return Err(DriftError::MismatchedDataset {
                    expected: report.len(),
                    got: ds.len(),
                });
            }
            vec![
                (
                    GroupId::Region {
                        region: Region::Before,
                    },
                    report.indices_in(Region::Before),
                ),
                (
                    GroupId::Region {
                        region: Region::After,
                    },
                    report.indices_in(Region::After),
                ),
            ]
        }
        Grouping::Segments(seg) => {
            if seg.assignments.len() != ds.len() {
                return Err(DriftError::MismatchedDataset {
                    expected: seg.assignments.len(),
                    got: ds.len(),
                });
            }
            seg.flagged_segments()
                .into_iter()
                .map(|id| (GroupId::Segment { id }, seg.member_indices(id)))
                .collect()
        }
    };

    let mut set = PrototypeSet::default();
    if groups.iter().all(|(_, members)| members.is_empty()) {
        set.warnings.push("no drifting groups found".to_string());
        return Ok(set);
    }

    for (gi, (group_id, members)) in groups.into_iter().enumerate() {
        if members.is_empty() {
            set.warnings
                .push(format!("group {group_id} is empty, skipped"));
            continue;
        }
        let k = if k_per_group > members.len() {
            set.warnings.push(format!(
                "group {group_id}: k clamped from {k_per_group} to {}",
                members.len()
            ));
            members.len()
        } else {
            k_per_group
        };
        let group_samples: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| ds.samples()[i].features.clone())
            .collect();
        let clusters = match metric {
            MetricKind::Euclidean => select_prototypes(
                &group_samples,
                k,
                &PrototypeMetric::EuclideanMeans,
                seed::mix(seed_value, gi as u64),
            )?,
            _ => {
                let dist = pairwise_drift_distance(&group_samples, ctx, metric)?;
                select_prototypes(
                    &group_samples,
                    k,
                    &PrototypeMetric::Matrix(&dist),
                    seed::mix(seed_value, gi as u64),
                )?
            }
        };
        let entries: Vec<PrototypeEntry> = clusters
            .into_iter()
            .map(|c| {
                let member_indices: Vec<usize> =
                    c.member_local.iter().map(|&l| members[l]).collect();
                let mut occurrence_profile = vec![0u64; TIME_BINS];
                for &i in &member_indices {
                    occurrence_profile[time_bin(ds.samples()[i].time)] += 1;
                }
                PrototypeEntry {
                    prototype: c.prototype,
                    anchor_index: members[c.anchor_local],
                    member_indices,
                    occurrence_profile,
                }
            })
            .collect();
        set.groups.push((group_id, entries));
    }
    Ok(set)
}


#[cfg(test)]
mod build_tests {
    use super::*;
    use crate::data::Dataset;
    use crate::models::FitConfig;
    use crate::segmentation::{flag_drifting_segments, segment};

    fn tiny_stream() -> Dataset {
        let mut rng = crate::seed::rng_for(45, 0);
        use rand::Rng;
        let n = 80;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Dataset::from_normalized(rows, times, vec!["x".into()]).unwrap()
    }

    #[test]
    fn no_flagged_segments_yields_empty_set_with_warning() {
        let ds = tiny_stream();
        let cfg = FitConfig {
            max_depth: 2,
            min_leaf: 10,
            ..FitConfig::default()
        };
        let seg = segment(
            &ds,
            &crate::data::TimeEmbedding::Polynomial { degree: 2 },
            &cfg,
        )
        .unwrap();
        // impossible threshold: nothing flagged
        let seg = flag_drifting_segments(seg, 10.0);
        let set = build_prototypes(
            &ds,
            &Grouping::Segments(&seg),
            3,
            MetricKind::Euclidean,
            ModelContext::Segments(&seg),
            1,
        )
        .unwrap();
        assert!(set.groups.is_empty());
        assert!(!set.warnings.is_empty());
    }

    #[test]
    fn small_group_clamps_k_with_warning() {
        let ds = tiny_stream();
        let report = crate::localization::LocusReport {
            change_point: 0.5,
            prior: 0.5,
            theta: 0.0,
            kl_scores: vec![1.0; ds.len()],
            p_after: (0..ds.len())
                .map(|i| if i < 2 { 0.1 } else { 0.9 })
                .collect(),
            in_locus: vec![true; ds.len()],
            region: (0..ds.len())
                .map(|i| {
                    if i < 2 {
                        crate::localization::Region::Before
                    } else {
                        crate::localization::Region::After
                    }
                })
                .collect(),
        };
        let set = build_prototypes(
            &ds,
            &Grouping::Locus(&report),
            3,
            MetricKind::Euclidean,
            ModelContext::None,
            2,
        )
        .unwrap();
        // the two-sample Before group was served with k clamped to 2
        let before = set
            .groups
            .iter()
            .find(|(id, _)| {
                matches!(
                    id,
                    GroupId::Region {
                        region: crate::localization::Region::Before
                    }
                )
            })
            .expect("before group present");
        assert_eq!(before.1.len(), 2);
        assert!(set.warnings.iter().any(|w| w.contains("clamped")));
    }
}
