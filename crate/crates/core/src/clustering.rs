//! Temporally-weighted first-neighbor clustering of clip features.
//!
//! Every clip links to its first neighbor (the closest other clip under a
//! cosine distance scaled by the normalized temporal gap), the connected
//! components of that link graph form a partition, and the procedure repeats
//! on cluster means until a single cluster remains or nothing merges.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{axpy, cosine_similarity, Matrix, NORM_EPS};

/// One level of the hierarchy. Cluster ids follow ascending mean time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
    /// `num_clusters x d` member means over the original clips.
    #[serde(skip)]
    pub means: Matrix,
    /// Mean clip index of each cluster.
    pub times: Vec<f64>,
}

impl Partition {
    /// Builds a partition from arbitrary labels, recomputing means over the
    /// original clips and relabeling clusters by ascending mean time.
    fn from_labels(features: &Matrix, labels: &[usize]) -> Partition {
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut sums = Matrix::zeros(count, features.cols());
        let mut time_sums = vec![0.0; count];
        let mut sizes = vec![0usize; count];
        let mut first_member = vec![usize::MAX; count];
        for (i, &c) in labels.iter().enumerate() {
            axpy(1.0, features.row(i), sums.row_mut(c));
            time_sums[c] += i as f64;
            sizes[c] += 1;
            first_member[c] = first_member[c].min(i);
        }
        let times: Vec<f64> = (0..count).map(|c| time_sums[c] / sizes[c] as f64).collect();

        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| {
            times[a]
                .total_cmp(&times[b])
                .then(first_member[a].cmp(&first_member[b]))
        });
        let mut rename = vec![0usize; count];
        for (new, &old) in order.iter().enumerate() {
            rename[old] = new;
        }

        let mut means = Matrix::zeros(count, features.cols());
        for (new, &old) in order.iter().enumerate() {
            let inv = 1.0 / sizes[old] as f64;
            for (m, s) in means.row_mut(new).iter_mut().zip(sums.row(old)) {
                *m = s * inv;
            }
        }
        Partition {
            assignment: labels.iter().map(|&c| rename[c]).collect(),
            num_clusters: count,
            means,
            times: order.iter().map(|&old| times[old]).collect(),
        }
    }
}

/// Nested partitions, finest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionHierarchy {
    pub levels: Vec<Partition>,
}

impl PartitionHierarchy {
    pub fn cluster_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|p| p.num_clusters).collect()
    }

    pub fn num_clips(&self) -> usize {
        self.levels.first().map_or(0, |p| p.assignment.len())
    }
}

/// The partition handed to the keyword and context modules.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterContext {
    /// Cluster id of every clip (C).
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
    /// `num_clusters x d` clustered features (F^cv).
    pub features: Matrix,
    /// Index of the hierarchy level this context came from.
    pub level: usize,
    /// True when pairwise merges below `level` produced the partition.
    pub refined: bool,
}

/// Labels produced by one round of first-neighbor linking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub labels: Vec<usize>,
    pub count: usize,
}

/// `D[i][j] = (1 - cos(f_i, f_j)) * |t_i - t_j| / scale`.
pub(crate) fn weighted_distances(features: &Matrix, times: &[f64], scale: f64, eps: f64) -> Matrix {
    let n = features.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let feature_gap = 1.0 - cosine_similarity(features.row(i), features.row(j), eps);
            let value = feature_gap * (times[i] - times[j]).abs() / scale;
            d.set(i, j, value);
            d.set(j, i, value);
        }
    }
    d
}

/// Temporally-weighted distance matrix over clips, using clip indices as times.
pub fn tw_distance_matrix(clip_features: &Matrix, eps: f64) -> Result<Matrix> {
    let l = clip_features.rows();
    if l < 2 {
        return Err(Error::InvalidArgument(format!(
            "distance matrix needs at least two clips, got {l}"
        )));
    }
    let times: Vec<f64> = (0..l).map(|i| i as f64).collect();
    Ok(weighted_distances(clip_features, &times, l as f64, eps))
}

/// Index of the first neighbor of each row; ties go to the smallest index.
pub fn first_neighbors(distances: &Matrix) -> Vec<usize> {
    let n = distances.rows();
    (0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_value = f64::INFINITY;
            for j in (0..n).filter(|&j| j != i) {
                let v = distances.get(i, j);
                if best == usize::MAX || v < best_value {
                    best = j;
                    best_value = v;
                }
            }
            if best == usize::MAX {
                i
            } else {
                best
            }
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the first-neighbor graph, numbered in order of
/// their smallest member.
pub fn first_neighbor_partition(distances: &Matrix) -> Grouping {
    let n = distances.rows();
    let kappa = first_neighbors(distances);
    let mut parent: Vec<usize> = (0..n).collect();
    // i~kappa(i) edges also connect every pair sharing a first neighbor
    for (i, &k) in kappa.iter().enumerate() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, k));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut root_label = vec![usize::MAX; n];
    let mut labels = vec![0usize; n];
    let mut count = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_label[r] == usize::MAX {
            root_label[r] = count;
            count += 1;
        }
        labels[i] = root_label[r];
    }
    Grouping { labels, count }
}

/// Builds the full partition hierarchy of a video's clips.
pub fn build_hierarchy(clip_features: &Matrix) -> PartitionHierarchy {
    let l = clip_features.rows();
    let mut labels = if l < 2 {
        vec![0; l]
    } else {
        let times: Vec<f64> = (0..l).map(|i| i as f64).collect();
        first_neighbor_partition(&weighted_distances(
            clip_features,
            &times,
            l as f64,
            NORM_EPS,
        ))
        .labels
    };
    let mut levels: Vec<Partition> = Vec::new();
    loop {
        let part = Partition::from_labels(clip_features, &labels);
        let count = part.num_clusters;
        if count <= 1 {
            levels.push(part);
            break;
        }
        let grouping = first_neighbor_partition(&weighted_distances(
            &part.means,
            &part.times,
            l as f64,
            NORM_EPS,
        ));
        labels = part
            .assignment
            .iter()
            .map(|&c| grouping.labels[c])
            .collect();
        levels.push(part);
        if grouping.count >= count {
            break;
        }
    }
    PartitionHierarchy { levels }
}

/// Default number of clusters for a video of `num_clips` clips.
pub fn default_target(num_clips: usize) -> usize {
    (num_clips as f64).sqrt().ceil().max(1.0) as usize
}

/// Picks the level whose cluster count is closest to `target_clusters`
/// (default `ceil(sqrt(L))`); ties go to the coarser level.
pub fn select_partition(
    hierarchy: &PartitionHierarchy,
    target_clusters: Option<usize>,
) -> ClusterContext {
    let target = target_clusters.unwrap_or_else(|| default_target(hierarchy.num_clips()));
    let mut best = 0;
    for (i, level) in hierarchy.levels.iter().enumerate() {
        let gap = level.num_clusters.abs_diff(target);
        if gap <= hierarchy.levels[best].num_clusters.abs_diff(target) {
            best = i;
        }
    }
    let level = &hierarchy.levels[best];
    ClusterContext {
        assignment: level.assignment.clone(),
        num_clusters: level.num_clusters,
        features: level.means.clone(),
        level: best,
        refined: false,
    }
}

/// Produces exactly `target` clusters when the hierarchy allows it. A level
/// with that count is returned as is; otherwise the coarsest level with more
/// clusters is coarsened by repeatedly merging the closest pair of clusters
/// under the temporally-weighted distance (lowest index pair on ties). When
/// every level is coarser than `target`, the finest level is returned.
pub fn refine_partition(
    hierarchy: &PartitionHierarchy,
    clip_features: &Matrix,
    target: usize,
) -> ClusterContext {
    let target = target.max(1);
    let Some(start) = hierarchy
        .levels
        .iter()
        .rposition(|p| p.num_clusters >= target)
    else {
        return select_partition(hierarchy, Some(target));
    };
    let level = &hierarchy.levels[start];
    if level.num_clusters == target {
        return select_partition(hierarchy, Some(target));
    }
    let l = clip_features.rows();
    let mut labels = level.assignment.clone();
    let mut part = level.clone();
    while part.num_clusters > target {
        let d = weighted_distances(&part.means, &part.times, l as f64, NORM_EPS);
        let mut pair = (0, 1);
        for i in 0..part.num_clusters {
            for j in (i + 1)..part.num_clusters {
                if d.get(i, j) < d.get(pair.0, pair.1) {
                    pair = (i, j);
                }
            }
        }
        // fold cluster pair.1 into pair.0 and close the gap in the ids
        for c in labels.iter_mut() {
            if *c == pair.1 {
                *c = pair.0;
            } else if *c > pair.1 {
                *c -= 1;
            }
        }
        part = Partition::from_labels(clip_features, &labels);
        labels = part.assignment.clone();
    }
    ClusterContext {
        assignment: part.assignment,
        num_clusters: part.num_clusters,
        features: part.means,
        level: start,
        refined: true,
    }
}

/// Clusters a video: with an explicit target, exactly that many clusters via
/// [`refine_partition`]; otherwise the level nearest `ceil(sqrt(L))`.
pub fn cluster_clips(clip_features: &Matrix, target_clusters: Option<usize>) -> ClusterContext {
    let hierarchy = build_hierarchy(clip_features);
    match target_clusters {
        Some(k) => refine_partition(&hierarchy, clip_features, k),
        None => select_partition(&hierarchy, None),
    }
}

/// Fraction of items whose cluster's majority reference label equals their own.
pub fn purity(assignment: &[usize], reference: &[usize]) -> f64 {
    assert_eq!(assignment.len(), reference.len());
    if assignment.is_empty() {
        return 1.0;
    }
    let clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let labels = reference.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; labels]; clusters];
    for (&c, &r) in assignment.iter().zip(reference) {
        table[c][r] += 1;
    }
    let agree: usize = table
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    agree as f64 / assignment.len() as f64
}
