//! Unsupervised client grouping over descriptors.

mod dbscan;
mod elbow;
mod kmeans;

pub use dbscan::{dbscan, dbscan_adaptive, DBSCAN_MIN_SAMPLES};
pub use elbow::{elbow_epsilon, elbow_index, second_nn_curve};
pub use kmeans::{kmeans_prior, KMeansReport};

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorVector;
use crate::error::{FluxError, Result};
use crate::scalar::{squared_euclidean, Scalar};

/// A hard partition of clients into `m` clusters.
///
/// Cluster ids are canonical: ordered by the smallest client index they
/// contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState<T> {
    pub m: usize,
    pub assignment: Vec<usize>,
    /// Mean label-free prefix per cluster.
    pub centroids: Vec<Vec<T>>,
    /// Mean full descriptor per cluster.
    pub full_centroids: Vec<Vec<T>>,
    /// Neighbourhood radius, when the partition came from DBSCAN.
    pub epsilon: Option<T>,
}

impl<T: Scalar> ClusterState<T> {
    /// Builds a state from arbitrary (non-negative) labels, renumbering them
    /// canonically and computing both centroid sets.
    pub fn from_labels(labels: &[usize], descriptors: &[DescriptorVector<T>]) -> Result<Self> {
        if labels.len() != descriptors.len() {
            return Err(FluxError::dim("cluster labels", descriptors.len(), labels.len()));
        }
        let assignment = canonical_relabel(labels);
        let m = assignment.iter().copied().max().map_or(0, |x| x + 1);
        let centroids = centroids_of(&assignment, m, descriptors, true);
        let full_centroids = centroids_of(&assignment, m, descriptors, false);
        Ok(Self {
            m,
            assignment,
            centroids,
            full_centroids,
            epsilon: None,
        })
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.m];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Renames labels to `0..m` in order of first appearance.
pub fn canonical_relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn centroids_of<T: Scalar>(
    assignment: &[usize],
    m: usize,
    descriptors: &[DescriptorVector<T>],
    prefix_only: bool,
) -> Vec<Vec<T>> {
    let width = descriptors.first().map_or(0, |d| {
        if prefix_only {
            d.label_free().len()
        } else {
            d.len()
        }
    });
    let mut sums = vec![vec![T::zero(); width]; m];
    let mut counts = vec![0usize; m];
    for (d, &c) in descriptors.iter().zip(assignment) {
        let src = if prefix_only { d.label_free() } else { &d.values };
        for (s, &v) in sums[c].iter_mut().zip(src) {
            *s = *s + v;
        }
        counts[c] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        let n = T::from_count(n.max(1));
        s.iter_mut().for_each(|v| *v = *v / n);
    }
    sums
}

/// Index of the closest centroid (lowest index on ties).
pub fn assign_nearest_centroid<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> Result<usize> {
    if centroids.is_empty() {
        return Err(FluxError::precondition("no centroids to assign to"));
    }
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, c) in centroids.iter().enumerate() {
        if c.len() != point.len() {
            return Err(FluxError::dim("centroid length", point.len(), c.len()));
        }
        let d = squared_euclidean(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}
