use crate::clustering::{elbow_epsilon, second_nn_curve, ClusterState};
use crate::descriptor::DescriptorVector;
use crate::error::Result;
use crate::scalar::{euclidean, Scalar};

/// A point is core when at least this many points (itself included) lie in
/// its closed `epsilon` ball.
pub const DBSCAN_MIN_SAMPLES: usize = 2;

/// Plain DBSCAN with closed neighbourhoods. Returns one label per point;
/// `None` marks noise. Core components are labelled by their lowest point
/// index; a border point joins the cluster of its lowest-index core
/// neighbour.
pub fn dbscan<T: Scalar>(points: &[&[T]], epsilon: T, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(points[i], points[j]) <= epsilon)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut label = vec![None; n];
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        label[seed] = Some(seed);
        let mut stack = vec![seed];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && label[q].is_none() {
                    label[q] = Some(seed);
                    stack.push(q);
                }
            }
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        label[i] = neighbours[i]
            .iter()
            .copied()
            .find(|&j| core[j])
            .and_then(|j| label[j]);
    }
    label
}

/// DBSCAN with the radius calibrated from the elbow of the second-nearest
/// neighbour curve, `min_samples = 2`, and every noise point promoted to
/// its own singleton cluster. With fewer than three clients every client is
/// a singleton.
pub fn dbscan_adaptive<T: Scalar>(
    descriptors: &[DescriptorVector<T>],
    scale: T,
) -> Result<ClusterState<T>> {
    let points: Vec<&[T]> = descriptors.iter().map(|d| d.values.as_slice()).collect();
    if points.len() < 3 {
        let labels: Vec<usize> = (0..points.len()).collect();
        return ClusterState::from_labels(&labels, descriptors);
    }
    let curve = second_nn_curve(&points)?;
    let epsilon = elbow_epsilon(&curve, scale)?;
    let n = points.len();
    let labels: Vec<usize> = dbscan(&points, epsilon, DBSCAN_MIN_SAMPLES)
        .into_iter()
        .enumerate()
        // noise points get fresh ids past every core-seed index
        .map(|(i, l)| l.unwrap_or(n + i))
        .collect();
    let mut state = ClusterState::from_labels(&labels, descriptors)?;
    state.epsilon = Some(epsilon);
    log::debug!("dbscan: epsilon = {epsilon}, clusters = {}", state.m);
    Ok(state)
}
