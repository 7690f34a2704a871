use crate::clustering::ClusterState;
use crate::descriptor::DescriptorVector;
use crate::error::{FluxError, Result};
use crate::numcore::RngStream;
use crate::scalar::{squared_euclidean, Scalar};

#[derive(Debug, Clone)]
pub struct KMeansReport<T> {
    pub state: ClusterState<T>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub inertia: Vec<T>,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding over full descriptors, for a
/// known cluster count `m`.
pub fn kmeans_prior<T: Scalar>(
    descriptors: &[DescriptorVector<T>],
    m: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansReport<T>> {
    let n = descriptors.len();
    if m == 0 {
        return Err(FluxError::config("k-means needs at least one cluster"));
    }
    if m > n {
        return Err(FluxError::config(format!("k-means with {m} clusters over {n} clients")));
    }
    let points: Vec<&[T]> = descriptors.iter().map(|d| d.values.as_slice()).collect();
    let mut rng = RngStream::new(seed);
    let mut centers = plus_plus_seeds(&points, m, &mut rng);
    let mut assignment = assign_all(&points, &centers);
    let mut inertia = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        repair_empty(&points, &mut assignment, &centers, m);
        centers = recompute(&points, &assignment, m);
        inertia.push(sse(&points, &assignment, &centers));
        let next = assign_all(&points, &centers);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    repair_empty(&points, &mut assignment, &centers, m);

    Ok(KMeansReport {
        state: ClusterState::from_labels(&assignment, descriptors)?,
        inertia,
        iterations,
    })
}

fn plus_plus_seeds<T: Scalar>(points: &[&[T]], m: usize, rng: &mut RngStream) -> Vec<Vec<T>> {
    let n = points.len();
    let mut chosen = vec![rng.next_below(n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_euclidean(p, points[chosen[0]]).to_f64_lossy())
        .collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // round-off can leave target past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.next_below(free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_euclidean(p, points[next]).to_f64_lossy());
        }
    }
    chosen.iter().map(|&i| points[i].to_vec()).collect()
}

fn assign_all<T: Scalar>(points: &[&[T]], centers: &[Vec<T>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (c, center) in centers.iter().enumerate() {
                let d = squared_euclidean(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the point farthest from its current centre,
/// taken from a cluster with more than one member.
fn repair_empty<T: Scalar>(
    points: &[&[T]],
    assignment: &mut [usize],
    centers: &[Vec<T>],
    m: usize,
) {
    loop {
        let mut counts = vec![0usize; m];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = squared_euclidean(points[i], &centers[assignment[i]]);
                let dj = squared_euclidean(points[j], &centers[assignment[j]]);
                // prefer the lower index on ties
                di.partial_cmp(&dj)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(j.cmp(&i))
            })
            .expect("m <= n guarantees a donor");
        assignment[donor] = empty;
    }
}

fn recompute<T: Scalar>(points: &[&[T]], assignment: &[usize], m: usize) -> Vec<Vec<T>> {
    let dim = points[0].len();
    let mut sums = vec![vec![T::zero(); dim]; m];
    let mut counts = vec![0usize; m];
    for (p, &a) in points.iter().zip(assignment) {
        for (s, &v) in sums[a].iter_mut().zip(p.iter()) {
            *s = *s + v;
        }
        counts[a] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let c = T::from_count(c.max(1));
        s.iter_mut().for_each(|v| *v = *v / c);
    }
    sums
}

fn sse<T: Scalar>(points: &[&[T]], assignment: &[usize], centers: &[Vec<T>]) -> T {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_euclidean(p, &centers[a]))
        .sum()
}
