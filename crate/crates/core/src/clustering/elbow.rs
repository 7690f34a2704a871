use crate::error::{FluxError, Result};
use crate::scalar::{euclidean, Scalar};

/// Distance from every point to its second-nearest other point, sorted
/// ascending.
pub fn second_nn_curve<T: Scalar>(points: &[&[T]]) -> Result<Vec<T>> {
    if points.len() < 3 {
        return Err(FluxError::precondition("too few clients to calibrate ε"));
    }
    let mut curve = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len() - 1);
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        for (j, q) in points.iter().enumerate() {
            if i != j {
                dists.push(euclidean(p, q));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        curve.push(dists[1]);
    }
    curve.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(curve)
}

/// A curve value counts as sparse when it exceeds this multiple of the
/// curve median.
pub const SPARSE_RATIO: f64 = 3.0;

/// Index of the elbow of a sorted second-nearest-neighbour curve: the last
/// value not exceeding `SPARSE_RATIO` times the median, i.e. the top of the
/// dense part of the curve. A curve without sparse values (including a
/// constant one) yields its last index.
pub fn elbow_index<T: Scalar>(curve: &[T]) -> Result<usize> {
    if curve.len() < 3 {
        return Err(FluxError::precondition("elbow detection needs at least 3 points"));
    }
    if curve.windows(2).any(|w| w[1] < w[0]) {
        return Err(FluxError::precondition("elbow curve must be sorted ascending"));
    }
    let n = curve.len();
    let median = if n % 2 == 1 {
        curve[n / 2]
    } else {
        (curve[n / 2 - 1] + curve[n / 2]) * T::lit(0.5)
    };
    let limit = median * T::lit(SPARSE_RATIO);
    Ok(curve.iter().rposition(|&c| c <= limit).unwrap_or(n - 1))
}

/// `curve[elbow] * scale`.
pub fn elbow_epsilon<T: Scalar>(curve: &[T], scale: T) -> Result<T> {
    Ok(curve[elbow_index(curve)?] * scale)
}
