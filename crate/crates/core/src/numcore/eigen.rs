//! Cyclic Jacobi eigendecomposition for symmetric matrices.

use crate::error::{FluxError, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
/// `vectors` holds one eigenvector per row.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi sweeps until the off-diagonal Frobenius mass drops below
/// `tol` times the matrix norm (or no rotation changes anything).
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>, tol: T) -> Result<SymmetricEigen<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(FluxError::dim("square matrix", n, a.cols()));
    }
    let scale = a.frobenius_norm().max(T::min_positive_value());
    if !a.is_symmetric(T::lit(1e-9) * scale) {
        return Err(FluxError::precondition("matrix is not symmetric"));
    }
    let mut m = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let two = T::lit(2.0);

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<T>()
            .sqrt();
        if off <= tol * scale {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                if s == T::zero() {
                    continue;
                }
                rotated = true;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among equal eigenvalues
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (row, &col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(row, k)] = v[(k, col)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Negative eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt<T: Scalar>(a: &Matrix<T>, tol: T) -> Result<Matrix<T>> {
    let eig = symmetric_eigen(a, tol)?;
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        let root = lambda.max(T::zero()).sqrt();
        let vk = eig.vectors.row(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = out[(i, j)] + root * vk[i] * vk[j];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;

    fn random_symmetric(n: usize, rng: &mut RngStream) -> Matrix<f64> {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.next_gaussian();
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    #[test]
    fn diagonal_input_is_sorted() {
        let mut a = Matrix::<f64>::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 3.0;
        a[(2, 2)] = 2.0;
        let eig = symmetric_eigen(&a, 1e-12).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(eig.vectors.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reconstructs_random_matrices() {
        let mut rng = RngStream::new(11);
        for n in [1, 2, 5, 12] {
            let a = random_symmetric(n, &mut rng);
            let eig = symmetric_eigen(&a, 1e-12).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let rec: f64 = (0..n)
                        .map(|k| eig.values[k] * eig.vectors[(k, i)] * eig.vectors[(k, j)])
                        .sum();
                    assert!((rec - a[(i, j)]).abs() < 1e-10, "n={n} ({i},{j})");
                }
            }
            // orthonormal rows
            let g = eig.vectors.matmul(&eig.vectors.transpose()).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = RngStream::new(5);
        let b = random_symmetric(4, &mut rng);
        let a = b.matmul(&b).unwrap(); // PSD
        let r = psd_sqrt(&a, 1e-14).unwrap();
        let rr = r.matmul(&r).unwrap();
        for (x, y) in rr.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(symmetric_eigen(&a, 1e-12).is_err());
    }
}
