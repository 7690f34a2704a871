//! Closed-form 2-Wasserstein distance between Gaussians and the
//! Lipschitz-equivalence bound relating it to the moment-descriptor distance.
//!
//! For diagonal covariances `Sigma = diag(sigma^2)` the squared Bures term
//! reduces to `sum_i (sigma_a,i - sigma_b,i)^2`, so
//! `W2^2 = |mu_a - mu_b|^2 + |sigma_a - sigma_b|^2`.

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::scalar::{squared_euclidean, Scalar};

/// `N(mean, diag(sigma^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary<T> {
    pub mean: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Scalar> GaussianSummary<T> {
    pub fn new(mean: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if mean.len() != sigma.len() {
            return Err(FluxError::dim("sigma length", mean.len(), sigma.len()));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < T::zero()) {
            return Err(FluxError::precondition("standard deviations must be finite and >= 0"));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(FluxError::precondition("means must be finite"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> impl Iterator<Item = T> + '_ {
        self.sigma.iter().map(|&s| s * s)
    }
}

fn check_dims<T: Scalar>(a: &GaussianSummary<T>, b: &GaussianSummary<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(FluxError::dim("gaussian dimension", a.dim(), b.dim()));
    }
    Ok(())
}

pub fn w2_squared_diag<T: Scalar>(a: &GaussianSummary<T>, b: &GaussianSummary<T>) -> Result<T> {
    check_dims(a, b)?;
    Ok(squared_euclidean(&a.mean, &b.mean) + squared_euclidean(&a.sigma, &b.sigma))
}

pub fn w2_gaussian_diag<T: Scalar>(a: &GaussianSummary<T>, b: &GaussianSummary<T>) -> Result<T> {
    w2_squared_diag(a, b).map(T::sqrt)
}

/// `(c_minus, c_plus) = (min{1, 1/(2 sqrt(lmax))}, max{1, 1/(2 sqrt(lmin))})`.
pub fn prop1_constants<T: Scalar>(lambda_min: T, lambda_max: T) -> Result<(T, T)> {
    if !(lambda_min > T::zero()) || !(lambda_max >= lambda_min) || !lambda_max.is_finite() {
        return Err(FluxError::precondition(format!(
            "eigenvalue bounds must satisfy 0 < lambda_min <= lambda_max (got {lambda_min}, {lambda_max})"
        )));
    }
    let two = T::lit(2.0);
    let c_minus = T::one().min(T::one() / (two * lambda_max.sqrt()));
    let c_plus = T::one().max(T::one() / (two * lambda_min.sqrt()));
    Ok((c_minus, c_plus))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck<T> {
    /// `|mu_a - mu_b|^2 + |Sigma_a - Sigma_b|_F^2` on variances.
    pub delta_sq: T,
    pub w2_sq: T,
    pub holds: bool,
}

pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Checks `c-^2 Delta^2 <= W2^2 <= c+^2 Delta^2`, with `Delta` taken on
/// covariance entries (variances), not on standard deviations.
pub fn check_prop1_bound<T: Scalar>(
    a: &GaussianSummary<T>,
    b: &GaussianSummary<T>,
    lambda_min: T,
    lambda_max: T,
) -> Result<BoundCheck<T>> {
    check_dims(a, b)?;
    let (c_minus, c_plus) = prop1_constants(lambda_min, lambda_max)?;
    // relative slack so the band check tolerates round-off in the variances
    let band_slack = T::lit(1e-12) * lambda_max;
    for v in a.variances().chain(b.variances()) {
        if v < lambda_min - band_slack || v > lambda_max + band_slack {
            return Err(FluxError::precondition(format!(
                "variance {v} outside [{lambda_min}, {lambda_max}]"
            )));
        }
    }
    let mean_sq = squared_euclidean(&a.mean, &b.mean);
    let cov_sq = a
        .variances()
        .zip(b.variances())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<T>();
    let delta_sq = mean_sq + cov_sq;
    let w2_sq = w2_squared_diag(a, b)?;
    let tol = T::lit(BOUND_TOLERANCE);
    let holds = c_minus * c_minus * delta_sq <= w2_sq + tol
        && w2_sq <= c_plus * c_plus * delta_sq + tol;
    Ok(BoundCheck {
        delta_sq,
        w2_sq,
        holds,
    })
}

/// Dense-matrix reference path used to cross-check the diagonal fast path.
pub mod reference {
    use crate::error::{FluxError, Result};
    use crate::numcore::{psd_sqrt, Matrix};
    use crate::scalar::{squared_euclidean, Scalar};

    /// `Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2})` via Jacobi
    /// eigendecompositions.
    pub fn bures_squared<T: Scalar>(s1: &Matrix<T>, s2: &Matrix<T>) -> Result<T> {
        if s1.rows() != s2.rows() || s1.cols() != s2.cols() {
            return Err(FluxError::dim("covariance shape", s1.rows(), s2.rows()));
        }
        let tol = T::lit(1e-15);
        let r1 = psd_sqrt(s1, tol)?;
        let mut inner = r1.matmul(s2)?.matmul(&r1)?;
        symmetrize(&mut inner);
        let cross = psd_sqrt(&inner, tol)?;
        let n = s1.rows();
        let trace = (0..n)
            .map(|i| s1[(i, i)] + s2[(i, i)] - T::lit(2.0) * cross[(i, i)])
            .sum::<T>();
        Ok(trace.max(T::zero()))
    }

    pub fn w2_squared<T: Scalar>(
        mu1: &[T],
        s1: &Matrix<T>,
        mu2: &[T],
        s2: &Matrix<T>,
    ) -> Result<T> {
        if mu1.len() != mu2.len() {
            return Err(FluxError::dim("mean length", mu1.len(), mu2.len()));
        }
        Ok(squared_euclidean(mu1, mu2) + bures_squared(s1, s2)?)
    }

    fn symmetrize<T: Scalar>(m: &mut Matrix<T>) {
        let half = T::lit(0.5);
        for i in 0..m.rows() {
            for j in 0..i {
                let v = half * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }

    /// `R diag(d) R^T`.
    pub fn rotate_diagonal<T: Scalar>(rotation: &Matrix<T>, diag: &[T]) -> Result<Matrix<T>> {
        let n = diag.len();
        let mut d = Matrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            d[(i, i)] = v;
        }
        let mut out = rotation.matmul(&d)?.matmul(&rotation.transpose())?;
        symmetrize(&mut out);
        Ok(out)
    }
}
