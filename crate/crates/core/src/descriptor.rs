//! Client distribution descriptors.
//!
//! Extraction runs in four steps:
//! 1. every client reports the coordinate-wise min/max of its latents and the
//!    server merges them into a shared alignment box;
//! 2. every party samples the same synthetic points from the box (shared
//!    seed) and fits the same PCA projection;
//! 3. the client projects its latents and computes per-coordinate means and
//!    standard deviations, marginally and per class;
//! 4. optionally, each coordinate is perturbed with Laplace noise.
//!
//! The descriptor layout is `[mu_x, sigma_x, mu_0, sigma_0, ..., mu_{U-1},
//! sigma_{U-1}]`; the leading `(mu_x, sigma_x)` block needs no labels.

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::numcore::{symmetric_eigen, Matrix, RngStream};
use crate::scalar::{euclidean, Scalar};

/// Shared latent box `[m_minus, m_plus]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBounds<T> {
    pub m_minus: Vec<T>,
    pub m_plus: Vec<T>,
}

impl<T: Scalar> AlignmentBounds<T> {
    pub fn new(m_minus: Vec<T>, m_plus: Vec<T>) -> Result<Self> {
        if m_minus.len() != m_plus.len() {
            return Err(FluxError::dim("bounds length", m_minus.len(), m_plus.len()));
        }
        if m_minus.iter().zip(&m_plus).any(|(lo, hi)| !(lo <= hi)) {
            return Err(FluxError::precondition("m_minus must not exceed m_plus"));
        }
        Ok(Self { m_minus, m_plus })
    }

    pub fn dim(&self) -> usize {
        self.m_minus.len()
    }

    pub fn widths(&self) -> impl Iterator<Item = T> + '_ {
        self.m_minus.iter().zip(&self.m_plus).map(|(&lo, &hi)| hi - lo)
    }
}

/// Coordinate-wise `(min, max)` over the rows of `latents`.
pub fn local_bounds<T: Scalar>(latents: &Matrix<T>) -> Result<(Vec<T>, Vec<T>)> {
    if latents.rows() == 0 {
        return Err(FluxError::precondition("bounds of an empty latent matrix"));
    }
    let mut lo = latents.row(0).to_vec();
    let mut hi = lo.clone();
    for row in latents.row_iter().skip(1) {
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
            *l = l.min(v);
            *h = h.max(v);
        }
    }
    Ok((lo, hi))
}

pub fn merge_bounds<T: Scalar>(parts: &[(Vec<T>, Vec<T>)]) -> Result<AlignmentBounds<T>> {
    let (first_lo, first_hi) = parts
        .first()
        .ok_or_else(|| FluxError::precondition("no client bounds to merge"))?;
    let dim = first_lo.len();
    let mut lo = first_lo.clone();
    let mut hi = first_hi.clone();
    for (plo, phi) in parts {
        if plo.len() != dim || phi.len() != dim {
            return Err(FluxError::dim("client bounds length", dim, plo.len().max(phi.len())));
        }
        for i in 0..dim {
            lo[i] = lo[i].min(plo[i]);
            hi[i] = hi[i].max(phi[i]);
        }
    }
    AlignmentBounds::new(lo, hi)
}

/// Linear projection `x -> components (x - mean)` onto `l` principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMap<T> {
    pub mean: Vec<T>,
    /// `l x v`, orthonormal rows.
    pub components: Matrix<T>,
}

pub const PCA_REFERENCE_POINTS: usize = 200;
pub const JACOBI_TOLERANCE: f64 = 1e-12;

impl<T: Scalar> PcaMap<T> {
    pub fn reduced_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn project(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(FluxError::dim("latent width", self.input_dim(), x.cols()));
        }
        let l = self.reduced_dim();
        let mut out = Matrix::zeros(x.rows(), l);
        let mut centered = vec![T::zero(); x.cols()];
        for (r, row) in x.row_iter().enumerate() {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            for (k, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = self
                    .components
                    .row(k)
                    .iter()
                    .zip(&centered)
                    .fold(T::zero(), |a, (&w, &c)| a + w * c);
            }
        }
        Ok(out)
    }

    /// Width of the alignment box projected onto component `k`:
    /// `sum_j |components[k][j]| * (m_plus - m_minus)_j`.
    pub fn projected_range(&self, k: usize, bounds: &AlignmentBounds<T>) -> T {
        self.components
            .row(k)
            .iter()
            .zip(bounds.widths())
            .fold(T::zero(), |a, (&w, width)| a + w.abs() * width)
    }
}

/// Fits the shared PCA on `n_points` uniform samples from the alignment box.
///
/// Parties calling this with identical bounds and seed obtain bit-identical
/// maps. Each component's sign is fixed so its largest-magnitude entry is
/// positive.
pub fn fit_shared_pca<T: Scalar>(
    bounds: &AlignmentBounds<T>,
    n_points: usize,
    l: usize,
    shared_seed: u64,
) -> Result<PcaMap<T>> {
    let v = bounds.dim();
    if l == 0 || l > v {
        return Err(FluxError::config(format!("reduced dimension l = {l} must be in 1..={v}")));
    }
    if n_points <= l {
        return Err(FluxError::config(format!(
            "need more than l = {l} reference points, got {n_points}"
        )));
    }
    let active = bounds.widths().filter(|&w| w > T::zero()).count();
    if active == 0 {
        return Err(FluxError::precondition("zero-volume alignment box"));
    }
    if active < l {
        return Err(FluxError::precondition(format!(
            "alignment box has {active} non-degenerate coordinates, need at least l = {l}"
        )));
    }

    let mut rng = RngStream::new(shared_seed);
    let mut points = Matrix::zeros(n_points, v);
    for r in 0..n_points {
        for (j, p) in points.row_mut(r).iter_mut().enumerate() {
            *p = rng.uniform(bounds.m_minus[j], bounds.m_plus[j]);
        }
    }
    let n = T::from_count(n_points);
    let mut mean = vec![T::zero(); v];
    for row in points.row_iter() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m = *m + x;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);

    let mut cov = Matrix::zeros(v, v);
    for row in points.row_iter() {
        for i in 0..v {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] = cov[(i, j)] + di * (row[j] - mean[j]);
            }
        }
    }
    let denom = T::from_count(n_points - 1);
    for i in 0..v {
        for j in 0..=i {
            let c = cov[(i, j)] / denom;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }

    let eig = symmetric_eigen(&cov, T::lit(JACOBI_TOLERANCE))?;
    let mut components = Matrix::zeros(l, v);
    for k in 0..l {
        let src = eig.vectors.row(k);
        let mut pivot = 0;
        for (j, x) in src.iter().enumerate() {
            if x.abs() > src[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if src[pivot] < T::zero() { -T::one() } else { T::one() };
        for (dst, &x) in components.row_mut(k).iter_mut().zip(src) {
            *dst = sign * x;
        }
    }
    Ok(PcaMap { mean, components })
}

/// Which blocks a descriptor carries and in what reduced dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorLayout {
    pub l: usize,
    pub classes: usize,
    pub with_sigma: bool,
    pub with_class_blocks: bool,
}

impl DescriptorLayout {
    pub fn new(l: usize, classes: usize) -> Self {
        Self {
            l,
            classes,
            with_sigma: true,
            with_class_blocks: true,
        }
    }

    /// Length of one `(mu, sigma)` block.
    pub fn block_len(&self) -> usize {
        if self.with_sigma {
            2 * self.l
        } else {
            self.l
        }
    }

    /// Length of the label-free prefix.
    pub fn prefix_len(&self) -> usize {
        self.block_len()
    }

    /// Total length; `2 (U + 1) l` with every block enabled.
    pub fn len(&self) -> usize {
        let blocks = if self.with_class_blocks {
            self.classes + 1
        } else {
            1
        };
        blocks * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector<T> {
    pub values: Vec<T>,
    pub layout: DescriptorLayout,
    pub sample_count: usize,
    /// Privacy budget of the Laplace noise, if any was applied.
    pub dp_epsilon: Option<f64>,
}

impl<T: Scalar> DescriptorVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The label-free sub-vector `d'`.
    pub fn label_free(&self) -> &[T] {
        &self.values[..self.layout.prefix_len()]
    }
}

/// Laplace plug-in: noise scale `b_i = Range(g_i) / (s * epsilon)`.
#[derive(Debug, Clone, Copy)]
pub struct DpParams<'a, T> {
    pub epsilon: f64,
    pub bounds: &'a AlignmentBounds<T>,
}

/// Per-coordinate Laplace scales for a client with `sample_count` samples.
/// Mean coordinates use the projected box width, standard deviations half
/// of it.
pub fn laplace_scales<T: Scalar>(
    pca: &PcaMap<T>,
    layout: &DescriptorLayout,
    bounds: &AlignmentBounds<T>,
    sample_count: usize,
    epsilon: f64,
) -> Result<Vec<T>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(FluxError::config(format!("dp epsilon must be positive, got {epsilon}")));
    }
    if sample_count == 0 {
        return Err(FluxError::precondition("sample count must be positive"));
    }
    let denom = T::from_count(sample_count) * T::lit(epsilon);
    let mu_scales: Vec<T> = (0..layout.l)
        .map(|k| pca.projected_range(k, bounds) / denom)
        .collect();
    let half = T::lit(0.5);
    let mut block = mu_scales.clone();
    if layout.with_sigma {
        block.extend(mu_scales.iter().map(|&b| b * half));
    }
    let blocks = layout.len() / layout.block_len();
    Ok(block.iter().copied().cycle().take(blocks * block.len()).collect())
}

fn moments_into<T: Scalar>(rows: &[&[T]], l: usize, with_sigma: bool, out: &mut [T]) {
    if rows.is_empty() {
        return;
    }
    let n = T::from_count(rows.len());
    for k in 0..l {
        let mean = rows.iter().map(|r| r[k]).sum::<T>() / n;
        out[k] = mean;
        if with_sigma {
            let var = rows
                .iter()
                .map(|r| (r[k] - mean) * (r[k] - mean))
                .sum::<T>()
                / n;
            out[l + k] = var.sqrt();
        }
    }
}

/// Builds a client's descriptor from its latents.
///
/// Without labels every class block is zero, which gives the label-free
/// descriptor `phi(x, 0)`. Classes the client does not hold also get zero
/// blocks. Standard deviations are population (`1/s`) values.
pub fn extract_descriptor<T: Scalar>(
    latents: &Matrix<T>,
    labels: Option<&[usize]>,
    layout: &DescriptorLayout,
    pca: &PcaMap<T>,
    dp: Option<DpParams<'_, T>>,
    rng: &mut RngStream,
) -> Result<DescriptorVector<T>> {
    if latents.rows() < 2 {
        return Err(FluxError::precondition(format!(
            "descriptor needs at least 2 samples, got {}",
            latents.rows()
        )));
    }
    if layout.l != pca.reduced_dim() {
        return Err(FluxError::dim("descriptor reduced dimension", pca.reduced_dim(), layout.l));
    }
    if let Some(y) = labels {
        if y.len() != latents.rows() {
            return Err(FluxError::dim("label count", latents.rows(), y.len()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= layout.classes) {
            return Err(FluxError::Config(format!(
                "label {bad} out of range for {} classes",
                layout.classes
            )));
        }
    }
    let z = pca.project(latents)?;
    let l = layout.l;
    let block = layout.block_len();
    let mut values = vec![T::zero(); layout.len()];

    let all: Vec<&[T]> = z.row_iter().collect();
    moments_into(&all, l, layout.with_sigma, &mut values[..block]);

    if let (Some(y), true) = (labels, layout.with_class_blocks) {
        let mut by_class: Vec<Vec<&[T]>> = vec![Vec::new(); layout.classes];
        for (row, &c) in all.iter().zip(y) {
            by_class[c].push(row);
        }
        for (u, rows) in by_class.iter().enumerate() {
            let start = block * (u + 1);
            moments_into(rows, l, layout.with_sigma, &mut values[start..start + block]);
        }
    }

    let dp_epsilon = match dp {
        Some(DpParams { epsilon, bounds }) => {
            let scales = laplace_scales(pca, layout, bounds, latents.rows(), epsilon)?;
            for (v, b) in values.iter_mut().zip(scales) {
                *v = *v + T::lit(rng.next_laplace(b.to_f64_lossy()));
            }
            Some(epsilon)
        }
        None => None,
    };

    Ok(DescriptorVector {
        values,
        layout: *layout,
        sample_count: latents.rows(),
        dp_epsilon,
    })
}

/// Euclidean distance over the full vectors, or over the label-free
/// prefixes when `label_free` is set.
pub fn descriptor_distance<T: Scalar>(
    a: &DescriptorVector<T>,
    b: &DescriptorVector<T>,
    label_free: bool,
) -> Result<T> {
    if a.len() != b.len() {
        return Err(FluxError::dim("descriptor length", a.len(), b.len()));
    }
    if label_free {
        Ok(euclidean(a.label_free(), b.label_free()))
    } else {
        Ok(euclidean(&a.values, &b.values))
    }
}
