//! Gaussian class-blob federations.
//!
//! Every class `u` is an isotropic Gaussian around a mean `mu_u`. The class
//! means have a strong component in the plane spanned by the first two
//! coordinates, which is the plane all rotations act in; the rest of their
//! energy sits in a few further signal coordinates. "Colour" transforms are
//! additive offsets along fixed random directions.

use serde::{Deserialize, Serialize};

use crate::datagen::shift::{DistributionTransform, ShiftSpec, ShiftType};
use crate::datagen::{ClientDataset, Federation};
use crate::error::{FluxError, Result};
use crate::numcore::{Matrix, RngStream};

// stream tags, so each random decision has its own SplitMix64 stream
const TAG_GEOMETRY: u64 = 1;
const TAG_ASSIGN: u64 = 2;
const TAG_SHIFT: u64 = 3;
const TAG_CLIENT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobGeometry {
    /// Radius of the class means inside the rotation plane.
    pub plane_radius: f64,
    /// Standard deviation of class-mean coordinates outside the plane.
    pub class_spread: f64,
    /// Coordinates (after the plane) carrying class signal.
    pub signal_dims: usize,
    pub noise_std: f64,
    /// Norm of each colour offset vector.
    pub color_offset: f64,
}

impl Default for BlobGeometry {
    fn default() -> Self {
        Self {
            plane_radius: 4.0,
            class_spread: 3.0,
            signal_dims: 8,
            noise_std: 0.1,
            color_offset: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub classes: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Held-out clients per distribution for test-time evaluation.
    pub test_clients_per_distribution: usize,
    pub geometry: BlobGeometry,
}

struct Geometry {
    class_means: Vec<Vec<f64>>,
    color_offsets: Vec<Vec<f64>>,
}

fn build_geometry(spec: &SyntheticSpec, seed: u64) -> Geometry {
    let g = &spec.geometry;
    let mut rng = RngStream::derive(seed, &[TAG_GEOMETRY]);
    let signal_end = (2 + g.signal_dims).min(spec.dim);
    let class_means = (0..spec.classes)
        .map(|_| {
            let mut mu = vec![0.0; spec.dim];
            let angle = 2.0 * std::f64::consts::PI * rng.next_f64();
            if spec.dim >= 2 {
                mu[0] = g.plane_radius * angle.cos();
                mu[1] = g.plane_radius * angle.sin();
            }
            for v in mu.iter_mut().take(signal_end).skip(2) {
                *v = g.class_spread * rng.next_gaussian();
            }
            mu
        })
        .collect();
    let color_offsets = (0..3)
        .map(|_| {
            let dir: Vec<f64> = (0..spec.dim).map(|_| rng.next_gaussian()).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.into_iter().map(|v| v * g.color_offset / norm).collect()
        })
        .collect();
    Geometry {
        class_means,
        color_offsets,
    }
}

/// Rotates the first two coordinates of `row` by `degrees`.
pub fn rotate_plane(row: &mut [f64], degrees: f64) {
    if degrees == 0.0 || row.len() < 2 {
        return;
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (x, y) = (row[0], row[1]);
    row[0] = c * x - s * y;
    row[1] = s * x + c * y;
}

/// Distribution ids for `k` clients: round-robin over `m`, then shuffled.
pub fn assign_distributions(k: usize, m: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..k).map(|i| i % m).collect();
    rng.shuffle(&mut ids);
    ids
}

/// Balanced labels over `classes`, shuffled.
fn balanced_labels(s: usize, classes: &[usize], rng: &mut RngStream) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..s).map(|i| classes[i % classes.len()]).collect();
    rng.shuffle(&mut labels);
    labels
}

fn sample_rows(labels: &[usize], geo: &Geometry, noise: f64, dim: usize, rng: &mut RngStream) -> Matrix<f64> {
    let mut x = Matrix::zeros(labels.len(), dim);
    for (r, &y) in labels.iter().enumerate() {
        for (v, &m) in x.row_mut(r).iter_mut().zip(&geo.class_means[y]) {
            *v = m + noise * rng.next_gaussian();
        }
    }
    x
}

fn make_client(
    spec: &SyntheticSpec,
    geo: &Geometry,
    transform: &DistributionTransform,
    client_id: usize,
    stream_id: usize,
    distribution_id: usize,
    seed: u64,
) -> Result<ClientDataset> {
    let mut rng = RngStream::derive(seed, &[TAG_CLIENT, stream_id as u64]);
    let all: Vec<usize> = (0..spec.classes).collect();
    let allowed = match transform {
        DistributionTransform::LabelSubset { classes } => classes.as_slice(),
        _ => all.as_slice(),
    };
    let mut labels = balanced_labels(spec.samples_per_client, allowed, &mut rng);
    let mut x = sample_rows(&labels, geo, spec.geometry.noise_std, spec.dim, &mut rng);
    match transform {
        DistributionTransform::Feature {
            rotation_deg,
            color,
        } => {
            for r in 0..x.rows() {
                let row = x.row_mut(r);
                rotate_plane(row, *rotation_deg);
                if let Some(c) = color {
                    for (v, &o) in row.iter_mut().zip(&geo.color_offsets[*c]) {
                        *v += o;
                    }
                }
            }
        }
        DistributionTransform::LabelSubset { .. } => {}
        DistributionTransform::LabelPermutation { mapping } => {
            labels.iter_mut().for_each(|y| *y = mapping[*y]);
        }
        DistributionTransform::ClassRotation { per_class_deg } => {
            for (r, &y) in labels.iter().enumerate() {
                if let Some(deg) = per_class_deg[y] {
                    rotate_plane(x.row_mut(r), deg);
                }
            }
        }
    }
    ClientDataset::new(client_id, x, labels, distribution_id)
}

/// Generates a federation of `spec.clients` training clients plus
/// `test_clients_per_distribution * M` unseen test clients.
///
/// Each training client draws its base samples from its own stream, so the
/// untransformed features and labels of a client do not depend on the shift
/// type (label shift aside, which changes which classes are drawn).
pub fn gen_synthetic_federation(spec: &SyntheticSpec, shift: &ShiftSpec, seed: u64) -> Result<Federation> {
    validate(spec, shift)?;
    let geo = build_geometry(spec, seed);
    let resolved = shift.resolve(spec.classes, &mut RngStream::derive(seed, &[TAG_SHIFT]), false)?;
    let m = shift.num_distributions;
    let ids = assign_distributions(spec.clients, m, &mut RngStream::derive(seed, &[TAG_ASSIGN]));

    let train = ids
        .iter()
        .enumerate()
        .map(|(k, &d)| make_client(spec, &geo, &resolved.transforms[d], k, k, d, seed))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..m * spec.test_clients_per_distribution)
        .map(|q| {
            let d = q % m;
            make_client(spec, &geo, &resolved.transforms[d], q, spec.clients + q, d, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Federation {
        classes: spec.classes,
        dim: spec.dim,
        seed,
        shift: resolved,
        train,
        test,
    })
}

/// The same clients with no transform applied (every client keeps all
/// classes). Reference point for the shift-preservation properties.
pub fn gen_unshifted_federation(spec: &SyntheticSpec, num_distributions: usize, seed: u64) -> Result<Vec<ClientDataset>> {
    let geo = build_geometry(spec, seed);
    let ids = assign_distributions(spec.clients, num_distributions, &mut RngStream::derive(seed, &[TAG_ASSIGN]));
    let identity = DistributionTransform::Feature {
        rotation_deg: 0.0,
        color: None,
    };
    ids.iter()
        .enumerate()
        .map(|(k, &d)| make_client(spec, &geo, &identity, k, k, d, seed))
        .collect()
}

fn validate(spec: &SyntheticSpec, shift: &ShiftSpec) -> Result<()> {
    if spec.classes < 2 {
        return Err(FluxError::config("classes must be at least 2"));
    }
    if spec.dim < 2 {
        return Err(FluxError::config("dim must be at least 2 (rotations act on a plane)"));
    }
    if spec.clients < shift.num_distributions {
        return Err(FluxError::config(format!(
            "clients ({}) must be at least num_distributions ({})",
            spec.clients, shift.num_distributions
        )));
    }
    if spec.samples_per_client < 2 * spec.classes {
        return Err(FluxError::config(format!(
            "samples_per_client ({}) must be at least 2 * classes ({})",
            spec.samples_per_client,
            2 * spec.classes
        )));
    }
    if shift.shift_type == ShiftType::LabelShift && spec.samples_per_client < 2 {
        return Err(FluxError::config("label shift needs at least 2 samples per client"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(clients: usize) -> SyntheticSpec {
        SyntheticSpec {
            clients,
            classes: 10,
            dim: 12,
            samples_per_client: 60,
            test_clients_per_distribution: 1,
            geometry: BlobGeometry::default(),
        }
    }

    fn shift(shift_type: ShiftType, level: u8, m: usize) -> ShiftSpec {
        ShiftSpec {
            shift_type,
            level,
            num_distributions: m,
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let s = shift(ShiftType::FeatureShift, 5, 3);
        let a = gen_synthetic_federation(&small(9), &s, 42).unwrap();
        let b = gen_synthetic_federation(&small(9), &s, 42).unwrap();
        let c = gen_synthetic_federation(&small(9), &s, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train[0].features, c.train[0].features);
    }

    #[test]
    fn every_distribution_used() {
        let f = gen_synthetic_federation(&small(7), &shift(ShiftType::LabelShift, 4, 3), 1).unwrap();
        let mut ids = f.ground_truth();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(f.test.len(), 3);
    }

    #[test]
    fn label_shift_level_eight_keeps_three_classes() {
        let f = gen_synthetic_federation(&small(6), &shift(ShiftType::LabelShift, 8, 3), 5).unwrap();
        for c in &f.train {
            let mut held = c.labels.clone();
            held.sort_unstable();
            held.dedup();
            assert_eq!(held.len(), 3);
            let DistributionTransform::LabelSubset { classes } = &f.shift.transforms[c.distribution_id] else {
                panic!()
            };
            assert_eq!(&held, classes);
        }
    }

    #[test]
    fn concept_y_given_x_keeps_features() {
        let spec = small(6);
        let base = gen_unshifted_federation(&spec, 3, 9).unwrap();
        let f = gen_synthetic_federation(&spec, &shift(ShiftType::ConceptYgivenX, 5, 3), 9).unwrap();
        for (b, c) in base.iter().zip(&f.train) {
            assert_eq!(b.features, c.features);
        }
        assert!(base.iter().zip(&f.train).any(|(b, c)| b.labels != c.labels));
    }

    #[test]
    fn concept_x_given_y_keeps_labels() {
        let spec = small(6);
        let base = gen_unshifted_federation(&spec, 3, 9).unwrap();
        let f = gen_synthetic_federation(&spec, &shift(ShiftType::ConceptXgivenY, 4, 3), 9).unwrap();
        for (b, c) in base.iter().zip(&f.train) {
            assert_eq!(b.labels, c.labels);
        }
    }

    #[test]
    fn level_one_concept_shift_matches_unshifted() {
        let spec = small(4);
        let base = gen_unshifted_federation(&spec, 2, 3).unwrap();
        let f = gen_synthetic_federation(&spec, &shift(ShiftType::ConceptYgivenX, 1, 2), 3).unwrap();
        for (b, c) in base.iter().zip(&f.train) {
            assert_eq!(b, c);
        }
    }

    #[test]
    fn single_distribution_feature_shift_is_unrotated() {
        let spec = small(4);
        let base = gen_unshifted_federation(&spec, 1, 8).unwrap();
        let f = gen_synthetic_federation(&spec, &shift(ShiftType::FeatureShift, 1, 1), 8).unwrap();
        assert_eq!(base, f.train);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let mut spec = small(2);
        assert!(gen_synthetic_federation(&spec, &shift(ShiftType::FeatureShift, 5, 3), 0).is_err());
        spec.samples_per_client = 10;
        assert!(gen_synthetic_federation(&spec, &shift(ShiftType::FeatureShift, 5, 2), 0).is_err());
        spec.classes = 3;
        spec.samples_per_client = 10;
        assert!(gen_synthetic_federation(&spec, &shift(ShiftType::LabelShift, 3, 2), 0).is_err());
    }

    #[test]
    fn rotate_plane_quarter_turn() {
        let mut row = [1.0, 0.0, 5.0];
        rotate_plane(&mut row, 90.0);
        assert!(row[0].abs() < 1e-15 && (row[1] - 1.0).abs() < 1e-15);
        assert_eq!(row[2], 5.0);
    }
}
