//! Shift taxonomy and the level -> transform-parameter mapping.

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::numcore::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftType {
    /// `P(X)` varies: rotation and/or mean offset of all samples.
    FeatureShift,
    /// `P(Y)` varies: clients keep a subset of classes.
    LabelShift,
    /// `P(Y|X)` varies: labels permuted within a swapping pool.
    #[serde(rename = "concept_y_given_x")]
    ConceptYgivenX,
    /// `P(X|Y)` varies: class-specific rotations.
    #[serde(rename = "concept_x_given_y")]
    ConceptXgivenY,
}

impl ShiftType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShiftType::FeatureShift => "feature_shift",
            ShiftType::LabelShift => "label_shift",
            ShiftType::ConceptYgivenX => "concept_y_given_x",
            ShiftType::ConceptXgivenY => "concept_x_given_y",
        }
    }
}

impl std::fmt::Display for ShiftType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ShiftType {
    type Err = FluxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature_shift" => Ok(ShiftType::FeatureShift),
            "label_shift" => Ok(ShiftType::LabelShift),
            "concept_y_given_x" => Ok(ShiftType::ConceptYgivenX),
            "concept_x_given_y" => Ok(ShiftType::ConceptXgivenY),
            other => Err(FluxError::config(format!("shift_type: unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub shift_type: ShiftType,
    pub level: u8,
    pub num_distributions: usize,
}

/// Size of the class-selection bank for label shift.
pub const CLASS_BANK_SIZE: usize = 5;

/// Rotation angles (degrees) offered at each heterogeneity level.
pub fn rotation_menu(level: u8) -> &'static [f64] {
    match (level - 1) % 4 {
        0 => &[0.0, 180.0],
        1 => &[0.0, 120.0, 240.0],
        2 => &[0.0, 90.0, 180.0, 270.0],
        _ => &[0.0, 72.0, 144.0, 216.0, 288.0],
    }
}

/// Number of colour choices at a level; levels 1-4 keep the original.
pub fn color_count(level: u8) -> usize {
    if level >= 5 {
        3
    } else {
        1
    }
}

pub const COLOR_NAMES: [&str; 3] = ["red", "blue", "green"];

pub const RIGHT_ANGLES: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

/// Concrete transform applied to every client of one distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionTransform {
    Feature {
        rotation_deg: f64,
        /// Index into the colour offsets; `None` keeps the original.
        color: Option<usize>,
    },
    LabelSubset {
        classes: Vec<usize>,
    },
    LabelPermutation {
        /// `mapping[y]` is the new label of class `y`.
        mapping: Vec<usize>,
    },
    ClassRotation {
        /// Rotation per class; `None` leaves the class untouched.
        per_class_deg: Vec<Option<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedShift {
    pub spec: ShiftSpec,
    pub transforms: Vec<DistributionTransform>,
    /// Label shift: the class-selection bank.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_bank: Vec<Vec<usize>>,
    /// Concept shifts: swapping pool or augmented classes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_pool: Vec<usize>,
}

impl ShiftSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(1..=8).contains(&self.level) {
            return Err(FluxError::config(format!("level must be in 1..=8, got {}", self.level)));
        }
        if self.num_distributions == 0 {
            return Err(FluxError::config("num_distributions must be at least 1"));
        }
        match self.shift_type {
            ShiftType::FeatureShift => {
                let combos = rotation_menu(self.level).len() * color_count(self.level);
                if self.num_distributions > combos {
                    return Err(FluxError::config(format!(
                        "feature shift level {} offers {combos} transforms, {} distributions requested",
                        self.level, self.num_distributions
                    )));
                }
            }
            ShiftType::LabelShift => {
                let keep = (classes + 1).saturating_sub(self.level as usize);
                if keep < 2 {
                    return Err(FluxError::config(format!(
                        "label shift level {} leaves {keep} of {classes} classes (need >= 2)",
                        self.level
                    )));
                }
            }
            ShiftType::ConceptYgivenX | ShiftType::ConceptXgivenY => {
                if self.level as usize > classes {
                    return Err(FluxError::config(format!(
                        "level {} needs at least {} classes, have {classes}",
                        self.level, self.level
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves level semantics into per-distribution transforms.
    /// `right_angles_only` restricts feature rotations to multiples of 90
    /// degrees (image data).
    pub fn resolve(&self, classes: usize, rng: &mut RngStream, right_angles_only: bool) -> Result<ResolvedShift> {
        self.validate(classes)?;
        let m = self.num_distributions;
        let mut class_bank = Vec::new();
        let mut class_pool = Vec::new();
        let transforms = match self.shift_type {
            ShiftType::FeatureShift => {
                let rotations = rotation_menu(self.level);
                let colors = color_count(self.level);
                if right_angles_only {
                    if colors > 1 {
                        return Err(FluxError::config(format!(
                            "feature shift level {} uses colour transforms, unsupported on image data",
                            self.level
                        )));
                    }
                    if rotations.iter().any(|a| a % 90.0 != 0.0) {
                        return Err(FluxError::config(format!(
                            "feature shift level {} uses non-right-angle rotations, unsupported on image data",
                            self.level
                        )));
                    }
                }
                enumerate_pairs(rotations.len(), colors, m)
                    .into_iter()
                    .map(|(r, c)| DistributionTransform::Feature {
                        rotation_deg: rotations[r],
                        color: (colors > 1).then_some(c),
                    })
                    .collect()
            }
            ShiftType::LabelShift => {
                let keep = classes + 1 - self.level as usize;
                class_bank = class_selection_bank(classes, keep, rng);
                (0..m)
                    .map(|d| DistributionTransform::LabelSubset {
                        classes: class_bank[d % CLASS_BANK_SIZE].clone(),
                    })
                    .collect()
            }
            ShiftType::ConceptYgivenX => {
                let mut pool = rng.sample_indices(classes, self.level as usize);
                pool.sort_unstable();
                let perms = pool_permutations(pool.len(), m, rng);
                let out = perms
                    .into_iter()
                    .map(|perm| {
                        let mut mapping: Vec<usize> = (0..classes).collect();
                        for (i, &p) in perm.iter().enumerate() {
                            mapping[pool[i]] = pool[p];
                        }
                        DistributionTransform::LabelPermutation { mapping }
                    })
                    .collect();
                class_pool = pool;
                out
            }
            ShiftType::ConceptXgivenY => {
                let mut pool = rng.sample_indices(classes, self.level as usize);
                pool.sort_unstable();
                let offsets: Vec<usize> = pool.iter().map(|_| rng.next_below(4)).collect();
                let out = (0..m)
                    .map(|d| {
                        let mut per_class_deg = vec![None; classes];
                        for (&c, &off) in pool.iter().zip(&offsets) {
                            per_class_deg[c] = Some(RIGHT_ANGLES[(d + off) % 4]);
                        }
                        DistributionTransform::ClassRotation { per_class_deg }
                    })
                    .collect();
                class_pool = pool;
                out
            }
        };
        Ok(ResolvedShift {
            spec: *self,
            transforms,
            class_bank,
            class_pool,
        })
    }
}

/// First `m` pairs of `(0..a) x (0..b)` in diagonal order, so consecutive
/// distributions differ in both coordinates whenever possible.
fn enumerate_pairs(a: usize, b: usize, m: usize) -> Vec<(usize, usize)> {
    let l = lcm(a, b);
    (0..m).map(|k| (k % a, (k + k / l) % b)).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Bank of sorted class subsets of size `keep`, distinct when enough
/// subsets exist.
fn class_selection_bank(classes: usize, keep: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut bank: Vec<Vec<usize>> = Vec::with_capacity(CLASS_BANK_SIZE);
    let mut attempts = 0;
    while bank.len() < CLASS_BANK_SIZE {
        let mut subset = rng.sample_indices(classes, keep);
        subset.sort_unstable();
        attempts += 1;
        if !bank.contains(&subset) || attempts > 1000 {
            bank.push(subset);
        }
    }
    bank
}

/// One permutation of `0..n` per distribution: non-identity when `n >= 2`
/// and pairwise distinct while enough permutations exist.
fn pool_permutations(n: usize, m: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..n).collect();
    if n < 2 {
        return vec![identity; m];
    }
    let available = (1..=n).fold(1usize, |acc, k| acc.saturating_mul(k)) - 1;
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(m);
    while out.len() < m {
        let mut p = identity.clone();
        rng.shuffle(&mut p);
        if p == identity {
            continue;
        }
        if out.len() < available && out.contains(&p) {
            continue;
        }
        out.push(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shift_type: ShiftType, level: u8, m: usize) -> ShiftSpec {
        ShiftSpec {
            shift_type,
            level,
            num_distributions: m,
        }
    }

    #[test]
    fn diagonal_pairs_cover_grid() {
        let mut pairs = enumerate_pairs(3, 3, 9);
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 9);
        assert_eq!(enumerate_pairs(2, 3, 3), vec![(0, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn label_shift_keeps_expected_class_count() {
        let r = spec(ShiftType::LabelShift, 8, 3)
            .resolve(10, &mut RngStream::new(1), false)
            .unwrap();
        assert_eq!(r.class_bank.len(), CLASS_BANK_SIZE);
        for t in &r.transforms {
            let DistributionTransform::LabelSubset { classes } = t else { panic!() };
            assert_eq!(classes.len(), 3);
        }
        assert!(spec(ShiftType::LabelShift, 6, 2).validate(6).is_err());
    }

    #[test]
    fn level_one_concept_shift_is_identity() {
        let r = spec(ShiftType::ConceptYgivenX, 1, 3)
            .resolve(10, &mut RngStream::new(2), false)
            .unwrap();
        for t in &r.transforms {
            let DistributionTransform::LabelPermutation { mapping } = t else { panic!() };
            assert_eq!(mapping, &(0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn concept_shift_permutations_distinct_and_within_pool() {
        let r = spec(ShiftType::ConceptYgivenX, 5, 3)
            .resolve(6, &mut RngStream::new(3), false)
            .unwrap();
        assert_eq!(r.class_pool.len(), 5);
        let maps: Vec<&Vec<usize>> = r
            .transforms
            .iter()
            .map(|t| match t {
                DistributionTransform::LabelPermutation { mapping } => mapping,
                _ => panic!(),
            })
            .collect();
        for (i, a) in maps.iter().enumerate() {
            for b in &maps[i + 1..] {
                assert_ne!(a, b);
            }
            for (y, &to) in a.iter().enumerate() {
                if !r.class_pool.contains(&y) {
                    assert_eq!(to, y);
                } else {
                    assert!(r.class_pool.contains(&to));
                }
            }
        }
    }

    #[test]
    fn feature_shift_rejects_too_many_distributions() {
        assert!(spec(ShiftType::FeatureShift, 1, 3).validate(10).is_err());
        assert!(spec(ShiftType::FeatureShift, 5, 6).validate(10).is_ok());
    }

    #[test]
    fn image_data_needs_right_angles() {
        let mut rng = RngStream::new(0);
        assert!(spec(ShiftType::FeatureShift, 2, 2).resolve(10, &mut rng, true).is_err());
        assert!(spec(ShiftType::FeatureShift, 5, 2).resolve(10, &mut rng, true).is_err());
        assert!(spec(ShiftType::FeatureShift, 3, 4).resolve(10, &mut rng, true).is_ok());
    }

    #[test]
    fn shift_type_round_trips_through_str() {
        for t in [
            ShiftType::FeatureShift,
            ShiftType::LabelShift,
            ShiftType::ConceptYgivenX,
            ShiftType::ConceptXgivenY,
        ] {
            assert_eq!(t.as_str().parse::<ShiftType>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
        assert!("color_shift".parse::<ShiftType>().is_err());
    }
}
