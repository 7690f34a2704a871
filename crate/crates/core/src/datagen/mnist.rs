//! IDX ingestion and right-angle image rotation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::shift::{DistributionTransform, ShiftSpec};
use crate::datagen::synthetic::assign_distributions;
use crate::datagen::{ClientDataset, Federation};
use crate::error::{FluxError, Result};
use crate::numcore::{Matrix, RngStream};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const MNIST_CLASSES: usize = 10;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

const TAG_ASSIGN: u64 = 2;
const TAG_SHIFT: u64 = 3;
const TAG_CLIENT: u64 = 4;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset + n;
        if end > self.bytes.len() {
            return Err(FluxError::Parse {
                offset: self.bytes.len(),
                message: format!("truncated file: {what} needs {n} bytes at offset {}", self.offset),
            });
        }
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn expect_magic(c: &mut Cursor<'_>, want: u32) -> Result<()> {
    let got = c.u32_be("magic")?;
    if got != want {
        return Err(FluxError::Parse {
            offset: 0,
            message: format!("bad magic 0x{got:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

/// Parses an IDX image file. Pixels are scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], limit: Option<usize>) -> Result<Matrix<f64>> {
    let mut c = Cursor { bytes, offset: 0 };
    expect_magic(&mut c, IMAGES_MAGIC)?;
    let n = c.u32_be("image count")? as usize;
    let rows_at = c.offset;
    let rows = c.u32_be("row count")? as usize;
    let cols = c.u32_be("column count")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(FluxError::Parse {
            offset: rows_at,
            message: format!("expected {IMAGE_SIDE}x{IMAGE_SIDE} images, got {rows}x{cols}"),
        });
    }
    let n = limit.map_or(n, |l| l.min(n));
    let pixels = c.take(n * IMAGE_PIXELS, "pixel data")?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::new(n, IMAGE_PIXELS, data)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8], limit: Option<usize>) -> Result<Vec<usize>> {
    let mut c = Cursor { bytes, offset: 0 };
    expect_magic(&mut c, LABELS_MAGIC)?;
    let n = c.u32_be("label count")? as usize;
    let n = limit.map_or(n, |l| l.min(n));
    let start = c.offset;
    let raw = c.take(n, "label data")?;
    raw.iter()
        .enumerate()
        .map(|(i, &y)| {
            if (y as usize) < MNIST_CLASSES {
                Ok(y as usize)
            } else {
                Err(FluxError::Parse {
                    offset: start + i,
                    message: format!("label {y} out of range"),
                })
            }
        })
        .collect()
}

/// Loads up to `limit` images and their labels.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<(Matrix<f64>, Vec<usize>)> {
    let x = parse_idx_images(&std::fs::read(images_path)?, limit)?;
    let y = parse_idx_labels(&std::fs::read(labels_path)?, limit)?;
    if x.rows() != y.len() {
        return Err(FluxError::dim("label count", x.rows(), y.len()));
    }
    Ok((x, y))
}

fn rotate_image_into(src: &[f64], dst: &mut [f64], quarter_turns: usize) {
    let n = IMAGE_SIDE;
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match quarter_turns {
                1 => (n - 1 - c, r),
                2 => (n - 1 - r, n - 1 - c),
                3 => (c, n - 1 - r),
                _ => (r, c),
            };
            dst[r * n + c] = src[sr * n + sc];
        }
    }
}

fn quarter_turns(degrees: f64) -> Result<usize> {
    match degrees {
        0.0 => Ok(0),
        90.0 => Ok(1),
        180.0 => Ok(2),
        270.0 => Ok(3),
        d => Err(FluxError::config(format!("unsupported image rotation {d} (use 0, 90, 180 or 270)"))),
    }
}

fn rotate_row(row: &mut [f64], turns: usize) {
    if turns == 0 {
        return;
    }
    let src = row.to_vec();
    rotate_image_into(&src, row, turns);
}

/// Rotates every 28x28 image row clockwise by `degrees`.
pub fn apply_rotation_to_images(features: &Matrix<f64>, degrees: f64) -> Result<Matrix<f64>> {
    if features.cols() != IMAGE_PIXELS {
        return Err(FluxError::dim("image columns", IMAGE_PIXELS, features.cols()));
    }
    let turns = quarter_turns(degrees)?;
    let mut out = features.clone();
    for r in 0..out.rows() {
        rotate_row(out.row_mut(r), turns);
    }
    Ok(out)
}

/// Where to read IDX files from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MnistFederationSpec {
    pub clients: usize,
    pub samples_per_client: usize,
    pub test_clients_per_distribution: usize,
}

/// Splits a labelled image pool into a federation. Clients draw balanced
/// labels from their allowed classes; images are reused only when a class
/// runs out.
pub fn gen_mnist_federation(
    images: &Matrix<f64>,
    labels: &[usize],
    spec: &MnistFederationSpec,
    shift: &ShiftSpec,
    seed: u64,
) -> Result<Federation> {
    if images.cols() != IMAGE_PIXELS {
        return Err(FluxError::dim("image columns", IMAGE_PIXELS, images.cols()));
    }
    if spec.clients < shift.num_distributions {
        return Err(FluxError::config("clients must be at least num_distributions"));
    }
    if spec.samples_per_client < 2 * MNIST_CLASSES {
        return Err(FluxError::config("samples_per_client must be at least 2 * classes"));
    }
    let resolved = shift.resolve(MNIST_CLASSES, &mut RngStream::derive(seed, &[TAG_SHIFT]), true)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); MNIST_CLASSES];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(FluxError::precondition(format!("image pool has no samples of class {c}")));
    }
    let mut pool_rng = RngStream::derive(seed, &[TAG_CLIENT, u64::MAX]);
    for list in &mut by_class {
        pool_rng.shuffle(list);
    }
    let mut next = [0usize; MNIST_CLASSES];
    let m = shift.num_distributions;
    let ids = assign_distributions(spec.clients, m, &mut RngStream::derive(seed, &[TAG_ASSIGN]));
    let all: Vec<usize> = (0..MNIST_CLASSES).collect();

    let mut make = |client_id: usize, stream: usize, d: usize| -> Result<ClientDataset> {
        let mut rng = RngStream::derive(seed, &[TAG_CLIENT, stream as u64]);
        let transform = &resolved.transforms[d];
        let allowed = match transform {
            DistributionTransform::LabelSubset { classes } => classes.as_slice(),
            _ => all.as_slice(),
        };
        let mut ys: Vec<usize> = (0..spec.samples_per_client).map(|i| allowed[i % allowed.len()]).collect();
        rng.shuffle(&mut ys);
        let mut x = Matrix::zeros(ys.len(), IMAGE_PIXELS);
        for (r, &y) in ys.iter().enumerate() {
            let list = &by_class[y];
            let src = list[next[y] % list.len()];
            next[y] += 1;
            x.row_mut(r).copy_from_slice(images.row(src));
        }
        match transform {
            DistributionTransform::Feature { rotation_deg, .. } => {
                x = apply_rotation_to_images(&x, *rotation_deg)?;
            }
            DistributionTransform::LabelSubset { .. } => {}
            DistributionTransform::LabelPermutation { mapping } => {
                ys.iter_mut().for_each(|y| *y = mapping[*y]);
            }
            DistributionTransform::ClassRotation { per_class_deg } => {
                for (r, &y) in ys.iter().enumerate() {
                    if let Some(deg) = per_class_deg[y] {
                        rotate_row(x.row_mut(r), quarter_turns(deg)?);
                    }
                }
            }
        }
        ClientDataset::new(client_id, x, ys, d)
    };

    let mut train = Vec::with_capacity(spec.clients);
    for (k, &d) in ids.iter().enumerate() {
        train.push(make(k, k, d)?);
    }
    let mut test = Vec::new();
    for q in 0..m * spec.test_clients_per_distribution {
        test.push(make(q, spec.clients + q, q % m)?);
    }
    Ok(Federation {
        classes: MNIST_CLASSES,
        dim: IMAGE_PIXELS,
        seed,
        shift: resolved,
        train,
        test,
    })
}
