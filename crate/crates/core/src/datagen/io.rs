//! On-disk federation format: one binary file per client plus a JSON
//! manifest.
//!
//! Client file layout (little-endian): the 7 magic bytes `FLUXDS1`, then
//! `u32` fields K (training clients), U, z, s, then `s` labels as `u32`,
//! then `s * z` features as `f64` in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::shift::ResolvedShift;
use crate::datagen::{ClientDataset, Federation};
use crate::error::{FluxError, Result};
use crate::numcore::Matrix;

pub const CLIENT_MAGIC: &[u8; 7] = b"FLUXDS1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub file: String,
    pub client_id: usize,
    pub distribution_id: usize,
    pub samples: usize,
    pub train_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationManifest {
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    pub shift: ResolvedShift,
    pub ground_truth: Vec<usize>,
    pub train: Vec<ClientEntry>,
    pub test: Vec<ClientEntry>,
}

pub fn encode_client(c: &ClientDataset, k: usize, classes: usize) -> Vec<u8> {
    let (s, z) = (c.len(), c.dim());
    let mut out = Vec::with_capacity(7 + 16 + 4 * s + 8 * s * z);
    out.extend_from_slice(CLIENT_MAGIC);
    for v in [k, classes, z, s] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &y in &c.labels {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    for &x in c.features.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Header fields `(K, U, z)` and the decoded labels and features.
pub struct DecodedClient {
    pub k: usize,
    pub classes: usize,
    pub features: Matrix<f64>,
    pub labels: Vec<usize>,
}

pub fn decode_client(bytes: &[u8]) -> Result<DecodedClient> {
    let truncated = |offset: usize| FluxError::Parse {
        offset,
        message: "truncated client file".into(),
    };
    if bytes.len() < 7 || &bytes[..7] != CLIENT_MAGIC {
        return Err(FluxError::Parse {
            offset: 0,
            message: "bad magic, expected FLUXDS1".into(),
        });
    }
    let u32_at = |off: usize| -> Result<usize> {
        let b = bytes.get(off..off + 4).ok_or_else(|| truncated(bytes.len()))?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    };
    let (k, classes, z, s) = (u32_at(7)?, u32_at(11)?, u32_at(15)?, u32_at(19)?);
    let labels_at = 23;
    let features_at = labels_at + 4 * s;
    let end = features_at + 8 * s * z;
    if bytes.len() < end {
        return Err(truncated(bytes.len()));
    }
    if bytes.len() > end {
        return Err(FluxError::Parse {
            offset: end,
            message: "trailing bytes after feature block".into(),
        });
    }
    let labels = (0..s).map(|i| u32_at(labels_at + 4 * i)).collect::<Result<Vec<_>>>()?;
    if let Some(i) = labels.iter().position(|&y| y >= classes) {
        return Err(FluxError::Parse {
            offset: labels_at + 4 * i,
            message: format!("label {} >= class count {classes}", labels[i]),
        });
    }
    let data = bytes[features_at..end]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    Ok(DecodedClient {
        k,
        classes,
        features: Matrix::new(s, z, data)?,
        labels,
    })
}

fn write_group(dir: &Path, prefix: &str, clients: &[ClientDataset], k: usize, classes: usize) -> Result<Vec<ClientEntry>> {
    clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let file = format!("{prefix}_{i:04}.bin");
            fs::write(dir.join(&file), encode_client(c, k, classes))?;
            Ok(ClientEntry {
                file,
                client_id: c.client_id,
                distribution_id: c.distribution_id,
                samples: c.len(),
                train_len: c.train_len,
            })
        })
        .collect()
}

/// Writes `fed` into `dir` (created if missing). Output is byte-identical
/// for identical federations.
pub fn write_federation(fed: &Federation, dir: &Path) -> Result<FederationManifest> {
    fs::create_dir_all(dir)?;
    let k = fed.train.len();
    let manifest = FederationManifest {
        seed: fed.seed,
        classes: fed.classes,
        dim: fed.dim,
        shift: fed.shift.clone(),
        ground_truth: fed.ground_truth(),
        train: write_group(dir, "client", &fed.train, k, fed.classes)?,
        test: write_group(dir, "test", &fed.test, k, fed.classes)?,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn read_group(dir: &Path, entries: &[ClientEntry], fed_k: usize, classes: usize, dim: usize) -> Result<Vec<ClientDataset>> {
    entries
        .iter()
        .map(|e| {
            let d = decode_client(&fs::read(dir.join(&e.file))?)?;
            if d.k != fed_k || d.classes != classes || d.features.cols() != dim || d.labels.len() != e.samples {
                return Err(FluxError::precondition(format!("{}: header disagrees with manifest", e.file)));
            }
            let mut c = ClientDataset::new(e.client_id, d.features, d.labels, e.distribution_id)?;
            if e.train_len == 0 || e.train_len >= c.len() {
                return Err(FluxError::precondition(format!("{}: train_len {} out of range", e.file, e.train_len)));
            }
            c.train_len = e.train_len;
            Ok(c)
        })
        .collect()
}

pub fn read_federation(dir: &Path) -> Result<Federation> {
    let manifest: FederationManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let k = manifest.train.len();
    let train = read_group(dir, &manifest.train, k, manifest.classes, manifest.dim)?;
    let test = read_group(dir, &manifest.test, k, manifest.classes, manifest.dim)?;
    Ok(Federation {
        classes: manifest.classes,
        dim: manifest.dim,
        seed: manifest.seed,
        shift: manifest.shift,
        train,
        test,
    })
}
