use serde::{Deserialize, Serialize};

use crate::datagen::shift::ResolvedShift;
use crate::error::{FluxError, Result};
use crate::numcore::Matrix;

/// Fraction of every client's samples held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// One client's labelled samples. Rows `..train_len` form the training
/// split, the rest the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub features: Matrix<f64>,
    pub labels: Vec<usize>,
    pub train_len: usize,
    /// Ground-truth distribution; used for evaluation only.
    pub distribution_id: usize,
}

impl ClientDataset {
    pub fn new(
        client_id: usize,
        features: Matrix<f64>,
        labels: Vec<usize>,
        distribution_id: usize,
    ) -> Result<Self> {
        let s = labels.len();
        if features.rows() != s {
            return Err(FluxError::dim("label count", features.rows(), s));
        }
        if s < 2 {
            return Err(FluxError::precondition(format!("client {client_id} has {s} samples, need >= 2")));
        }
        Ok(Self {
            client_id,
            features,
            labels,
            train_len: train_len_for(s),
            distribution_id,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn train_features(&self) -> Matrix<f64> {
        self.features.select_rows(&(0..self.train_len).collect::<Vec<_>>())
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.labels[..self.train_len]
    }

    pub fn val_features(&self) -> Matrix<f64> {
        self.features
            .select_rows(&(self.train_len..self.len()).collect::<Vec<_>>())
    }

    pub fn val_labels(&self) -> &[usize] {
        &self.labels[self.train_len..]
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.iter().copied().max()
    }
}

/// Training clients, unseen test clients and the transforms that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct Federation {
    pub classes: usize,
    pub dim: usize,
    pub seed: u64,
    pub shift: ResolvedShift,
    pub train: Vec<ClientDataset>,
    pub test: Vec<ClientDataset>,
}

impl Federation {
    pub fn ground_truth(&self) -> Vec<usize> {
        self.train.iter().map(|c| c.distribution_id).collect()
    }
}

/// Training rows for `s` samples: everything but `floor(0.2 s)` (at least
/// one) validation rows.
pub fn train_len_for(s: usize) -> usize {
    let val = ((s as f64 * VALIDATION_FRACTION).floor() as usize).max(1);
    s - val.min(s - 1)
}
