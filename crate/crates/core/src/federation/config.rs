use serde::{Deserialize, Serialize};

use crate::datagen::{BlobGeometry, MnistSource, ShiftSpec, ShiftType, SyntheticSpec};
use crate::error::{FluxError, Result};
use crate::federation::trigger::DEFAULT_TRIGGER_THRESHOLD;
use crate::numcore::{MlpShape, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "flux")]
    Flux,
    /// Clustering by k-means with the true number of distributions.
    #[serde(rename = "flux-prior")]
    FluxPrior,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::FedAvg => "fedavg",
            Mode::Flux => "flux",
            Mode::FluxPrior => "flux-prior",
        }
    }

    pub fn clusters(&self) -> bool {
        !matches!(self, Mode::FedAvg)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = FluxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(Mode::FedAvg),
            "flux" => Ok(Mode::Flux),
            "flux-prior" => Ok(Mode::FluxPrior),
            other => Err(FluxError::config(format!(
                "mode: unknown value {other:?} (expected fedavg, flux or flux-prior)"
            ))),
        }
    }
}

fn d_clients() -> usize {
    12
}
fn d_classes() -> usize {
    10
}
fn d_dim() -> usize {
    512
}
fn d_samples() -> usize {
    300
}
fn d_test_clients() -> usize {
    2
}
fn d_level() -> u8 {
    5
}
fn d_distributions() -> usize {
    3
}
fn d_rounds() -> usize {
    10
}
fn d_epochs() -> usize {
    2
}
fn d_lr() -> f64 {
    0.005
}
fn d_momentum() -> f64 {
    0.9
}
fn d_batch() -> usize {
    64
}
fn d_hidden() -> usize {
    64
}
fn d_participation() -> f64 {
    1.0
}
fn d_threshold() -> f64 {
    DEFAULT_TRIGGER_THRESHOLD
}
fn d_scale() -> f64 {
    1.0
}
fn d_reduced() -> usize {
    10
}
fn d_true() -> bool {
    true
}
fn d_mode() -> Mode {
    Mode::Flux
}
fn d_seed() -> u64 {
    42
}
fn d_kmeans_iter() -> usize {
    100
}

/// One experiment: data generation, model, schedule and clustering knobs.
/// Every field except `shift_type` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_clients")]
    pub clients: usize,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_samples")]
    pub samples_per_client: usize,
    #[serde(default = "d_test_clients")]
    pub test_clients_per_distribution: usize,
    #[serde(default)]
    pub geometry: BlobGeometry,
    /// Read images from IDX files instead of generating Gaussian blobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistSource>,

    pub shift_type: ShiftType,
    #[serde(default = "d_level")]
    pub level: u8,
    #[serde(default = "d_distributions")]
    pub num_distributions: usize,

    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_epochs")]
    pub local_epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_participation")]
    pub participation_rate: f64,

    #[serde(default = "d_threshold")]
    pub trigger_threshold: f64,
    #[serde(default = "d_scale")]
    pub dbscan_scale: f64,
    #[serde(default = "d_reduced")]
    pub reduced_dim: usize,
    #[serde(default)]
    pub dp_epsilon: Option<f64>,
    /// Include standard deviations in the descriptor.
    #[serde(default = "d_true")]
    pub descriptor_sigma: bool,
    /// Include class-conditional blocks in the descriptor.
    #[serde(default = "d_true")]
    pub descriptor_class_blocks: bool,
    #[serde(default = "d_kmeans_iter")]
    pub kmeans_max_iter: usize,

    #[serde(default = "d_mode")]
    pub mode: Mode,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Default configuration for the given shift type.
    pub fn with_shift(shift_type: ShiftType) -> Self {
        Self {
            clients: d_clients(),
            classes: d_classes(),
            dim: d_dim(),
            samples_per_client: d_samples(),
            test_clients_per_distribution: d_test_clients(),
            geometry: BlobGeometry::default(),
            mnist: None,
            shift_type,
            level: d_level(),
            num_distributions: d_distributions(),
            rounds: d_rounds(),
            local_epochs: d_epochs(),
            lr: d_lr(),
            momentum: d_momentum(),
            batch_size: d_batch(),
            hidden: d_hidden(),
            participation_rate: d_participation(),
            trigger_threshold: d_threshold(),
            dbscan_scale: d_scale(),
            reduced_dim: d_reduced(),
            dp_epsilon: None,
            descriptor_sigma: true,
            descriptor_class_blocks: true,
            kmeans_max_iter: d_kmeans_iter(),
            mode: d_mode(),
            seed: d_seed(),
        }
    }

    pub fn shift(&self) -> ShiftSpec {
        ShiftSpec {
            shift_type: self.shift_type,
            level: self.level,
            num_distributions: self.num_distributions,
        }
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            clients: self.clients,
            classes: self.classes,
            dim: self.dim,
            samples_per_client: self.samples_per_client,
            test_clients_per_distribution: self.test_clients_per_distribution,
            geometry: self.geometry,
        }
    }

    pub fn model_shape(&self) -> MlpShape {
        MlpShape::new(self.dim, self.hidden, self.classes)
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.local_epochs,
            lr: self.lr,
            momentum: self.momentum,
            batch_size: self.batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(FluxError::Config(format!("{field}: {msg}")));
        if self.rounds < 4 {
            return bad("rounds", format!("must be at least 4, got {}", self.rounds));
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return bad("participation_rate", format!("must be in (0, 1], got {}", self.participation_rate));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("must be in [0, 1), got {}", self.momentum));
        }
        if self.local_epochs == 0 {
            return bad("local_epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1".into());
        }
        if self.reduced_dim == 0 || self.reduced_dim > self.hidden {
            return bad(
                "reduced_dim",
                format!("must be in 1..={} (the hidden width), got {}", self.hidden, self.reduced_dim),
            );
        }
        if !(self.dbscan_scale > 0.0 && self.dbscan_scale.is_finite()) {
            return bad("dbscan_scale", format!("must be positive, got {}", self.dbscan_scale));
        }
        if !self.trigger_threshold.is_finite() {
            return bad("trigger_threshold", "must be finite".into());
        }
        if let Some(eps) = self.dp_epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("dp_epsilon", format!("must be positive, got {eps}"));
            }
        }
        if self.kmeans_max_iter == 0 {
            return bad("kmeans_max_iter", "must be at least 1".into());
        }
        if self.num_distributions == 0 || self.num_distributions > self.clients {
            return bad(
                "num_distributions",
                format!("must be in 1..={} (the client count), got {}", self.clients, self.num_distributions),
            );
        }
        if self.samples_per_client < 2 * self.classes {
            return bad(
                "samples_per_client",
                format!("must be at least 2 * classes = {}", 2 * self.classes),
            );
        }
        if self.mnist.is_some() && (self.dim != 784 || self.classes != 10) {
            return bad("mnist", format!("image data needs dim 784 and 10 classes, got {} / {}", self.dim, self.classes));
        }
        self.shift().validate(self.classes)
    }
}
