//! Clustered federated learning simulator.
//!
//! Clients summarise their data as compact moment descriptors in a shared
//! latent space; the server groups clients by density-based clustering of
//! those descriptors, trains one model per group, and routes unseen,
//! unlabeled clients to a group by nearest label-free centroid.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` / `f64`); the
//! aliases below fix the precision used by the federation pipeline.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod datagen;
pub mod descriptor;
pub mod error;
pub mod federation;
pub mod gaussmetric;
pub mod harness;
pub mod numcore;
pub mod scalar;

pub use error::{FluxError, Result};
pub use scalar::Scalar;

pub type Matrix = numcore::Matrix<f64>;
pub type MatrixF32 = numcore::Matrix<f32>;
pub type ParamVector = numcore::ParamVector<f64>;
pub type MlpModel = numcore::Mlp<f64>;
pub type GaussianSummary = gaussmetric::GaussianSummary<f64>;
pub type GaussianSummaryF32 = gaussmetric::GaussianSummary<f32>;
pub type AlignmentBounds = descriptor::AlignmentBounds<f64>;
pub type PcaMap = descriptor::PcaMap<f64>;
pub type DescriptorVector = descriptor::DescriptorVector<f64>;
pub type ClusterState = clustering::ClusterState<f64>;

pub use numcore::RngStream;
