//! Dense linear algebra, SplitMix64 streams and the local MLP classifier.

mod eigen;
mod matrix;
mod mlp;
mod rng;

pub use eigen::{psd_sqrt, symmetric_eigen, SymmetricEigen};
pub use matrix::Matrix;
pub use mlp::{softmax, weighted_param_mean, Mlp, MlpShape, ParamVector, SgdConfig};
pub use rng::{hash_parts, mix64, stream_seed, RngStream};
