//! Synthetic and image federations exhibiting graded distribution shift.

mod dataset;
pub mod io;
pub mod mnist;
pub mod shift;
pub mod synthetic;

pub use dataset::{train_len_for, ClientDataset, Federation, VALIDATION_FRACTION};
pub use io::{read_federation, write_federation, FederationManifest};
pub use mnist::{apply_rotation_to_images, gen_mnist_federation, load_mnist_idx, MnistFederationSpec, MnistSource};
pub use shift::{DistributionTransform, ResolvedShift, ShiftSpec, ShiftType};
pub use synthetic::{gen_synthetic_federation, gen_unshifted_federation, BlobGeometry, SyntheticSpec};
