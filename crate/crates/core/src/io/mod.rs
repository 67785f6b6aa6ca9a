//! Files: images, model containers, dataset manifests, the synthetic
//! corpus and filter montages.

pub mod dataset;
pub mod modelfile;
pub mod pnm;
pub mod synth;
pub mod viz;

pub use dataset::{load_dataset, LabeledDataset, Layout, Split};
pub use modelfile::{Geometry, ModelFile, ModelKind};
pub use pnm::{read_image, write_image};
