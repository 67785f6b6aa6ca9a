//! Patch-based unsupervised feature learning for texture and material
//! recognition: K-means, sparse coding, autoencoders and spike-and-slab
//! sparse coding, with stacked and joint multi-scale variants, dense
//! encoding, pooling and SVM classification.

pub mod classify;
pub mod dict;
pub mod error;
pub mod features;
pub mod image;
pub mod io;
pub mod lbp;
pub mod multiscale;
pub mod patch;
pub mod pipeline;
pub mod registry;
pub mod rng;
pub mod s3c;
pub mod scalespace;

pub use error::{Error, Result};
pub use image::{to_grayscale, Image};
pub use registry::{ClassifierRegistry, FeatureModel, LearnConfig, ModelRegistry};
