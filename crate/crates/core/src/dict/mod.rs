//! Baseline coders: K-means vector quantization, sparse coding and a
//! sigmoid autoencoder. Every dictionary stores its atoms as the rows of an
//! `N x D` array, i.e. the transpose of the `D x N` matrix `W`.

pub mod autoencoder;
pub mod kmeans;
pub mod sparse;

pub use autoencoder::{ae_encode, ae_learn, AeFit, AeParams};
pub use kmeans::{kmeans_encode, kmeans_learn, KmEncoding, KMeansFit};
pub use sparse::{sc_encode, sc_learn, Dictionary, LassoOptions, ScFit};

use ndarray::ArrayView1;

pub(crate) fn dot(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

