//! Single-hidden-layer autoencoder with sigmoid encoder and decoder,
//! trained on squared reconstruction error.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq)]
pub struct AeParams {
    /// Encoder weights, `N x D`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    /// Decoder weights, `D x N`.
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parameter gradients, same shapes as [`AeParams`].
#[derive(Clone, Debug)]
pub struct AeGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

impl AeParams {
    pub fn zeros(d: usize, n: usize) -> Self {
        Self {
            w: Array2::zeros((n, d)),
            b: Array1::zeros(n),
            w_dec: Array2::zeros((d, n)),
            b_dec: Array1::zeros(d),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(d: usize, n: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let r = (6.0 / (d + n) as f64).sqrt();
        let mut p = Self::zeros(d, n);
        p.w.mapv_inplace(|_| rng.random_range(-r..r));
        p.w_dec.mapv_inplace(|_| rng.random_range(-r..r));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn encode(&self, v: &[f64]) -> Array1<f64> {
        let v = ndarray::ArrayView1::from(v);
        (self.w.dot(&v) + &self.b).mapv(sigmoid)
    }

    pub fn decode(&self, s: &Array1<f64>) -> Array1<f64> {
        (self.w_dec.dot(s) + &self.b_dec).mapv(sigmoid)
    }

    pub fn loss(&self, v: &[f64]) -> f64 {
        let r = self.decode(&self.encode(v));
        v.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Loss and backpropagated gradient for a single patch.
    pub fn loss_and_grad(&self, v: &[f64]) -> (f64, AeGrad) {
        let s = self.encode(v);
        let r = self.decode(&s);
        let va = ndarray::ArrayView1::from(v);
        let diff = &r - &va;
        let loss = diff.dot(&diff);
        let delta_out = &diff * 2.0 * &r.mapv(|x| x * (1.0 - x));
        let delta_hidden = self.w_dec.t().dot(&delta_out) * s.mapv(|x| x * (1.0 - x));
        let outer = |a: &Array1<f64>, b: ndarray::ArrayView1<f64>| {
            Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
        };
        let grad = AeGrad {
            w: outer(&delta_hidden, va),
            b: delta_hidden.clone(),
            w_dec: outer(&delta_out, s.view()),
            b_dec: delta_out,
        };
        (loss, grad)
    }
}

pub fn ae_encode(params: &AeParams, v: &[f64]) -> Vec<f64> {
    params.encode(v).to_vec()
}

#[derive(Clone, Debug)]
pub struct AeFit {
    pub params: AeParams,
    /// Mean per-patch loss over each epoch.
    pub epoch_loss: Vec<f64>,
}

pub const AE_BATCH: usize = 32;

/// Minibatch gradient descent on the mean squared reconstruction error.
pub fn ae_learn(patches: &[Vec<f64>], n: usize, lr: f64, epochs: usize, seed: u64) -> Result<AeFit> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::config("learning rate must be positive"));
    }
    if patches.is_empty() || n == 0 || epochs == 0 {
        return Err(Error::config("autoencoder needs patches, hidden units and epochs"));
    }
    let d = patches[0].len();
    let mut params = AeParams::init(d, n, seed);
    let mut rng = seeded(seed ^ 0xae);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut epoch_loss = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(AE_BATCH) {
            let mut acc: Option<AeGrad> = None;
            for &i in batch {
                let (l, g) = params.loss_and_grad(&patches[i]);
                total += l;
                acc = Some(match acc {
                    None => g,
                    Some(mut a) => {
                        a.w += &g.w;
                        a.b += &g.b;
                        a.w_dec += &g.w_dec;
                        a.b_dec += &g.b_dec;
                        a
                    }
                });
            }
            let g = acc.expect("chunks are nonempty");
            let step = lr / batch.len() as f64;
            params.w.scaled_add(-step, &g.w);
            params.b.scaled_add(-step, &g.b);
            params.w_dec.scaled_add(-step, &g.w_dec);
            params.b_dec.scaled_add(-step, &g.b_dec);
        }
        let mean = total / patches.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence(format!(
                "autoencoder loss became {mean} in epoch {epoch}; try a smaller learning rate"
            )));
        }
        epoch_loss.push(mean);
    }
    Ok(AeFit { params, epoch_loss })
}
