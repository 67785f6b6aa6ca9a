//! Spike-and-slab sparse coding.
//!
//! Generative model, for hidden units `i` and visible dimensions `d`:
//!
//! ```text
//! h_i ~ Bernoulli(sigmoid(b_i))
//! s_i | h_i ~ N(h_i mu_i, 1 / alpha_i)
//! v_d | h, s ~ N(W_d: (h * s), 1 / beta_d)
//! ```
//!
//! with unit-norm columns of `W`. Inference is a factorial variational
//! posterior fitted by exact coordinate updates; learning is variational EM.

mod exact;
mod inference;
mod learn;

pub use exact::{exact_posterior, PosteriorExact, MAX_EXACT_UNITS};
pub use inference::{
    e_step, e_step_from, free_energy, EStepOptions, EStepReport, VariationalState,
};
pub use learn::{m_step, s3c_learn, S3cFit, S3cLearnOptions};

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const INIT_BIAS: f64 = -1.0;
pub const INIT_MU: f64 = 1.0;
pub const INIT_ALPHA: f64 = 1.0;
pub const INIT_BETA: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    #[default]
    Scalar,
    Diagonal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum S3cCode {
    /// Spike marginals `hhat`.
    #[default]
    Spikes,
    /// `hhat * shat`.
    SpikeSlab,
}

#[derive(Clone, Debug, PartialEq)]
pub struct S3cParams {
    /// `N x D`; row `i` is the unit-norm column `W_i`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub mu: Array1<f64>,
    pub alpha: Array1<f64>,
    /// Visible precisions; all equal in scalar mode.
    pub beta: Array1<f64>,
    pub beta_mode: BetaMode,
}

pub fn sigmoid(x: f64) -> f64 {
    crate::dict::autoencoder::sigmoid(x)
}

/// `log sigmoid(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl S3cParams {
    pub fn init(d: usize, n: usize, seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::config("S3C needs D >= 1 and N >= 1"));
        }
        let mut rng = seeded(seed);
        let mut w: Array2<f64> = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        normalize_rows(&mut w);
        Ok(Self {
            w,
            b: Array1::from_elem(n, INIT_BIAS),
            mu: Array1::from_elem(n, INIT_MU),
            alpha: Array1::from_elem(n, INIT_ALPHA),
            beta: Array1::from_elem(d, INIT_BETA),
            beta_mode: BetaMode::Scalar,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn units(&self) -> usize {
        self.w.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.w.dim();
        if self.b.len() != n || self.mu.len() != n || self.alpha.len() != n || self.beta.len() != d {
            return Err(Error::config("S3C parameter shapes are inconsistent"));
        }
        for (i, row) in self.w.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical(format!("column {i} of W has norm {norm}")));
            }
        }
        if self.alpha.iter().any(|a| !(*a > 0.0)) || self.beta.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::Numerical("precisions must be positive".into()));
        }
        let finite = self.w.iter().chain(&self.b).chain(&self.mu).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Numerical("S3C parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Largest absolute inner product between distinct columns of `W`.
    pub fn coherence(&self) -> f64 {
        coherence(&self.w)
    }

    /// Draws `(h, s, v)` from the generative model.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> (Vec<bool>, Vec<f64>, Vec<f64>) {
        let n = self.units();
        let mut h = vec![false; n];
        let mut s = vec![0.0; n];
        for i in 0..n {
            h[i] = rng.random::<f64>() < sigmoid(self.b[i]);
            let z: f64 = StandardNormal.sample(rng);
            s[i] = if h[i] { self.mu[i] } else { 0.0 } + z / self.alpha[i].sqrt();
        }
        let mut v: Vec<f64> = self
            .beta
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(rng);
                z / b.sqrt()
            })
            .collect();
        for i in 0..n {
            if h[i] {
                for (vd, w) in v.iter_mut().zip(self.w.row(i)) {
                    *vd += w * s[i];
                }
            }
        }
        (h, s, v)
    }
}

pub(crate) fn normalize_rows(w: &mut Array2<f64>) {
    for mut row in w.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

pub fn coherence(w: &Array2<f64>) -> f64 {
    let n = w.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = w.row(i);
            let b = w.row(j);
            let c = a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
            worst = worst.max(c.abs());
        }
    }
    worst
}

/// Encodes one preprocessed patch.
pub fn s3c_encode(
    params: &S3cParams,
    v: &[f64],
    mode: S3cCode,
    opts: &EStepOptions,
) -> Result<Vec<f64>> {
    let st = e_step(params, v, opts)?.state;
    Ok(match mode {
        S3cCode::Spikes => st.hhat,
        S3cCode::SpikeSlab => st.hhat.iter().zip(&st.shat).map(|(h, s)| h * s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_unit_norm_and_deterministic() {
        let p = S3cParams::init(20, 7, 4).unwrap();
        for row in p.w.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        assert_eq!(p, S3cParams::init(20, 7, 4).unwrap());
        assert!(p.validate().is_ok());
        assert!((sigmoid(p.b[0]) - 0.2689).abs() < 1e-4);
        assert!(S3cParams::init(0, 3, 1).is_err());
    }

    #[test]
    fn saturated_prior_gives_zero_code() {
        let mut p = S3cParams::init(16, 5, 1).unwrap();
        p.b.fill(-30.0);
        let v: Vec<f64> = (0..16).map(|i| 0.2 * (i as f64 * 0.3).cos()).collect();
        let code = s3c_encode(&p, &v, S3cCode::Spikes, &EStepOptions::default()).unwrap();
        assert!(code.iter().all(|c| *c < 1e-9));
        let code = s3c_encode(&p, &v, S3cCode::SpikeSlab, &EStepOptions::default()).unwrap();
        assert!(code.iter().all(|c| c.abs() < 1e-8));
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
    }
}
