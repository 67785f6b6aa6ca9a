//! Exact posterior by enumerating every spike configuration.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{log_sigmoid, S3cParams};
use crate::error::{Error, Result};

pub const MAX_EXACT_UNITS: usize = 12;

#[derive(Clone, Debug)]
pub struct Configuration {
    /// Bit `i` set means `h_i = 1`.
    pub mask: u32,
    /// `p(h | v)`.
    pub weight: f64,
    /// Conditional mean of the active slabs, in ascending unit order.
    pub mean: Vec<f64>,
    /// Conditional covariance of the active slabs.
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct PosteriorExact {
    pub configs: Vec<Configuration>,
    /// `E[h_i | v]`.
    pub spike: Vec<f64>,
    /// `E[h_i s_i | v]`.
    pub spike_slab: Vec<f64>,
    /// `log p(v)`.
    pub log_evidence: f64,
}

/// For each `h`, `v | h` is Gaussian with mean `W_A mu_A` and covariance
/// `W_A diag(alpha_A)^-1 W_A^T + diag(beta)^-1` over the active set `A`;
/// the slab posterior has precision `diag(alpha_A) + W_A^T diag(beta) W_A`.
pub fn exact_posterior(params: &S3cParams, v: &[f64]) -> Result<PosteriorExact> {
    let n = params.units();
    if n > MAX_EXACT_UNITS {
        return Err(Error::Capacity(format!(
            "exact posterior enumerates 2^N configurations; N = {n} exceeds {MAX_EXACT_UNITS}"
        )));
    }
    let d = params.dim();
    if v.len() != d {
        return Err(Error::config("patch dimension does not match the model"));
    }
    let beta = &params.beta;
    // log N(v | 0, diag(beta)^-1)
    let base: f64 = (0..d)
        .map(|k| 0.5 * beta[k].ln() - 0.5 * (2.0 * PI).ln() - 0.5 * beta[k] * v[k] * v[k])
        .sum();
    let mut log_w = Vec::with_capacity(1 << n);
    let mut configs = Vec::with_capacity(1 << n);
    for mask in 0u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();
        let log_prior: f64 = (0..n)
            .map(|i| {
                if mask & (1 << i) != 0 {
                    log_sigmoid(params.b[i])
                } else {
                    log_sigmoid(-params.b[i])
                }
            })
            .sum();
        if k == 0 {
            log_w.push(log_prior + base);
            configs.push(Configuration {
                mask,
                weight: 0.0,
                mean: Vec::new(),
                cov: DMatrix::zeros(0, 0),
            });
            continue;
        }
        // precision P = diag(alpha_A) + W_A^T B W_A and linear term
        // eta = alpha_A mu_A + W_A^T B v
        let mut prec = DMatrix::<f64>::zeros(k, k);
        let mut eta = DVector::<f64>::zeros(k);
        for (a, &i) in active.iter().enumerate() {
            let wi = params.w.row(i);
            for (c, &j) in active.iter().enumerate() {
                let wj = params.w.row(j);
                prec[(a, c)] = (0..d).map(|t| wi[t] * beta[t] * wj[t]).sum();
            }
            prec[(a, a)] += params.alpha[i];
            eta[a] = params.alpha[i] * params.mu[i] + (0..d).map(|t| wi[t] * beta[t] * v[t]).sum::<f64>();
        }
        let chol = prec
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("slab precision is not positive definite".into()))?;
        let mean = chol.solve(&eta);
        let logdet_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        // log p(v | h) - base, by completing the square in s_A:
        // 1/2 eta^T P^-1 eta - 1/2 sum alpha mu^2 + 1/2 sum ln alpha - 1/2 ln det P
        let quad = eta.dot(&mean);
        let prior_terms: f64 = active
            .iter()
            .map(|&i| 0.5 * params.alpha[i].ln() - 0.5 * params.alpha[i] * params.mu[i] * params.mu[i])
            .sum();
        let log_lik = base + 0.5 * quad + prior_terms - 0.5 * logdet_prec;
        log_w.push(log_prior + log_lik);
        configs.push(Configuration {
            mask,
            weight: 0.0,
            mean: mean.iter().copied().collect(),
            cov: chol.inverse(),
        });
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
    let log_evidence = max + z.ln();
    let mut spike = vec![0.0; n];
    let mut spike_slab = vec![0.0; n];
    for (cfg, l) in configs.iter_mut().zip(&log_w) {
        cfg.weight = (l - log_evidence).exp();
        let mut a = 0;
        for i in 0..n {
            if cfg.mask & (1 << i) != 0 {
                spike[i] += cfg.weight;
                spike_slab[i] += cfg.weight * cfg.mean[a];
                a += 1;
            }
        }
    }
    Ok(PosteriorExact {
        configs,
        spike,
        spike_slab,
        log_evidence,
    })
}
