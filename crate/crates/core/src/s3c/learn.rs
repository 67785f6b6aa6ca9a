//! M-step and minibatch variational EM.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::Prepared;
use super::{free_energy, normalize_rows, BetaMode, EStepOptions, S3cParams, VariationalState};
use crate::error::{Error, Result};
use crate::rng::{derive, seeded};

const PREC_MIN: f64 = 1e-8;
const PREC_MAX: f64 = 1e8;
const SPIKE_MIN: f64 = 1e-9;
const W_PASSES: usize = 3;

/// Closed-form maximization of `E_Q[log p(v, h, s)]` over one parameter
/// block at a time: `W` column by column on the unit sphere, then `beta`,
/// `mu`, `alpha` and `b`. Every block update is exact given the others, so
/// the free energy of the batch under its (fixed) states cannot increase.
pub fn m_step(params: &S3cParams, batch: &[(&[f64], &VariationalState)]) -> Result<S3cParams> {
    if batch.is_empty() {
        return Err(Error::config("M-step needs a nonempty batch"));
    }
    let (n, d) = params.w.dim();
    let count = batch.len() as f64;

    // sufficient statistics: A = sum E[z z^T], B = sum E[z] v^T (N x D)
    let mut a = Array2::<f64>::zeros((n, n));
    let mut b = Array2::<f64>::zeros((n, d));
    let mut var_sum = vec![0.0; n];
    for (v, st) in batch {
        if v.len() != d {
            return Err(Error::config("batch patch dimension does not match the model"));
        }
        let ez: Vec<f64> = st.hhat.iter().zip(&st.shat).map(|(h, s)| h * s).collect();
        for i in 0..n {
            let vz = st.hhat[i] * (st.shat[i] * st.shat[i] + st.tau[i]) - ez[i] * ez[i];
            var_sum[i] += vz;
            a[[i, i]] += vz;
            for j in 0..n {
                a[[i, j]] += ez[i] * ez[j];
            }
            if ez[i] != 0.0 {
                for (bk, x) in b.row_mut(i).iter_mut().zip(v.iter()) {
                    *bk += ez[i] * x;
                }
            }
        }
    }

    let mut out = params.clone();

    // W: column i minimizes sum_d beta_d (A_ii w_d^2 / 2 - w_d g_d) on ||w|| = 1
    for _ in 0..W_PASSES {
        for i in 0..n {
            if a[[i, i]] <= 1e-12 {
                log::warn!("unit {i} has no activation mass in this batch; keeping its filter");
                continue;
            }
            let mut g = b.row(i).to_owned();
            for k in 0..n {
                if k != i && a[[k, i]] != 0.0 {
                    g.scaled_add(-a[[k, i]], &out.w.row(k));
                }
            }
            if let Some(col) = sphere_column(&g, a[[i, i]], &out.beta, out.beta_mode) {
                out.w.row_mut(i).assign(&col);
            }
        }
    }

    // beta from the expected residual energy
    let mut resid = vec![0.0; d];
    for (v, st) in batch {
        let mut m = vec![0.0; d];
        for i in 0..n {
            let z = st.hhat[i] * st.shat[i];
            if z != 0.0 {
                for (md, w) in m.iter_mut().zip(out.w.row(i)) {
                    *md += w * z;
                }
            }
        }
        for k in 0..d {
            resid[k] += (v[k] - m[k]) * (v[k] - m[k]);
        }
    }
    for i in 0..n {
        for (k, w) in out.w.row(i).iter().enumerate() {
            resid[k] += w * w * var_sum[i];
        }
    }
    match out.beta_mode {
        BetaMode::Scalar => {
            let total: f64 = resid.iter().sum();
            let beta = (count * d as f64 / total).clamp(PREC_MIN, PREC_MAX);
            out.beta.fill(beta);
        }
        BetaMode::Diagonal => {
            for k in 0..d {
                out.beta[k] = (count / resid[k]).clamp(PREC_MIN, PREC_MAX);
            }
        }
    }

    for i in 0..n {
        let mass: f64 = batch.iter().map(|(_, st)| st.hhat[i]).sum();
        if mass > SPIKE_MIN * count {
            out.mu[i] = batch.iter().map(|(_, st)| st.hhat[i] * st.shat[i]).sum::<f64>() / mass;
        }
        // inactive branch keeps its prior N(0, 1/alpha_old) under Q
        let second: f64 = batch
            .iter()
            .map(|(_, st)| {
                let (h, s, t) = (st.hhat[i], st.shat[i], st.tau[i]);
                h * ((s - out.mu[i]) * (s - out.mu[i]) + t) + (1.0 - h) / params.alpha[i]
            })
            .sum();
        out.alpha[i] = (count / second).clamp(PREC_MIN, PREC_MAX);
        let rate = (mass / count).clamp(SPIKE_MIN, 1.0 - SPIKE_MIN);
        out.b[i] = (rate / (1.0 - rate)).ln();
    }
    Ok(out)
}

/// Minimizer of `sum_d beta_d (a w_d^2 / 2 - w_d g_d)` over the unit sphere.
fn sphere_column(g: &Array1<f64>, a: f64, beta: &Array1<f64>, mode: BetaMode) -> Option<Array1<f64>> {
    let gnorm = g.dot(g).sqrt();
    if gnorm <= 1e-300 {
        return None;
    }
    match mode {
        BetaMode::Scalar => Some(g / gnorm),
        BetaMode::Diagonal => {
            // stationarity: w_d = q_d / (c_d + lambda) with q = beta g, c = beta a;
            // the global minimizer has lambda >= -min c and ||w(lambda)|| = 1
            let q: Vec<f64> = g.iter().zip(beta).map(|(x, b)| x * b).collect();
            let c: Vec<f64> = beta.iter().map(|b| b * a).collect();
            let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
            let qnorm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let norm_at = |lam: f64| {
                q.iter()
                    .zip(&c)
                    .map(|(qd, cd)| (qd / (cd + lam)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let mut lo = -cmin;
            let mut hi = qnorm - cmin;
            if norm_at(hi) > 1.0 {
                hi += qnorm;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= -cmin || norm_at(mid) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let w: Array1<f64> = q.iter().zip(&c).map(|(qd, cd)| qd / (cd + hi)).collect();
            let norm = w.dot(&w).sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Some(g / gnorm);
            }
            Some(w / norm)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct S3cLearnOptions {
    pub batch_size: usize,
    /// Weight kept on the old parameters after each minibatch M-step.
    pub damping: f64,
    pub e_max_sweeps: usize,
    pub e_tol: f64,
    pub beta_mode: BetaMode,
    /// Start each patch's E-step from its state in the previous epoch.
    pub warm_start: bool,
}

impl Default for S3cLearnOptions {
    fn default() -> Self {
        Self {
            batch_size: 200,
            damping: 0.9,
            e_max_sweeps: 50,
            e_tol: 1e-4,
            beta_mode: BetaMode::Scalar,
            warm_start: true,
        }
    }
}

impl S3cLearnOptions {
    pub fn e_step(&self) -> EStepOptions {
        EStepOptions {
            max_sweeps: self.e_max_sweeps,
            tol: self.e_tol,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct S3cFit {
    pub params: S3cParams,
    /// Mean free energy per patch over each epoch.
    pub free_energy: Vec<f64>,
}

fn damp(old: &S3cParams, new: &S3cParams, keep: f64) -> S3cParams {
    let mix = |a: &Array1<f64>, b: &Array1<f64>| a * keep + b * (1.0 - keep);
    let mut w = &old.w * keep + &new.w * (1.0 - keep);
    normalize_rows(&mut w);
    S3cParams {
        w,
        b: mix(&old.b, &new.b),
        mu: mix(&old.mu, &new.mu),
        alpha: mix(&old.alpha, &new.alpha),
        beta: mix(&old.beta, &new.beta),
        beta_mode: old.beta_mode,
    }
}

/// Minibatch variational EM from [`S3cParams::init`].
pub fn s3c_learn(
    patches: &[Vec<f64>],
    n: usize,
    epochs: usize,
    seed: u64,
    opts: &S3cLearnOptions,
) -> Result<S3cFit> {
    let d = patches
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::config("S3C learning needs at least one patch"))?;
    if patches.iter().any(|p| p.len() != d) {
        return Err(Error::config("patches differ in dimension"));
    }
    if opts.batch_size == 0 || !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::config("batch size must be positive and damping in [0, 1)"));
    }
    let mut params = S3cParams::init(d, n, seed)?;
    params.beta_mode = opts.beta_mode;
    let mut rng = seeded(derive(seed, 1));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut states: Vec<Option<VariationalState>> = vec![None; patches.len()];
    let e_opts = opts.e_step();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let prep = Prepared::new(&params);
            let results: Vec<(VariationalState, f64)> = chunk
                .par_iter()
                .map(|&i| {
                    let init = match (&states[i], opts.warm_start) {
                        (Some(st), true) => st.clone(),
                        _ => prep.initial_state(),
                    };
                    let st = prep.run(&patches[i], init, &e_opts)?.state;
                    let f = free_energy(&params, &patches[i], &st);
                    Ok((st, f))
                })
                .collect::<Result<_>>()?;
            total += results.iter().map(|(_, f)| f).sum::<f64>();
            let batch: Vec<(&[f64], &VariationalState)> = chunk
                .iter()
                .zip(&results)
                .map(|(&i, (st, _))| (patches[i].as_slice(), st))
                .collect();
            let updated = m_step(&params, &batch)?;
            params = damp(&params, &updated, opts.damping);
            for (&i, (st, _)) in chunk.iter().zip(results) {
                states[i] = Some(st);
            }
        }
        let mean = total / patches.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("free energy became {mean}")));
        }
        trace.push(mean);
    }
    Ok(S3cFit {
        params,
        free_energy: trace,
    })
}
