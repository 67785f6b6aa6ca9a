//! Mean-field E-step.
//!
//! `Q(h, s) = prod_i Q(h_i) Q(s_i | h_i)` with `Q(h_i = 1) = hhat_i`,
//! `Q(s_i | h_i = 1) = N(shat_i, tau_i)` and `Q(s_i | h_i = 0)` equal to the
//! prior `N(0, 1 / alpha_i)`. Each unit update is the exact minimizer of the
//! free energy over that unit's factors with the others held fixed, so the
//! free energy never increases across a sweep.
//!
//! With `u_i = W_i^T diag(beta) (v - sum_{k != i} W_k hhat_k shat_k)` and
//! `c_i = W_i^T diag(beta) W_i` the unit update reads
//!
//! ```text
//! tau_i  = 1 / (alpha_i + c_i)
//! shat_i = (u_i + alpha_i mu_i) tau_i
//! hhat_i = sigmoid(b_i + (u_i + alpha_i mu_i)^2 tau_i / 2
//!                  - alpha_i mu_i^2 / 2 - ln((alpha_i + c_i) / alpha_i) / 2)
//! ```

use std::f64::consts::PI;

use ndarray::Array2;

use super::{log_sigmoid, sigmoid, S3cParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    pub hhat: Vec<f64>,
    pub shat: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct EStepOptions {
    pub max_sweeps: usize,
    /// Converged once no spike marginal moves by this much in a sweep.
    pub tol: f64,
    /// Record the free energy after every sweep.
    pub trace: bool,
}

impl Default for EStepOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-6,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EStepReport {
    pub state: VariationalState,
    pub sweeps: usize,
    pub converged: bool,
    /// Free energy at the start and after each sweep, when traced.
    pub free_energy: Vec<f64>,
}

/// Quantities shared by every E-step under fixed parameters.
pub(crate) struct Prepared<'a> {
    params: &'a S3cParams,
    /// Rows `W_i * beta`.
    wb: Array2<f64>,
    c: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(params: &'a S3cParams) -> Self {
        let mut wb = params.w.clone();
        for mut row in wb.rows_mut() {
            row *= &params.beta;
        }
        let c = params
            .w
            .rows()
            .into_iter()
            .zip(wb.rows())
            .map(|(w, x)| w.dot(&x))
            .collect();
        Self { params, wb, c }
    }

    pub(crate) fn initial_state(&self) -> VariationalState {
        let p = self.params;
        VariationalState {
            hhat: p.b.iter().map(|b| sigmoid(*b)).collect(),
            shat: p.mu.to_vec(),
            tau: p.alpha.iter().zip(&self.c).map(|(a, c)| 1.0 / (a + c)).collect(),
        }
    }

    fn mean_recon(&self, st: &VariationalState) -> Vec<f64> {
        let mut m = vec![0.0; self.params.dim()];
        for (i, row) in self.params.w.rows().into_iter().enumerate() {
            let z = st.hhat[i] * st.shat[i];
            if z != 0.0 {
                for (md, w) in m.iter_mut().zip(row) {
                    *md += w * z;
                }
            }
        }
        m
    }

    pub(crate) fn run(
        &self,
        v: &[f64],
        mut st: VariationalState,
        opts: &EStepOptions,
    ) -> Result<EStepReport> {
        let p = self.params;
        if v.len() != p.dim() {
            return Err(Error::config(format!(
                "patch has dimension {}, S3C model expects {}",
                v.len(),
                p.dim()
            )));
        }
        let mut trace = Vec::new();
        if opts.trace {
            trace.push(free_energy(p, v, &st));
        }
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut m = self.mean_recon(&st);
            let mut max_change: f64 = 0.0;
            for i in 0..p.units() {
                let wb = self.wb.row(i);
                let resid: f64 = wb
                    .iter()
                    .zip(v.iter().zip(&m))
                    .map(|(w, (vd, md))| w * (vd - md))
                    .sum();
                let (a, mu, c) = (p.alpha[i], p.mu[i], self.c[i]);
                let old_z = st.hhat[i] * st.shat[i];
                let u = resid + c * old_z;
                let prec = a + c;
                let num = u + a * mu;
                let shat = num / prec;
                let logit = p.b[i] + 0.5 * num * num / prec - 0.5 * a * mu * mu
                    - 0.5 * (prec / a).ln();
                let hhat = sigmoid(logit);
                if !hhat.is_finite() || !shat.is_finite() {
                    return Err(Error::Numerical(format!(
                        "E-step produced a non-finite state at unit {i}"
                    )));
                }
                max_change = max_change.max((hhat - st.hhat[i]).abs());
                st.hhat[i] = hhat;
                st.shat[i] = shat;
                st.tau[i] = 1.0 / prec;
                let dz = hhat * shat - old_z;
                if dz != 0.0 {
                    for (md, w) in m.iter_mut().zip(p.w.row(i)) {
                        *md += w * dz;
                    }
                }
            }
            if opts.trace {
                trace.push(free_energy(p, v, &st));
            }
            if max_change < opts.tol {
                converged = true;
                break;
            }
        }
        Ok(EStepReport {
            state: st,
            sweeps,
            converged,
            free_energy: trace,
        })
    }
}

/// Runs the E-step from the prior-mean initialization
/// `hhat = sigmoid(b)`, `shat = mu`.
pub fn e_step(params: &S3cParams, v: &[f64], opts: &EStepOptions) -> Result<EStepReport> {
    let prep = Prepared::new(params);
    let init = prep.initial_state();
    prep.run(v, init, opts)
}

/// Runs the E-step warm-started at `init`.
pub fn e_step_from(
    params: &S3cParams,
    v: &[f64],
    init: VariationalState,
    opts: &EStepOptions,
) -> Result<EStepReport> {
    Prepared::new(params).run(v, init, opts)
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Variational free energy `E_Q[log Q] - E_Q[log p(v, h, s)]`, an upper
/// bound on `-log p(v)`.
pub fn free_energy(params: &S3cParams, v: &[f64], st: &VariationalState) -> f64 {
    let n = params.units();
    let mut mean = vec![0.0; params.dim()];
    let mut var_term = vec![0.0; params.dim()];
    for i in 0..n {
        let (h, s, t) = (st.hhat[i], st.shat[i], st.tau[i]);
        let ez = h * s;
        let vz = h * (s * s + t) - ez * ez;
        for (d, w) in params.w.row(i).iter().enumerate() {
            mean[d] += w * ez;
            var_term[d] += w * w * vz;
        }
    }
    let mut f = 0.0;
    for d in 0..params.dim() {
        let beta = params.beta[d];
        let r = v[d] - mean[d];
        f += 0.5 * (2.0 * PI).ln() - 0.5 * beta.ln() + 0.5 * beta * (r * r + var_term[d]);
    }
    for i in 0..n {
        let (h, s, t) = (st.hhat[i], st.shat[i], st.tau[i]);
        let (a, mu, b) = (params.alpha[i], params.mu[i], params.b[i]);
        f += xlogx(h) + xlogx(1.0 - h) - h * log_sigmoid(b) - (1.0 - h) * log_sigmoid(-b);
        if h > 0.0 {
            f += h * 0.5 * (a * t + a * (s - mu) * (s - mu) - 1.0 - (a * t).ln());
        }
    }
    f
}
