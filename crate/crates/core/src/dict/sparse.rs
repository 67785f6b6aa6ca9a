//! L1 sparse coding: lasso encoding by cyclic coordinate descent and
//! dictionary learning by block coordinate descent over unit-ball atoms.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::dot;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug)]
pub struct LassoOptions {
    /// Stop once the largest KKT violation drops below this.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

/// A dictionary with its cached Gram matrix.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: Array2<f64>,
    gram: Array2<f64>,
}

impl Dictionary {
    /// `atoms` is `N x D`; every row is one atom.
    pub fn new(atoms: Array2<f64>) -> Self {
        let gram = atoms.dot(&atoms.t());
        Self { atoms, gram }
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn size(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    fn correlations(&self, v: &[f64]) -> Vec<f64> {
        self.atoms.rows().into_iter().map(|a| dot(a, v)).collect()
    }

    pub fn reconstruct(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (a, &c) in self.atoms.rows().into_iter().zip(s) {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(a.iter()) {
                    *o += c * x;
                }
            }
        }
        out
    }

    /// `||v - W s||^2 + beta ||s||_1`
    pub fn objective(&self, v: &[f64], s: &[f64], beta: f64) -> f64 {
        let r = self.reconstruct(s);
        let fit: f64 = v.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
        fit + beta * s.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// Largest violation of the lasso optimality conditions at `s`.
    pub fn kkt_residual(&self, v: &[f64], s: &[f64], beta: f64) -> f64 {
        let c = self.correlations(v);
        self.kkt_from(&c, s, beta)
    }

    fn kkt_from(&self, c: &[f64], s: &[f64], beta: f64) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let gs: f64 = (0..n).map(|k| self.gram[[j, k]] * s[k]).sum();
            let grad = 2.0 * (gs - c[j]);
            let viol = if s[j] != 0.0 {
                (grad + beta * s[j].signum()).abs()
            } else {
                (grad.abs() - beta).max(0.0)
            };
            worst = worst.max(viol);
        }
        worst
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Solves `min_s ||v - W s||^2 + beta ||s||_1` from a zero start.
pub fn sc_encode(dict: &Dictionary, v: &[f64], beta: f64, opts: &LassoOptions) -> Result<Vec<f64>> {
    sc_encode_from(dict, v, beta, vec![0.0; dict.size()], opts)
}

/// Coordinate descent with covariance updates, warm-started at `s`.
pub fn sc_encode_from(
    dict: &Dictionary,
    v: &[f64],
    beta: f64,
    mut s: Vec<f64>,
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    if beta <= 0.0 {
        return Err(Error::config("lasso penalty must be positive"));
    }
    if v.len() != dict.dim() {
        return Err(Error::config(format!(
            "patch has dimension {}, dictionary expects {}",
            v.len(),
            dict.dim()
        )));
    }
    let n = dict.size();
    let c = dict.correlations(v);
    // q = G s
    let mut q: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| dict.gram[[j, k]] * s[k]).sum())
        .collect();
    let half = beta / 2.0;
    let mut residual = f64::INFINITY;
    for sweep in 0..opts.max_sweeps {
        let mut max_delta: f64 = 0.0;
        for j in 0..n {
            let gjj = dict.gram[[j, j]];
            if gjj <= 0.0 {
                s[j] = 0.0;
                continue;
            }
            let rho = c[j] - (q[j] - gjj * s[j]);
            let new = soft(rho, half) / gjj;
            let delta = new - s[j];
            if delta != 0.0 {
                for (k, qk) in q.iter_mut().enumerate() {
                    *qk += dict.gram[[k, j]] * delta;
                }
                s[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-3 * opts.kkt_tol || sweep % 10 == 9 {
            residual = dict.kkt_from(&c, &s, beta);
            if residual < opts.kkt_tol {
                return Ok(s);
            }
            if let Some(p) = polish(dict, &c, &s, beta) {
                if dict.kkt_from(&c, &p, beta) < opts.kkt_tol {
                    return Ok(p);
                }
            }
            // refresh the running product to shed accumulated rounding
            q = (0..n)
                .map(|j| (0..n).map(|k| dict.gram[[j, k]] * s[k]).sum())
                .collect();
        }
    }
    Err(Error::NonConvergence {
        what: "lasso coordinate descent".into(),
        residual,
    })
}

/// Solves the optimality conditions on the current support with its signs
/// held fixed; `None` when a sign flips or the system is singular.
fn polish(dict: &Dictionary, c: &[f64], s: &[f64], beta: f64) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..s.len()).filter(|&j| s[j] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let m = support.len();
    let g = nalgebra::DMatrix::from_fn(m, m, |a, b| dict.gram[[support[a], support[b]]]);
    let rhs = nalgebra::DVector::from_fn(m, |a, _| c[support[a]] - beta / 2.0 * s[support[a]].signum());
    let x = g.cholesky()?.solve(&rhs);
    let mut out = vec![0.0; s.len()];
    for (a, &j) in support.iter().enumerate() {
        if x[a].signum() != s[j].signum() {
            return None;
        }
        out[j] = x[a];
    }
    Some(out)
}

const DICT_PASSES: usize = 500;

#[derive(Clone, Debug)]
pub struct ScFit {
    pub dict: Dictionary,
    /// Total objective after each outer iteration.
    pub objective: Vec<f64>,
}

/// Alternating minimization of `sum_i ||v_i - W s_i||^2 + beta ||s_i||_1`
/// subject to `||W_j|| <= 1`.
pub fn sc_learn(patches: &[Vec<f64>], n: usize, beta: f64, iters: usize, seed: u64) -> Result<ScFit> {
    if beta <= 0.0 {
        return Err(Error::config("lasso penalty must be positive"));
    }
    if patches.is_empty() || n == 0 {
        return Err(Error::config("sparse coding needs patches and a nonzero dictionary size"));
    }
    let d = patches[0].len();
    if patches.iter().any(|p| p.len() != d) {
        return Err(Error::config("patches differ in dimension"));
    }
    let mut rng = seeded(seed);
    // atoms start as normalized random patches, or random directions
    // where a drawn patch is zero
    let mut atoms: Array2<f64> = Array2::zeros((n, d));
    for mut row in atoms.rows_mut() {
        let v = &patches[rng.random_range(0..patches.len())];
        if v.iter().any(|x| *x != 0.0) {
            row.assign(&ndarray::ArrayView1::from(v.as_slice()));
        } else {
            row.mapv_inplace(|_| StandardNormal.sample(&mut rng));
        }
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let opts = LassoOptions::default();
    let mut dict = Dictionary::new(atoms);
    let mut codes = vec![vec![0.0; n]; patches.len()];
    let mut objective = Vec::with_capacity(iters);
    for _ in 0..iters {
        codes = patches
            .par_iter()
            .zip(codes.into_par_iter())
            .map(|(v, s)| sc_encode_from(&dict, v, beta, s, &opts))
            .collect::<Result<_>>()?;
        objective.push(
            patches
                .iter()
                .zip(&codes)
                .map(|(v, s)| dict.objective(v, s, beta))
                .sum(),
        );
        dict = update_dictionary(&dict, patches, &codes);
    }
    Ok(ScFit { dict, objective })
}

/// Passes of exact per-atom minimization, each followed by projection onto
/// the unit ball, until the atoms stop moving.
fn update_dictionary(dict: &Dictionary, patches: &[Vec<f64>], codes: &[Vec<f64>]) -> Dictionary {
    let (n, d) = (dict.size(), dict.dim());
    let mut a = Array2::<f64>::zeros((n, n));
    let mut b = Array2::<f64>::zeros((n, d));
    for (v, s) in patches.iter().zip(codes) {
        for j in 0..n {
            if s[j] == 0.0 {
                continue;
            }
            for k in 0..n {
                a[[j, k]] += s[j] * s[k];
            }
            for (bj, x) in b.row_mut(j).iter_mut().zip(v) {
                *bj += s[j] * x;
            }
        }
    }
    let mut w = dict.atoms.clone();
    for _ in 0..DICT_PASSES {
        let mut moved: f64 = 0.0;
        for j in 0..n {
            let ajj = a[[j, j]];
            if ajj <= 0.0 {
                continue;
            }
            // u = W_j + (B_j - sum_k A_jk W_k) / A_jj
            let mut u = b.row(j).to_owned();
            let aj = a.row(j);
            let wa = aj.dot(&w);
            u -= &wa;
            u /= ajj;
            u += &w.row(j);
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u /= norm;
            }
            moved = moved.max((&u - &w.row(j)).iter().fold(0.0, |m, x| m.max(x.abs())));
            w.row_mut(j).assign(&u);
        }
        if moved < 1e-10 {
            break;
        }
    }
    debug_assert!(w.axis_iter(Axis(0)).all(|r| r.dot(&r) <= 1.0 + 1e-9));
    Dictionary::new(w)
}
