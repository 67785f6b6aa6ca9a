use rand::Rng;
use rayon::prelude::*;

use super::{check_dim, check_training, one_vs_rest, Classifier, ClassifierFactory, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{Geometry, ModelFile, ModelKind};
use crate::rng::seeded;

pub const CHI2_EPS: f64 = 1e-10;
/// Largest KKT violation tolerated at termination.
pub const KKT_TOL: f64 = 1e-3;
pub const MAX_GAMMA_PAIRS: usize = 10_000;

/// `sum_i (x_i - y_i)^2 / (x_i + y_i + eps)`
pub fn chi2_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b) / (a + b + CHI2_EPS))
        .sum()
}

pub fn chi2_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    (-gamma * chi2_distance(x, y)).exp()
}

/// Replaces negative entries by zero, warning once per call.
pub fn clip_negative(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let negatives = x.iter().flatten().filter(|v| **v < 0.0).count();
    if negatives > 0 {
        log::warn!("clipping {negatives} negative feature values to zero for the chi2 kernel");
    }
    x.iter()
        .map(|v| v.iter().map(|a| a.max(0.0)).collect())
        .collect()
}

fn clip_one(x: &[f64]) -> Vec<f64> {
    if x.iter().any(|v| *v < 0.0) {
        log::warn!("clipping negative feature values to zero for the chi2 kernel");
    }
    x.iter().map(|a| a.max(0.0)).collect()
}

/// Inverse mean chi2 distance over all pairs, or over a seeded sample of
/// pairs when there are more than [`MAX_GAMMA_PAIRS`].
pub fn default_gamma(x: &[Vec<f64>], seed: u64) -> f64 {
    let n = x.len();
    let pairs = n * n.saturating_sub(1) / 2;
    let mean = if pairs == 0 {
        0.0
    } else if pairs <= MAX_GAMMA_PAIRS {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += chi2_distance(&x[i], &x[j]);
            }
        }
        s / pairs as f64
    } else {
        let mut rng = seeded(seed);
        let mut s = 0.0;
        for _ in 0..MAX_GAMMA_PAIRS {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            s += chi2_distance(&x[i], &x[j]);
        }
        s / MAX_GAMMA_PAIRS as f64
    };
    if mean > 0.0 {
        1.0 / mean
    } else {
        1.0
    }
}

/// Row-major `n x n` Gram matrix.
pub fn chi2_gram(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| if i == j { 1.0 } else { chi2_kernel(&x[i], &x[j], gamma) }).collect())
        .collect();
    let mut g = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            g[i * n + i + off] = v;
            g[(i + off) * n + i] = v;
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct SmoResult {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_t alpha_t y_t K(x_t, x) - rho`.
    pub rho: f64,
    pub violation: f64,
    pub iterations: usize,
}

/// SMO with maximal-violating-pair selection on a precomputed Gram matrix.
pub fn smo_binary(gram: &[f64], y: &[f64], c: f64, tol: f64) -> Result<SmoResult> {
    if !(c > 0.0) {
        return Err(Error::config(format!("C must be positive, got {c}")));
    }
    let n = y.len();
    let k = |i: usize, j: usize| gram[i * n + j];
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n * n).max(100_000);
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let mut iterations = 0;
    let violation = loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                i = t;
                gmax = v;
            }
            if low(alpha[t], y[t]) && v < gmin {
                j = t;
                gmin = v;
            }
        }
        let viol = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || viol < tol {
            break viol.max(0.0);
        }
        if iterations == max_iter {
            return Err(Error::NonConvergence {
                what: "kernel SVM SMO".into(),
                residual: viol,
            });
        }
        iterations += 1;
        let (ai, aj) = (alpha[i], alpha[j]);
        let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(1e-12);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    };
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(SmoResult {
        alpha,
        rho,
        violation,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chi2Svm {
    /// Training features referenced by some class.
    pub support: Vec<Vec<f64>>,
    /// `coef[class][s] = alpha y` for support vector `s`.
    pub coef: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub c: f64,
}

impl Chi2Svm {
    pub fn train(x: &[Vec<f64>], y: &[usize], c: f64, gamma: Option<f64>, seed: u64) -> Result<Self> {
        let k = check_training(x, y)?;
        let x = clip_negative(x);
        let gamma = gamma.unwrap_or_else(|| default_gamma(&x, seed));
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be positive, got {gamma}")));
        }
        let gram = chi2_gram(&x, gamma);
        let fits = (0..k)
            .map(|class| smo_binary(&gram, &one_vs_rest(y, class), c, KKT_TOL))
            .collect::<Result<Vec<_>>>()?;
        let keep: Vec<usize> = (0..x.len())
            .filter(|&t| fits.iter().any(|f| f.alpha[t] > 0.0))
            .collect();
        let coef = fits
            .iter()
            .enumerate()
            .map(|(class, f)| {
                keep.iter()
                    .map(|&t| f.alpha[t] * if y[t] == class { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        Ok(Self {
            support: keep.iter().map(|&t| x[t].clone()).collect(),
            coef,
            rho: fits.iter().map(|f| f.rho).collect(),
            gamma,
            c,
        })
    }
}

impl Classifier for Chi2Svm {
    fn kind(&self) -> ModelKind {
        ModelKind::SvmChi2
    }
    fn classes(&self) -> usize {
        self.coef.len()
    }
    fn dim(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }
    fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let x = clip_one(x);
        let kv: Vec<f64> = self.support.iter().map(|s| chi2_kernel(s, &x, self.gamma)).collect();
        Ok(self
            .coef
            .iter()
            .zip(&self.rho)
            .map(|(c, r)| c.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>() - r)
            .collect())
    }
    fn to_file(&self) -> Result<ModelFile> {
        let (k, d, s) = (self.classes(), self.dim(), self.support.len());
        let mut f = ModelFile::new(
            ModelKind::SvmChi2,
            Geometry {
                dim: d,
                units: k,
                ..Default::default()
            },
        );
        f.push("support", &[s, d], self.support.concat())?;
        f.push("coef", &[k, s], self.coef.concat())?;
        f.push("rho", &[k], self.rho.clone())?;
        f.push_scalar("gamma", self.gamma)?;
        f.push_scalar("c", self.c)?;
        Ok(f)
    }
}

pub struct Chi2SvmFactory;

impl ClassifierFactory for Chi2SvmFactory {
    fn name(&self) -> &'static str {
        "exp-chi2"
    }
    fn kind(&self) -> ModelKind {
        ModelKind::SvmChi2
    }
    fn train(&self, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(Chi2Svm::train(x, y, cfg.c, cfg.gamma, cfg.seed)?))
    }
    fn load(&self, file: &ModelFile) -> Result<Box<dyn Classifier>> {
        file.expect_kind(ModelKind::SvmChi2)?;
        let (k, d) = (file.geometry.units, file.geometry.dim);
        let s = file.get("support")?.shape.first().copied().unwrap_or(0);
        let support = file.array("support", &[s, d])?;
        let coef = file.array("coef", &[k, s])?;
        Ok(Box::new(Chi2Svm {
            support: (0..s).map(|i| support[i * d..(i + 1) * d].to_vec()).collect(),
            coef: (0..k).map(|i| coef[i * s..(i + 1) * s].to_vec()).collect(),
            rho: file.array("rho", &[k])?.to_vec(),
            gamma: file.scalar("gamma")?,
            c: file.scalar("c")?,
        }))
    }
}
