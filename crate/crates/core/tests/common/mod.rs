//! Oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use texcode::s3c::{coherence, BetaMode, S3cParams};

/// Unit-norm `n x d` atoms with pairwise coherence below `max_coherence`,
/// by rejection sampling of isotropic directions.
pub fn near_orthogonal(d: usize, n: usize, max_coherence: f64, rng: &mut impl Rng) -> Array2<f64> {
    loop {
        let mut w: Array2<f64> = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
        for mut row in w.rows_mut() {
            let norm = row.dot(&row).sqrt();
            row /= norm;
        }
        if coherence(&w) < max_coherence {
            return w;
        }
    }
}

/// Random S3C model around a near-orthogonal dictionary.
pub fn random_model(d: usize, n: usize, rng: &mut impl Rng) -> S3cParams {
    let w = near_orthogonal(d, n, 0.2, rng);
    let mut p = S3cParams::init(d, n, 0).unwrap();
    p.w = w;
    p.b.mapv_inplace(|_| rng.random_range(-3.0..0.0));
    p.mu.mapv_inplace(|_| {
        let m: f64 = rng.random_range(0.5..2.0);
        if rng.random::<bool>() { m } else { -m }
    });
    p.alpha.mapv_inplace(|_| rng.random_range(1.0..4.0));
    p.beta.fill(rng.random_range(2.0..10.0));
    p.beta_mode = BetaMode::Scalar;
    p
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm
    let mut out = Vec::new();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    out.push(a.clone());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Optimal one-to-one matching of learned rows to planted rows maximizing
/// the summed absolute cosine; returns the matched |cosine| per planted row.
pub fn matched_cosines(planted: &Array2<f64>, learned: &Array2<f64>) -> Vec<f64> {
    let n = planted.nrows();
    assert!(learned.nrows() >= n && n <= 9);
    let cos = |i: usize, j: usize| {
        let a = planted.row(i);
        let b = learned.row(j);
        (a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())).abs()
    };
    let table: Vec<Vec<f64>> = (0..n).map(|i| (0..learned.nrows()).map(|j| cos(i, j)).collect()).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    // learned rows beyond n are only considered when there are exactly n
    for perm in permutations(n) {
        let total: f64 = (0..n).map(|i| table[i][perm[i]]).sum();
        if total > best.0 {
            best = (total, perm);
        }
    }
    (0..n).map(|i| table[i][best.1[i]]).collect()
}

/// `E[h | v]` for a one-unit model by trapezoidal quadrature over the slab.
pub fn single_unit_spike_by_quadrature(p: &S3cParams, v: &[f64]) -> f64 {
    assert_eq!(p.units(), 1);
    let beta = p.beta[0];
    let (a, mu, b) = (p.alpha[0], p.mu[0], p.b[0]);
    let wv: f64 = p.w.row(0).iter().zip(v).map(|(w, x)| w * x).sum();
    // log of p(v | s, h=1) / p(v | h=0) = beta s w.v - beta s^2 / 2 (unit-norm w)
    // plus the slab prior, integrated over a wide grid
    let sd = 1.0 / (a + beta).sqrt();
    let center = (a * mu + beta * wv) / (a + beta);
    let lo = center - 40.0 * sd;
    let hi = center + 40.0 * sd;
    let m = 200_000;
    let h = (hi - lo) / m as f64;
    let log_f = |s: f64| {
        0.5 * (a / (2.0 * std::f64::consts::PI)).ln() - 0.5 * a * (s - mu) * (s - mu) + beta * s * wv
            - 0.5 * beta * s * s
    };
    let peak = log_f(center);
    let mut integral = 0.0;
    for k in 0..=m {
        let s = lo + k as f64 * h;
        let wgt = if k == 0 || k == m { 0.5 } else { 1.0 };
        integral += wgt * (log_f(s) - peak).exp();
    }
    let log_on = peak + (integral * h).ln() + texcode::s3c::log_sigmoid(b);
    let log_off = texcode::s3c::log_sigmoid(-b);
    1.0 / (1.0 + (log_off - log_on).exp())
}

/// Posterior spike marginals and `E[h_i s_i]` by enumerating every spike
/// configuration with a dense `D x D` Gaussian per configuration.
pub fn dense_enumeration(p: &S3cParams, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let (n, d) = (p.units(), p.dim());
    let vv = DVector::from_column_slice(v);
    let mut logs = Vec::new();
    let mut slab_means = Vec::new();
    for mask in 0u32..(1 << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut mean = DVector::<f64>::zeros(d);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for k in 0..d {
            cov[(k, k)] = 1.0 / p.beta[k];
        }
        for &i in &active {
            let w = DVector::from_iterator(d, p.w.row(i).iter().copied());
            mean += &w * p.mu[i];
            cov += &w * w.transpose() / p.alpha[i];
        }
        let chol = cov.clone().cholesky().expect("covariance is positive definite");
        let r = &vv - &mean;
        let sol = chol.solve(&r);
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mut lp = -0.5 * (r.dot(&sol) + logdet + d as f64 * (2.0 * std::f64::consts::PI).ln());
        for i in 0..n {
            lp += if mask >> i & 1 == 1 {
                texcode::s3c::log_sigmoid(p.b[i])
            } else {
                texcode::s3c::log_sigmoid(-p.b[i])
            };
        }
        logs.push(lp);
        // E[s_i | v, h] = mu_i + alpha_i^-1 W_i^T C^-1 (v - m)
        let mut sm = vec![0.0; n];
        for &i in &active {
            let w = DVector::from_iterator(d, p.w.row(i).iter().copied());
            sm[i] = p.mu[i] + w.dot(&sol) / p.alpha[i];
        }
        slab_means.push(sm);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    let mut spike = vec![0.0; n];
    let mut hs = vec![0.0; n];
    for (mask, (l, sm)) in logs.iter().zip(&slab_means).enumerate() {
        let wgt = (l - top).exp() / z;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                spike[i] += wgt;
                hs[i] += wgt * sm[i];
            }
        }
    }
    (spike, hs)
}
