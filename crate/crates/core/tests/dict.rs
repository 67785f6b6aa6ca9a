mod common;

use common::matched_cosines;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use texcode::dict::autoencoder::AeParams;
use texcode::dict::sparse::{sc_encode, sc_learn, Dictionary, LassoOptions};
use texcode::rng::seeded;

fn unit_rows(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut w: Array2<f64> = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
    for mut row in w.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    w
}

/// Random orthogonal `d x d` matrix from the QR factor of a Gaussian matrix.
fn orthonormal(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let g = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

#[test]
fn lasso_meets_optimality_conditions() {
    let mut rng = seeded(21);
    let opts = LassoOptions::default();
    for _ in 0..1000 {
        let n = rng.random_range(1..24);
        let d = rng.random_range(2..20);
        let w = unit_rows(n, d, &mut rng);
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let beta = rng.random_range(0.01..2.0);
        let s = sc_encode(&Dictionary::new(w.clone()), &v, beta, &opts).unwrap();
        let r: Vec<f64> = (0..d).map(|k| (0..n).map(|j| w[[j, k]] * s[j]).sum::<f64>() - v[k]).collect();
        for j in 0..n {
            let g = 2.0 * (0..d).map(|k| w[[j, k]] * r[k]).sum::<f64>();
            if s[j] != 0.0 {
                assert!((g + beta * s[j].signum()).abs() < 1e-8);
            } else {
                assert!(g.abs() <= beta + 1e-8);
            }
        }
    }
}

#[test]
fn orthonormal_dictionaries_soft_threshold() {
    let mut rng = seeded(22);
    for _ in 0..200 {
        let d = rng.random_range(1..16);
        let w = orthonormal(d, &mut rng);
        let v: Vec<f64> = (0..d).map(|_| 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let beta = rng.random_range(0.05..3.0);
        let s = sc_encode(&Dictionary::new(w.clone()), &v, beta, &LassoOptions::default()).unwrap();
        for j in 0..d {
            let c: f64 = (0..d).map(|k| w[[j, k]] * v[k]).sum();
            assert!((s[j] - soft(c, beta / 2.0)).abs() < 1e-10);
        }
    }
    let s = sc_encode(&Dictionary::new(Array2::eye(2)), &[2.0, 0.1], 1.0, &LassoOptions::default()).unwrap();
    assert!((s[0] - 1.5).abs() < 1e-12 && s[1] == 0.0);
}

fn planted_sparse_data(planted: &Array2<f64>, count: usize, active: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let (n, d) = planted.dim();
    (0..count)
        .map(|_| {
            let mut v = vec![0.0; d];
            for j in 0..n {
                if rng.random::<f64>() < active {
                    let a: f64 = rng.random_range(1.0..3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    for k in 0..d {
                        v[k] += a * planted[[j, k]];
                    }
                }
            }
            v
        })
        .collect()
}

#[test]
fn sparse_coding_recovers_a_planted_orthonormal_dictionary() {
    let mut rng = seeded(23);
    let (d, n) = (16, 8);
    let basis = orthonormal(d, &mut rng);
    let planted = basis.slice(ndarray::s![..n, ..]).to_owned();
    let data = planted_sparse_data(&planted, 2000, 0.2, &mut rng);
    for seed in 0..4 {
        let fit = sc_learn(&data, n, 0.5, 50, seed).unwrap();
        let cos = matched_cosines(&planted, fit.dict.atoms());
        let worst = cos.iter().copied().fold(1.0, f64::min);
        assert!(worst >= 0.99, "seed {seed}: {cos:?}");
        for pair in fit.objective.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-8);
        }
    }
}

fn flatten(p: &AeParams) -> Vec<f64> {
    p.w.iter().chain(&p.b).chain(p.w_dec.iter()).chain(&p.b_dec).copied().collect()
}

fn unflatten(p: &mut AeParams, x: &[f64]) {
    let mut it = x.iter().copied();
    p.w.iter_mut().chain(p.b.iter_mut()).chain(p.w_dec.iter_mut()).chain(p.b_dec.iter_mut()).for_each(|y| *y = it.next().unwrap());
}

#[test]
fn autoencoder_gradient_matches_central_differences() {
    let mut rng = seeded(24);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for net in 0..20 {
        let d = rng.random_range(2..8);
        let n = rng.random_range(1..6);
        let mut p = AeParams::init(d, n, net);
        p.b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        p.b_dec.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, grad) = p.loss_and_grad(&v);
        let analytic: Vec<f64> =
            grad.w.iter().chain(&grad.b).chain(grad.w_dec.iter()).chain(&grad.b_dec).copied().collect();
        let x = flatten(&p);
        for k in 0..x.len() {
            let mut q = p.clone();
            let mut y = x.clone();
            y[k] = x[k] + h;
            unflatten(&mut q, &y);
            let up = q.loss(&v);
            y[k] = x[k] - h;
            unflatten(&mut q, &y);
            let down = q.loss(&v);
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[k] - numeric).abs() / scale);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}
