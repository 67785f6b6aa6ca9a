mod common;

use common::*;
use rand::Rng;
use texcode::rng::seeded;
use texcode::s3c::*;

#[test]
fn enumeration_matches_dense_gaussians() {
    let mut rng = seeded(7);
    for _ in 0..20 {
        let p = random_model(6, 4, &mut rng);
        let (_, _, v) = p.sample(&mut rng);
        let exact = exact_posterior(&p, &v).unwrap();
        let (spike, hs) = dense_enumeration(&p, &v);
        let total: f64 = exact.configs.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert!((exact.spike[i] - spike[i]).abs() < 1e-9);
            assert!((exact.spike_slab[i] - hs[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn single_unit_enumeration_matches_quadrature() {
    let mut rng = seeded(3);
    for c in [-3.0, -0.5, 0.0, 0.4, 1.0, 2.5] {
        let mut p = random_model(16, 1, &mut rng);
        p.beta.fill(rng.random_range(0.5..4.0));
        let v: Vec<f64> = p.w.row(0).iter().map(|w| c * w).collect();
        let exact = exact_posterior(&p, &v).unwrap().spike[0];
        let quad = single_unit_spike_by_quadrature(&p, &v);
        assert!((exact - quad).abs() < 1e-6, "c = {c}: {exact} vs {quad}");
    }
}

#[test]
fn mean_field_is_close_to_exact_at_low_coherence() {
    let mut rng = seeded(1);
    let opts = EStepOptions {
        max_sweeps: 500,
        tol: 1e-10,
        trace: false,
    };
    let (mut worst_h, mut worst_hs): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let p = random_model(64, 8, &mut rng);
        let (_, _, v) = p.sample(&mut rng);
        let exact = exact_posterior(&p, &v).unwrap();
        let st = e_step(&p, &v, &opts).unwrap().state;
        for i in 0..8 {
            worst_h = worst_h.max((st.hhat[i] - exact.spike[i]).abs());
            worst_hs = worst_hs.max((st.hhat[i] * st.shat[i] - exact.spike_slab[i]).abs());
        }
    }
    assert!(worst_h < 5e-2, "spike error {worst_h}");
    assert!(worst_hs < 5e-2, "spike-slab error {worst_hs}");
}

#[test]
fn zero_input_descends_from_the_prior_state() {
    let mut p = S3cParams::init(12, 4, 2).unwrap();
    p.b.fill(-4.0);
    p.mu.fill(1.0);
    let v = vec![0.0; 12];
    let init = VariationalState {
        hhat: vec![sigmoid(-4.0); 4],
        shat: vec![1.0; 4],
        tau: (0..4).map(|i| 1.0 / (p.alpha[i] + p.beta[0])).collect(),
    };
    let st = e_step(&p, &v, &EStepOptions::default()).unwrap().state;
    assert!(free_energy(&p, &v, &st) <= free_energy(&p, &v, &init) + 1e-12);
}

#[test]
fn fuzzed_sweeps_never_raise_free_energy() {
    let mut rng = seeded(11);
    let mut sweeps = 0;
    while sweeps < 10_000 {
        let n = rng.random_range(1..10);
        let d = rng.random_range(n..40);
        let mut p = S3cParams::init(d, n, rng.random()).unwrap();
        p.b.mapv_inplace(|_| rng.random_range(-5.0..2.0));
        p.mu.mapv_inplace(|_| rng.random_range(-3.0..3.0));
        p.alpha.mapv_inplace(|_| rng.random_range(0.2..5.0));
        if rng.random::<bool>() {
            p.beta_mode = BetaMode::Diagonal;
            p.beta.mapv_inplace(|_| rng.random_range(0.5..20.0));
        } else {
            p.beta.fill(rng.random_range(0.5..20.0));
        }
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let opts = EStepOptions {
            max_sweeps: 40,
            tol: 0.0,
            trace: true,
        };
        let fe = e_step(&p, &v, &opts).unwrap().free_energy;
        for w in fe.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        sweeps += fe.len() - 1;
    }
}

fn planted(seed: u64) -> S3cParams {
    let mut rng = seeded(100 + seed);
    let mut truth = S3cParams::init(64, 8, 0).unwrap();
    truth.w = near_orthogonal(64, 8, 0.2, &mut rng);
    truth.b.fill(-1.5);
    truth.mu.fill(2.0);
    truth.alpha.fill(4.0);
    truth.beta.fill(10.0);
    truth
}

#[test]
fn one_em_pass_from_the_truth_barely_moves() {
    let truth = planted(0);
    let mut rng = seeded(5);
    let data: Vec<Vec<f64>> = (0..10_000).map(|_| truth.sample(&mut rng).2).collect();
    let opts = EStepOptions {
        max_sweeps: 200,
        tol: 1e-8,
        trace: false,
    };
    let states: Vec<VariationalState> = data.iter().map(|v| e_step(&truth, v, &opts).unwrap().state).collect();
    let batch: Vec<(&[f64], &VariationalState)> = data.iter().map(|v| v.as_slice()).zip(&states).collect();
    let next = m_step(&truth, &batch).unwrap();
    let drift = |a: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
    };
    let w_drift = truth.w.iter().zip(next.w.iter()).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    assert!(w_drift < 0.1, "W drift {w_drift}");
    assert!(drift(&truth.b, &next.b) < 0.1);
    assert!(drift(&truth.mu, &next.mu) < 0.1);
    // precisions are compared on the log scale so the bound is unit-free
    let log = |a: &ndarray::Array1<f64>| a.mapv(f64::ln);
    assert!(drift(&log(&truth.alpha), &log(&next.alpha)) < 0.1);
    assert!(drift(&log(&truth.beta), &log(&next.beta)) < 0.1);
    for row in next.w.rows() {
        assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn planted_dictionaries_are_recovered() {
    let mut passed = 0;
    for seed in 0..5u64 {
        let truth = planted(seed);
        let mut rng = seeded(200 + seed);
        let data: Vec<Vec<f64>> = (0..10_000).map(|_| truth.sample(&mut rng).2).collect();
        let fit = s3c_learn(&data, 8, 60, seed, &S3cLearnOptions::default()).unwrap();
        let worst = matched_cosines(&truth.w, &fit.params.w).into_iter().fold(1.0f64, f64::min);
        passed += (worst >= 0.95) as usize;
        for pair in fit.free_energy.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-3 * pair[0].abs(), "{} -> {}", pair[0], pair[1]);
        }
    }
    assert!(passed >= 4, "{passed} of 5 seeds recovered the dictionary");
}

#[test]
fn strongest_unit_names_the_generating_atom() {
    let truth = planted(1);
    let mut rng = seeded(9);
    let mut agree = 0;
    for _ in 0..200 {
        let i = rng.random_range(0..8);
        let amp: f64 = rng.random_range(1.0..3.0);
        let noise = rand_distr::Normal::new(0.0, 1.0 / truth.beta[0].sqrt()).unwrap();
        let v: Vec<f64> = truth
            .w
            .row(i)
            .iter()
            .map(|w| amp * w + rand_distr::Distribution::sample(&noise, &mut rng))
            .collect();
        let code = s3c_encode(&truth, &v, S3cCode::Spikes, &EStepOptions::default()).unwrap();
        assert!(code.iter().all(|c| (0.0..=1.0).contains(c)));
        let top = (0..8).max_by(|&a, &b| code[a].total_cmp(&code[b])).unwrap();
        agree += (top == i) as usize;
    }
    assert!(agree >= 190, "{agree} of 200");
}
