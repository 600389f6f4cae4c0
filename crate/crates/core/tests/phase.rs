use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use phasegen_core::phase::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw(rng: &mut ChaCha8Rng, m: usize) -> PhaseParams {
    PhaseParams::new(
        (0..m).map(|_| rng.random_range(0.0..3.0)).collect(),
        (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
        (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

#[test]
fn frequency_sets() {
    let f = make_frequency_set(128, 30).unwrap();
    assert_eq!(f.len(), 128);
    assert_eq!(f.as_slice().iter().min(), Some(&1));
    assert_eq!(f.f_max(), 30);
    assert!(f.as_slice().windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(make_frequency_set(2, 30).unwrap().as_slice(), &[1, 30]);
    assert!(make_frequency_set(1, 30).is_err());
    assert!(make_frequency_set(4, 1).is_err());
    // more phases than frequencies: repeats, still covering both ends
    let f = make_frequency_set(10, 4).unwrap();
    assert_eq!((f.as_slice()[0], f.as_slice()[9]), (1, 4));
}

#[test]
fn closed_form_examples() {
    let one = FrequencySet::from_vec(vec![1]).unwrap();
    let v = eval_periodic(&PhaseParams::new(vec![1.0], vec![0.0], vec![0.0]).unwrap(), &one, 0.0).unwrap();
    assert!((v[0] - 0.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    let v = eval_periodic(&PhaseParams::new(vec![2.0], vec![0.25], vec![0.5]).unwrap(), &one, 0.0).unwrap();
    assert!((v[0] - 2.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);

    let x = PhaseParams::new(vec![1.0], vec![0.0], vec![0.0]).unwrap();
    assert_eq!(eval_linear(&x, 0.0), vec![0.0, 0.0]);
    let v = eval_linear(&x, 1.0);
    assert!(v[0].abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
}

/// Hand evaluation of both formulas, written independently of the library.
fn hand_periodic(a: f64, p: f64, o: f64, f: f64, k: f64) -> [f64; 2] {
    let angle = 2.0 * PI * (f * k + p);
    [a * angle.sin() + o, a * angle.cos() + o]
}

fn hand_linear(a: f64, p: f64, o: f64, k: f64) -> [f64; 2] {
    [k * (a * (2.0 * PI * p).sin() + o), k * (a * (2.0 * PI * p).cos() + o)]
}

#[test]
fn signals_match_hand_evaluation_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let freqs = make_frequency_set(8, 30).unwrap();
    for _ in 0..1000 {
        let x = draw(&mut rng, 8);
        let k: f64 = rng.random_range(-3.0..3.0);
        let per = eval_periodic(&x, &freqs, k).unwrap();
        let lin = eval_linear(&x, k);
        for i in 0..8 {
            let f = f64::from(freqs.as_slice()[i]);
            let h = hand_periodic(x.a[i], x.p[i], x.o[i], f, k);
            let l = hand_linear(x.a[i], x.p[i], x.o[i], k);
            for c in 0..2 {
                assert!((per[2 * i + c] - h[c]).abs() <= 1e-12);
                assert!((lin[2 * i + c] - l[c]).abs() <= 1e-12);
            }
        }
        let n = rng.random_range(-4i32..=4);
        let shifted = eval_periodic(&x, &freqs, k + f64::from(n)).unwrap();
        for (a, b) in per.iter().zip(&shifted) {
            assert!((a - b).abs() <= 1e-12);
        }
        let half = eval_linear(&x, 0.5);
        for (h, w) in half.iter().zip(eval_linear(&x, 1.0)) {
            assert!((h - 0.5 * w).abs() <= 1e-12);
        }
    }
}

#[test]
fn assembled_signal_bookkeeping() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let freqs = make_frequency_set(5, 9).unwrap();
    let x = draw(&mut rng, 5);
    let (t_s, t_e, t_total) = (7, 31, 40);
    let sig = assemble_signal(&x, &freqs, t_s, t_e, t_total).unwrap();
    assert_eq!(sig.len(), t_total);
    assert_eq!(sig.channels(), 10);
    assert_eq!(sig.plan.run_lengths(), (t_s - 1, t_e - t_s + 1, t_total - t_e));
    assert!(sig.plan.is_ordered());
    // k = 0 and k = 1 ends of the periodic section coincide
    let (r0, r1) = (t_s - 1, t_e - 1);
    for c in 0..10 {
        assert!((sig.samples[[r0, c]] - sig.samples[[r1, c]]).abs() <= 1e-12);
    }
    // the sin channel of the ramp-in reaches the periodic value at k = 1
    let ramp_end = eval_linear(&x, 1.0);
    let per_start = eval_periodic(&x, &freqs, 0.0).unwrap();
    for i in 0..5 {
        assert!((ramp_end[2 * i] - per_start[2 * i]).abs() <= 1e-12);
    }
    // ramp frames follow the linear formula
    for t in 1..t_s {
        let k = (t - 1) as f64 / (t_s - 1) as f64;
        let v = eval_linear(&x, k);
        for c in 0..10 {
            assert!((sig.samples[[t - 1, c]] - v[c]).abs() <= 1e-12);
        }
    }
    for t in t_e + 1..=t_total {
        let k = (t_total - t) as f64 / (t_total - t_e) as f64;
        let v = eval_linear(&x, k);
        for c in 0..10 {
            assert!((sig.samples[[t - 1, c]] - v[c]).abs() <= 1e-12);
        }
    }

    let pure = assemble_signal(&x, &freqs, 1, 20, 20).unwrap();
    assert_eq!(pure.plan.run_lengths(), (0, 20, 0));
    assert!(assemble_signal(&x, &freqs, 5, 5, 20).is_err());
}

#[test]
fn fit_recovers_a_single_phase() {
    let freqs = FrequencySet::from_vec(vec![3]).unwrap();
    let truth = PhaseParams::new(vec![1.5], vec![0.3], vec![-0.2]).unwrap();
    let ks: Vec<f64> = (0..64).map(|t| t as f64 / 64.0).collect();
    let mut s = Array2::zeros((64, 2));
    for (t, &k) in ks.iter().enumerate() {
        let v = eval_periodic(&truth, &freqs, k).unwrap();
        s[[t, 0]] = v[0];
        s[[t, 1]] = v[1];
    }
    let fit = fit_params_oracle(s.view(), &ks, &freqs).unwrap();
    assert!((fit.a[0] - 1.5).abs() < 1e-9);
    assert!((fit.p[0] - 0.3).abs() < 1e-9);
    assert!((fit.o[0] + 0.2).abs() < 1e-9);

    let zero = fit_params_oracle(Array2::zeros((64, 2)).view(), &ks, &freqs).unwrap();
    assert_eq!((zero.a[0], zero.p[0], zero.o[0]), (0.0, 0.0, 0.0));
}

fn signal_at(x: &PhaseParams, freqs: &FrequencySet, ks: &[f64]) -> Array2<f64> {
    let mut s = Array2::zeros((ks.len(), 2 * x.len()));
    for (t, &k) in ks.iter().enumerate() {
        for (c, v) in eval_periodic(x, freqs, k).unwrap().into_iter().enumerate() {
            s[[t, c]] = v;
        }
    }
    s
}

/// Shortest distance between two shifts on the unit circle.
fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

#[test]
fn fit_round_trips_generated_signals() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let freqs = make_frequency_set(6, 12).unwrap();
    for _ in 0..500 {
        let mut x = draw(&mut rng, 6);
        // keep amplitudes away from zero, where the shift is undefined
        x.a.iter_mut().for_each(|a| *a += 0.05);
        let t_len = rng.random_range(20..80);
        let ks: Vec<f64> = (0..t_len).map(|t| t as f64 / t_len as f64).collect();
        let fit = fit_params(signal_at(&x, &freqs, &ks).view(), &ks, &freqs, Representation::SinCos).unwrap();
        assert!(fit.params.is_canonical());
        assert!(fit.residual <= 1e-9);
        for i in 0..6 {
            assert!((fit.params.a[i] - x.a[i]).abs() < 1e-9);
            assert!(circ(fit.params.p[i], x.p[i]) < 1e-9);
            assert!((fit.params.o[i] - x.o[i]).abs() < 1e-9);
        }
    }
}

/// Independent solver: per phase, normal equations `(XᵀX) c = Xᵀy` solved
/// by Cholesky, residual summed over phases.
fn normal_equations_residual(signal: &Array2<f64>, ks: &[f64], freqs: &FrequencySet) -> f64 {
    let mut total = 0.0;
    for (i, &f) in freqs.as_slice().iter().enumerate() {
        let n = 2 * ks.len();
        let mut x = DMatrix::zeros(n, 3);
        let mut y = DVector::zeros(n);
        for (t, &k) in ks.iter().enumerate() {
            let th = 2.0 * PI * f64::from(f) * k;
            x[(2 * t, 0)] = th.sin();
            x[(2 * t, 1)] = th.cos();
            x[(2 * t, 2)] = 1.0;
            y[2 * t] = signal[[t, 2 * i]];
            x[(2 * t + 1, 0)] = th.cos();
            x[(2 * t + 1, 1)] = -th.sin();
            x[(2 * t + 1, 2)] = 1.0;
            y[2 * t + 1] = signal[[t, 2 * i + 1]];
        }
        let xtx = x.transpose() * &x;
        let c = xtx.cholesky().expect("full rank").solve(&(x.transpose() * &y));
        total += (&x * c - y).norm_squared();
    }
    total
}

#[test]
fn noisy_fit_residual_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let freqs = make_frequency_set(4, 7).unwrap();
    for _ in 0..50 {
        let x = draw(&mut rng, 4);
        let ks: Vec<f64> = (0..40).map(|t| t as f64 / 40.0).collect();
        let mut s = signal_at(&x, &freqs, &ks);
        s.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
        let fit = fit_params(s.view(), &ks, &freqs, Representation::SinCos).unwrap();
        let oracle = normal_equations_residual(&s, &ks, &freqs);
        assert!((fit.residual - oracle).abs() <= 1e-9, "{} vs {}", fit.residual, oracle);
    }
}

proptest! {
    #[test]
    fn canonical_form_keeps_the_signal(
        a in -3.0f64..3.0,
        p in -2.0f64..2.0,
        o in -1.0f64..1.0,
        f in 1u32..30,
        k in -2.0f64..2.0,
    ) {
        let freqs = FrequencySet::from_vec(vec![f]).unwrap();
        let raw = PhaseParams { a: vec![a], p: vec![p], o: vec![o] };
        let c = raw.canonical();
        prop_assert!(c.is_canonical());
        let (u, v) = (eval_periodic(&raw, &freqs, k).unwrap(), eval_periodic(&c, &freqs, k).unwrap());
        for (x, y) in u.iter().zip(&v) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert_eq!(c.canonical(), c);
    }

    #[test]
    fn flat_vector_round_trip(v in proptest::collection::vec(-5.0f64..5.0, 0..10)) {
        let n = v.len() / 3 * 3;
        let x = PhaseParams::from_vec(&v[..n]).unwrap();
        prop_assert_eq!(x.to_vec(), v[..n].to_vec());
    }
}
