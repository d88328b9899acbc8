use cate_rates::basis::LocalizedFrame;
use cate_rates::construction::Parametrization;
use cate_rates::data::Dataset;
use cate_rates::estimator::*;
use cate_rates::nuisance::{NuisanceFit, UniformDensity};
use cate_rates::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn uniform(d: usize) -> Arc<UniformDensity> {
    Arc::new(UniformDensity { d })
}

fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::with_capacity(d, n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let a = rng.random_bool(0.5) as u8;
        let y = rng.random::<f64>() * 2.0 - 0.5;
        ds.push(&x, a, y);
    }
    ds
}

fn wiggly(param: Parametrization, d: usize) -> NuisanceFit {
    NuisanceFit::known(
        |x: &[f64]| 0.5 + 0.3 * (5.0 * x[0]).sin(),
        |x: &[f64]| x.iter().sum::<f64>() * 0.7 - 0.2,
        param,
        uniform(d),
    )
}

fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn check_blocked_vs_naive(
    n: usize,
    d: usize,
    basis: SecondBasis,
    gamma: f64,
    param: Parametrization,
    slot: QSlot,
    seed: u64,
) {
    let ds = random_data(n, d, seed);
    let nuis = wiggly(param, d);
    let mut cfg = EstimatorConfig::new(param, vec![0.45; d], 0.7, gamma, basis);
    cfg.q_slot = slot;
    let asm = assemble(&ds, &nuis, &cfg).unwrap();
    let b = cfg.second_basis.build(d).unwrap();
    let inv = asm.omega.dense_inverse();
    let (q2, r2) = assemble_second_order_naive(&ds, &nuis, &cfg, b.as_ref(), &inv).unwrap();
    let scale = 1.0 + q2.abs().max() + r2.abs().max();
    assert!(max_abs_diff(&asm.q2, &q2) < 1e-10 * scale, "{} vs {}", asm.q2, q2);
    assert!((&asm.r2 - &r2).abs().max() < 1e-10 * scale);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn blocked_engine_matches_double_loop(
        n in 2usize..40,
        d in 1usize..3,
        cubes in any::<bool>(),
        size in 1usize..4,
        gamma in prop::sample::select(vec![0.5, 1.5, 2.5]),
        eta in any::<bool>(),
        anchor in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let basis = if cubes {
            SecondBasis::Cubes { per_axis: size + 1, degree: (size - 1) % 2 }
        } else {
            SecondBasis::Legendre { degree: size }
        };
        let k = cfg_k(&basis, d);
        prop_assume!(k <= 16);
        let param = if eta { Parametrization::Eta } else { Parametrization::Mu0 };
        let slot = if anchor { QSlot::Anchor } else { QSlot::Partner };
        check_blocked_vs_naive(n, d, basis, gamma, param, slot, seed);
    }
}

fn cfg_k(b: &SecondBasis, d: usize) -> usize {
    b.build(d).unwrap().dim()
}

#[test]
fn two_point_kernel_by_hand() {
    // both points in the window, degree-0 rho and a two-cube b
    let mut ds = Dataset::with_capacity(1, 2);
    ds.push(&[0.4], 1, 2.0);
    ds.push(&[0.45], 0, -1.0);
    let nuis = NuisanceFit::known(|_: &[f64]| 0.25, |_: &[f64]| 0.5, Parametrization::Mu0, uniform(1));
    let mut cfg = EstimatorConfig::new(
        Parametrization::Mu0,
        vec![0.5],
        0.4,
        0.5,
        SecondBasis::Cubes { per_axis: 2, degree: 0 },
    );
    let asm = assemble(&ds, &nuis, &cfg).unwrap();
    // v = 0.25 and 0.375 share the first cube; b = sqrt(2), Omega = I, so b^T b = 2
    let k = 1.0 / 0.4;
    let kern = 2.0 * k * k;
    // ordered pairs (1,2) and (2,1), normalized by n(n-1) = 2
    let r2 = -((1.0 - 0.25) * kern * (-1.0 - 0.5) + (0.0 - 0.25) * kern * (2.0 - 0.5)) / 2.0;
    let q2 = -((1.0 - 0.25) * kern * 0.0 + (0.0 - 0.25) * kern * 1.0) / 2.0;
    assert!((asm.r2[0] - r2).abs() < 1e-12, "{} {}", asm.r2[0], r2);
    assert!((asm.q2[(0, 0)] - q2).abs() < 1e-12);

    // points in different cubes do not interact
    cfg.x0 = vec![0.42];
    let asm = assemble(&ds, &nuis, &cfg).unwrap();
    assert!(asm.r2[0].abs() < 1e-12);
}

#[test]
fn three_point_first_order_by_hand() {
    let mut ds = Dataset::with_capacity(1, 3);
    ds.push(&[0.3], 1, 1.5);
    ds.push(&[0.55], 0, 0.2);
    ds.push(&[0.9], 1, 3.0);
    let nuis = NuisanceFit::known(|x: &[f64]| 0.2 + x[0], |x: &[f64]| x[0], Parametrization::Mu0, uniform(1));
    let cfg = EstimatorConfig::new(
        Parametrization::Mu0,
        vec![0.45],
        0.5,
        1.5,
        SecondBasis::Legendre { degree: 0 },
    );
    let t = prepare_window(&ds, &nuis, &cfg).unwrap();
    let (q1, r1) = assemble_first_order(&t);
    let k = 2.0;
    let s3 = 3f64.sqrt();
    // windows [0.2, 0.7]: v = 0.2 and 0.7; rho = (1, sqrt3 (2v - 1))
    let pts = [(0.2, 1.0, 1.5, 0.3), (0.7, 0.0, 0.2, 0.55)];
    let mut qe = [[0.0; 2]; 2];
    let mut re = [0.0; 2];
    for (v, a, y, x) in pts {
        let rho = [1.0, s3 * (2.0 * v - 1.0)];
        let pi = 0.2 + x;
        for i in 0..2 {
            re[i] += k * (y - x) * (a - pi) * rho[i] / 3.0;
            for j in 0..2 {
                qe[i][j] += k * a * (a - pi) * rho[i] * rho[j] / 3.0;
            }
        }
    }
    for i in 0..2 {
        assert!((r1[i] - re[i]).abs() < 1e-12);
        for j in 0..2 {
            assert!((q1[(i, j)] - qe[i][j]).abs() < 1e-12);
        }
    }
}

fn noiseless(n: usize, d: usize, tau: impl Fn(&[f64]) -> f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::with_capacity(d, n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let a = rng.random_bool(0.5) as u8;
        let y = a as f64 * tau(&x);
        ds.push(&x, a, y);
    }
    ds
}

#[test]
fn constant_effect_is_recovered_exactly() {
    let c = 1.7;
    let ds = noiseless(400, 1, |_| c, 3);
    for (param, out) in [(Parametrization::Mu0, 0.0), (Parametrization::Eta, c / 2.0)] {
        let nuis = NuisanceFit::known(|_: &[f64]| 0.5, move |_: &[f64]| out, param, uniform(1));
        let cfg = EstimatorConfig::new(param, vec![0.5], 0.3, 1.5, SecondBasis::Cubes { per_axis: 8, degree: 0 });
        let fit = estimate_with_nuisance(&ds, &nuis, &cfg).unwrap();
        assert!((fit.tau_hat - c).abs() < 1e-9, "{param:?} {}", fit.tau_hat);
        let s = fit.moment(&[c, 0.0]);
        assert!(s.iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn linear_effect_with_known_nuisances_is_exact() {
    let tau = |x: &[f64]| 0.3 + 2.0 * x[0] - x[1];
    let ds = noiseless(3000, 2, tau, 11);
    let pi = |x: &[f64]| 0.3 + 0.4 * x[0];
    let nuis = NuisanceFit::known(pi, |_: &[f64]| 0.0, Parametrization::Mu0, uniform(2));
    let cfg = EstimatorConfig::new(
        Parametrization::Mu0,
        vec![0.4, 0.6],
        0.3,
        1.5,
        SecondBasis::Cubes { per_axis: 3, degree: 1 },
    );
    let fit = estimate_with_nuisance(&ds, &nuis, &cfg).unwrap();
    assert!((fit.tau_hat - tau(&[0.4, 0.6])).abs() < 1e-9, "{}", fit.tau_hat);
    assert!((fit.recompute_tau().unwrap() - fit.tau_hat).abs() < 1e-12);
}

#[test]
fn empty_window_gives_zero_terms_and_error() {
    let mut ds = Dataset::with_capacity(1, 3);
    for x in [0.05, 0.1, 0.95] {
        ds.push(&[x], 1, 1.0);
    }
    let nuis = wiggly(Parametrization::Mu0, 1);
    let cfg = EstimatorConfig::new(Parametrization::Mu0, vec![0.5], 0.2, 1.5, SecondBasis::Legendre { degree: 2 });
    let asm = assemble(&ds, &nuis, &cfg).unwrap();
    assert_eq!(asm.q1.abs().max(), 0.0);
    assert_eq!(asm.r2.abs().max(), 0.0);
    assert!(matches!(estimate_with_nuisance(&ds, &nuis, &cfg), Err(Error::Degenerate(_))));
}

#[test]
fn too_few_window_points_is_singular() {
    let mut ds = Dataset::with_capacity(1, 4);
    for x in [0.5, 0.05, 0.1, 0.95] {
        ds.push(&[x], 1, 1.0);
    }
    let nuis = wiggly(Parametrization::Mu0, 1);
    let cfg = EstimatorConfig::new(Parametrization::Mu0, vec![0.5], 0.2, 1.5, SecondBasis::Legendre { degree: 2 });
    let err = estimate_with_nuisance(&ds, &nuis, &cfg).unwrap_err();
    assert!(matches!(err, Error::Singular { what: "Q", .. }), "{err}");
    assert!(err.is_numerical());
}

#[test]
fn omega_under_uniform_is_identity() {
    let frame = LocalizedFrame::new(vec![0.5, 0.5], 0.3).unwrap();
    for sb in [SecondBasis::Legendre { degree: 3 }, SecondBasis::Cubes { per_axis: 4, degree: 1 }] {
        let b = sb.build(2).unwrap();
        let om = omega_hat(b.as_ref(), &UniformDensity { d: 2 }, &frame, 4, 1e-8).unwrap();
        let eye = nalgebra::DMatrix::<f64>::identity(b.dim(), b.dim());
        assert!(max_abs_diff(&om.dense(), &eye) < 1e-12);
        assert!((om.diagnostics.lambda_min - 1.0).abs() < 1e-12);
    }
}

#[test]
fn omega_rejects_empty_cubes() {
    // window sticks out of the unit cube, so some cubes carry no mass
    let frame = LocalizedFrame::new(vec![0.05], 0.5).unwrap();
    let b = SecondBasis::Cubes { per_axis: 8, degree: 0 }.build(1).unwrap();
    let err = omega_hat(b.as_ref(), &UniformDensity { d: 1 }, &frame, 4, 1e-8).unwrap_err();
    assert!(matches!(err, Error::Singular { what: "omega", .. }));
}

#[test]
fn projection_reproduces_polynomials() {
    let frame = LocalizedFrame::new(vec![0.4], 0.3).unwrap();
    let pi = |x: &[f64]| 0.3 + 0.5 * x[0];
    let p = projection_oracle(&pi, &|_: &[f64]| 2.5, &UniformDensity { d: 1 }, &frame, 1.0, 8, 4).unwrap();
    assert!((p.tau_h - 2.5).abs() < 1e-12);
    let tau = |x: &[f64]| 1.0 + 2.0 * x[0] - x[0] * x[0];
    let p = projection_oracle(&pi, &tau, &UniformDensity { d: 1 }, &frame, 2.5, 8, 4).unwrap();
    assert!((p.tau_h - tau(&[0.4])).abs() < 1e-12);
    assert!(p.s.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn projection_bias_order() {
    let gamma = 1.5;
    let tau = |x: &[f64]| (x[0] - 0.5).abs().powf(1.5);
    let pi = |x: &[f64]| 0.4 + 0.2 * x[0];
    let bias = |h: f64| {
        let frame = LocalizedFrame::new(vec![0.5], h).unwrap();
        projection_oracle(&pi, &tau, &UniformDensity { d: 1 }, &frame, gamma, 16, 8).unwrap().tau_h
    };
    let ratio = (bias(0.2) / bias(0.1)).log2();
    assert!((ratio - gamma).abs() < 0.2, "{ratio}");
}

#[test]
fn tuning_examples() {
    let t = tuning_rule(4096.0, 0.1, 0.1, 1.0, 1, Parametrization::Mu0, 1.0, 1.0);
    assert!((t.h - 0.125).abs() < 1e-12);
    assert_eq!(t.k, 4096);
    let t = tuning_rule(4096.0, 2.0, 2.0, 1.0, 1, Parametrization::Mu0, 1.0, 1.0);
    assert!((t.h - 0.0625).abs() < 1e-12);
    assert_eq!(t.k, 256);
}

#[test]
fn tuning_balances_error_terms() {
    // smoothing bias, projection bias and variance share one order in n
    let (s, g) = (0.1, 1.0);
    let order = |n: f64| {
        let t = tuning_rule(n, s, s, g, 1, Parametrization::Mu0, 1.0, 1.0);
        let nh = n * t.h;
        [
            t.h.powf(g),
            (t.h / t.k_real).powf(2.0 * s),
            (1.0 / nh).sqrt() * (1.0 + t.k_real / nh).sqrt(),
        ]
    };
    let (a, b) = (order(1e4), order(1e8));
    let slopes: Vec<f64> = (0..3).map(|i| (b[i] / a[i]).log10() / 4.0).collect();
    assert!((slopes[0] - slopes[1]).abs() < 1e-9 && (slopes[1] - slopes[2]).abs() < 0.02, "{slopes:?}");
}

#[test]
fn fit_result_round_trips_and_is_worker_independent() {
    let ds = random_data(3000, 1, 5);
    let nuis = wiggly(Parametrization::Eta, 1);
    let cfg = EstimatorConfig::new(
        Parametrization::Eta,
        vec![0.5],
        0.5,
        1.5,
        SecondBasis::Cubes { per_axis: 16, degree: 0 },
    );
    let one = cate_rates::par::with_workers(1, || estimate_with_nuisance(&ds, &nuis, &cfg).unwrap());
    let four = cate_rates::par::with_workers(4, || estimate_with_nuisance(&ds, &nuis, &cfg).unwrap());
    assert_eq!(one, four);
    let back: FitResult = serde_json::from_str(&serde_json::to_string(&one).unwrap()).unwrap();
    assert_eq!(back, one);
}
