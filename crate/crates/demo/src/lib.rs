//! Three calls for the static page in `www/`: simulate-and-estimate, a
//! lower-bound summary, and the rate exponent as a function of smoothness.
//! Each returns JSON so the page only needs `JSON.parse`.

use cate_rates::construction::{couple_for_regime, LowerBoundConfig, Parametrization, Regime};
use cate_rates::estimator::{estimate_cate, EstimatorConfig, SecondBasis};
use cate_rates::harness::{child_seed, SmoothDgp};
use cate_rates::hellinger::{c_star, delta_bounds, minimax_exponent, mixture_hellinger_bound};
use cate_rates::nuisance::{CovariateSpec, NuisanceSpec, DEFAULT_CLIP};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn param(eta: bool) -> Parametrization {
    if eta {
        Parametrization::Eta
    } else {
        Parametrization::Mu0
    }
}

#[derive(Serialize)]
struct EstimateOut {
    tau_true: f64,
    tau_hat: f64,
    tau_hat_first_order: Option<f64>,
    window_count: usize,
    k: usize,
}

/// Simulates `n` draws with nuisance smoothness `s` and a kinked CATE of
/// smoothness `gamma`, then fits at `x0 = 1/2`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_and_estimate(n: usize, s: f64, gamma: f64, h: f64, cubes: usize, eta: bool, seed: u64) -> Result<String, String> {
    if !(100..=200_000).contains(&n) {
        return Err("n must be between 100 and 200000".into());
    }
    let mut dgp = SmoothDgp::new(1, s, s, gamma, vec![0.5]);
    dgp.salt = seed;
    dgp.validate().map_err(|e| e.to_string())?;
    let data = dgp.sample(n, child_seed(seed, &[0]));
    let cfg = EstimatorConfig::new(
        param(eta),
        vec![0.5],
        h,
        gamma,
        SecondBasis::Cubes { per_axis: cubes.max(1), degree: 0 },
    );
    let spec = NuisanceSpec {
        pi_smoothness: s,
        outcome_smoothness: s,
        pi_degree: None,
        pi_bandwidth: None,
        outcome_degree: None,
        outcome_bandwidth: None,
        covariate: CovariateSpec::Uniform,
        clip: DEFAULT_CLIP,
    };
    let fit = estimate_cate(&data, &spec, &cfg, 0.5, child_seed(seed, &[1])).map_err(|e| e.to_string())?;
    let out = EstimateOut {
        tau_true: dgp.tau_x0(),
        tau_hat: fit.tau_hat,
        tau_hat_first_order: fit.tau_hat_first_order,
        window_count: fit.window_count,
        k: fit.omega.k,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct LowerBoundOut {
    h: f64,
    k: f64,
    delta1: f64,
    delta2: f64,
    delta3: f64,
    hellinger: f64,
    separation: f64,
    exponent: f64,
}

/// Coupled `(h, k)`, distances and Hellinger bound for the `mu0` regime
/// matching `alpha` and `beta`, in `d = 1`.
pub fn lower_bound(n: f64, alpha: f64, beta: f64, gamma: f64) -> Result<String, String> {
    let regime = if alpha >= beta {
        Regime::Mu0AlphaGeBeta
    } else {
        Regime::Mu0BetaGeAlpha
    };
    let cs = c_star(1, gamma, 1.0, 0.05);
    let c = couple_for_regime(regime, n, alpha, beta, gamma, 1, cs).map_err(|e| e.to_string())?;
    if c.k > 1e9 {
        return Err("coupled k is too large to evaluate here".into());
    }
    let cfg = LowerBoundConfig {
        regime,
        alpha,
        beta,
        gamma,
        d: 1,
        h: c.h,
        k: c.k as usize,
        x0: vec![0.5],
        eps: 0.05,
    };
    let dl = delta_bounds(&cfg).map_err(|e| e.to_string())?;
    let hb = mixture_hellinger_bound(n, &cfg, 1.0, 1.0).map_err(|e| e.to_string())?;
    let out = LowerBoundOut {
        h: c.h,
        k: c.k,
        delta1: dl.delta1_bound,
        delta2: dl.delta2_bound,
        delta3: dl.delta3,
        hellinger: hb.value,
        separation: c.separation,
        exponent: minimax_exponent(alpha, beta, gamma, 1, Parametrization::Mu0).exponent,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// `[[s, exponent], ...]` for `s` on a grid in `(0, s_max]`.
pub fn exponent_curve(gamma: f64, d: usize, s_max: f64, points: usize) -> String {
    let pts: Vec<[f64; 2]> = (1..=points.max(2))
        .map(|i| {
            let s = s_max * i as f64 / points.max(2) as f64;
            [s, minimax_exponent(s, s, gamma, d.max(1), Parametrization::Mu0).exponent]
        })
        .collect();
    serde_json::to_string(&pts).unwrap_or_default()
}

#[wasm_bindgen(js_name = simulateAndEstimate)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_and_estimate_js(n: usize, s: f64, gamma: f64, h: f64, cubes: usize, eta: bool, seed: u32) -> Result<String, JsValue> {
    simulate_and_estimate(n, s, gamma, h, cubes, eta, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = lowerBound)]
pub fn lower_bound_js(n: f64, alpha: f64, beta: f64, gamma: f64) -> Result<String, JsValue> {
    lower_bound(n, alpha, beta, gamma).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = exponentCurve)]
pub fn exponent_curve_js(gamma: f64, d: usize, s_max: f64, points: usize) -> String {
    exponent_curve(gamma, d, s_max, points)
}
