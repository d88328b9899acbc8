//! Closed-form bounds on the mixture Hellinger distance and the minimax exponent.

use crate::construction::{bump1, Hypothesis, LowerBoundConfig, Parametrization, Regime, SignVector};
use crate::error::{Error, Result};
use crate::quadrature::{tensor_integrate, Rule};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// `int B(u)^2 du` over `[-1/2, 1/2]^d` using `order` Gauss points per panel.
pub fn bump_l2_norm_sq_with(d: usize, order: usize) -> f64 {
    let rule = Rule::panels(order.max(2), 0.25, std::f64::consts::SQRT_2 / 4.0, 16, &[]);
    let one = 2.0 * (0.25 + rule.integrate(|t| bump1(t).powi(2)));
    one.powi(d as i32)
}

/// Cached `||B||_2^2`.
pub fn bump_l2_norm_sq(d: usize) -> f64 {
    static ONE_D: OnceLock<f64> = OnceLock::new();
    ONE_D.get_or_init(|| bump_l2_norm_sq_with(1, 32)).powi(d as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComponents {
    pub delta1_bound: f64,
    pub delta2_bound: f64,
    /// Computed exactly; zero under the coupling.
    pub delta3: f64,
    pub b_norm_sq: f64,
}

/// Regime-specific closed-form bounds on the three distance components.
pub fn delta_bounds(cfg: &LowerBoundConfig) -> Result<DeltaComponents> {
    cfg.validate()?;
    let b2 = bump_l2_norm_sq(cfg.d);
    let kc = 2f64.powi(cfg.d as i32 + 1) * b2 / cfg.eps;
    let t = cfg.t();
    let ta = kc * t.powf(2.0 * cfg.alpha);
    let tb = kc * t.powf(2.0 * cfg.beta);
    let (d1, d2) = match cfg.regime {
        Regime::Mu0AlphaGeBeta | Regime::EtaAlphaGeBeta => (tb, ta),
        Regime::Mu0BetaGeAlpha => (ta, tb),
        Regime::EtaBetaGeAlpha => (0.0, ta),
    };
    Ok(DeltaComponents {
        delta1_bound: d1,
        delta2_bound: d2,
        delta3: delta3_exact(cfg),
        b_norm_sq: b2,
    })
}

/// On each top cube all bumps equal one, so the integrand is constant and
/// only the local sign matters.
fn delta3_exact(cfg: &LowerBoundConfig) -> f64 {
    let m = cfg.midpoint(0);
    let f = cfg.f_value();
    let mut worst: f64 = 0.0;
    for sign in [1i8, -1] {
        let mut lam = SignVector::ones(cfg.k);
        lam.0[0] = sign;
        let mut acc = 0.0;
        for a in 0..2u8 {
            for y in 0..2u8 {
                let diff = cfg.marginal_density(Hypothesis::Q, &m, a, y)
                    - cfg.marginal_density(Hypothesis::P, &m, a, y);
                let p = cfg.density(&lam, Hypothesis::P, &m, a, y).unwrap_or(f);
                acc += diff * diff / (p * f);
            }
        }
        worst = worst.max(acc);
    }
    worst
}

/// `(delta1, delta2, delta3)` by quadrature over each top cube and full
/// enumeration of sign vectors. Exponential in `k`.
pub fn delta_bruteforce(cfg: &LowerBoundConfig, order: usize) -> Result<[f64; 3]> {
    cfg.validate()?;
    if cfg.k > 10 {
        return Err(Error::config("brute-force deltas limited to k <= 10"));
    }
    let f = cfg.f_value();
    let pj = f * (0.5 * cfg.t()).powi(cfg.d as i32);
    let mut out = [0.0f64; 3];
    for j in 0..cfg.k {
        let (lo, hi) = cfg.inner_box(j);
        let axes: Vec<Rule> = (0..cfg.d).map(|ax| Rule::gauss(order, lo[ax], hi[ax])).collect();
        for bits in 0..(1usize << cfg.k) {
            let lam = SignVector::from_bits(cfg.k, bits);
            let mut acc = [0.0f64; 3];
            for (slot, acc_slot) in acc.iter_mut().enumerate() {
                *acc_slot = tensor_integrate(&axes, |x| {
                    let mut s = 0.0;
                    for a in 0..2u8 {
                        for y in 0..2u8 {
                            let p = cfg.density(&lam, Hypothesis::P, x, a, y).unwrap_or(0.0);
                            let num = match slot {
                                0 => p - cfg.marginal_density_enumerated(Hypothesis::P, x, a, y).unwrap_or(0.0),
                                1 => cfg.density(&lam, Hypothesis::Q, x, a, y).unwrap_or(0.0) - p,
                                _ => {
                                    cfg.marginal_density_enumerated(Hypothesis::Q, x, a, y).unwrap_or(0.0)
                                        - cfg.marginal_density_enumerated(Hypothesis::P, x, a, y).unwrap_or(0.0)
                                }
                            };
                            if p > 0.0 {
                                s += num * num / (p * pj);
                            }
                        }
                    }
                    s
                });
            }
            for i in 0..3 {
                out[i] = out[i].max(acc[i]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerBound {
    /// Upper bound on the squared Hellinger distance, up to the constant `c`.
    pub value: f64,
    pub deltas: DeltaComponents,
    pub p_j_max: f64,
    pub sum_p_j: f64,
    /// Constant of the general mixture bound, supplied by the caller.
    pub c: f64,
    /// Whether `n p_j max(1, delta1, delta2) <= b_hyp` held.
    pub hypothesis_ok: bool,
}

/// `C n (sum p_j) { n max p_j (delta1 delta2 + delta2^2) + delta3 }` with
/// `p_j <= 2 (h/2)^d / k`.
pub fn mixture_hellinger_bound(n: f64, cfg: &LowerBoundConfig, c: f64, b_hyp: f64) -> Result<HellingerBound> {
    let deltas = delta_bounds(cfg)?;
    let p_j_max = 2.0 * (0.5 * cfg.h).powi(cfg.d as i32) / cfg.k as f64;
    let sum_p_j = cfg.k as f64 * p_j_max;
    let (d1, d2, d3) = (deltas.delta1_bound, deltas.delta2_bound, deltas.delta3);
    let value = c * n * sum_p_j * (n * p_j_max * (d1 * d2 + d2 * d2) + d3);
    let hypothesis_ok = n * p_j_max * 1f64.max(d1).max(d2) <= b_hyp;
    Ok(HellingerBound {
        value,
        deltas,
        p_j_max,
        sum_p_j,
        c,
        hypothesis_ok,
    })
}

/// `C* = 2^{2d/gamma + 5} C (||B||^2 / eps)^2`.
pub fn c_star(d: usize, gamma: f64, c: f64, eps: f64) -> f64 {
    let b2 = bump_l2_norm_sq(d);
    2f64.powf(2.0 * d as f64 / gamma + 5.0) * c * (b2 / eps).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    LowSmoothness,
    HighSmoothness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegime {
    /// Error decays as `n^{-exponent}`.
    pub exponent: f64,
    pub regime_label: RegimeLabel,
    pub effective_s: f64,
    /// Elbow `(d/4) / (1 + d/(2 gamma))`.
    pub threshold: f64,
}

pub fn effective_s(alpha: f64, beta: f64, param: Parametrization) -> f64 {
    let s = 0.5 * (alpha + beta);
    match param {
        Parametrization::Mu0 => s,
        Parametrization::Eta => alpha.min(s),
    }
}

pub fn minimax_exponent(alpha: f64, beta: f64, gamma: f64, d: usize, param: Parametrization) -> RateRegime {
    let df = d as f64;
    let se = effective_s(alpha, beta, param);
    let threshold = (df / 4.0) / (1.0 + df / (2.0 * gamma));
    if se < threshold {
        RateRegime {
            exponent: 1.0 / (1.0 + df / (2.0 * gamma) + df / (4.0 * se)),
            regime_label: RegimeLabel::LowSmoothness,
            effective_s: se,
            threshold,
        }
    } else {
        RateRegime {
            exponent: 1.0 / (2.0 + df / gamma),
            regime_label: RegimeLabel::HighSmoothness,
            effective_s: se,
            threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_value() {
        let v = bump_l2_norm_sq(1);
        assert!((v - 0.592141496409777).abs() < 1e-10, "{v}");
        assert!((bump_l2_norm_sq(2) - v * v).abs() < 1e-15);
    }

    #[test]
    fn exponent_examples() {
        let r = minimax_exponent(0.1, 0.1, 1.0, 1, Parametrization::Mu0);
        assert!((r.exponent - 0.25).abs() < 1e-12);
        let r = minimax_exponent(2.0, 2.0, 1.0, 1, Parametrization::Mu0);
        assert!((r.exponent - 1.0 / 3.0).abs() < 1e-12);
        let r = minimax_exponent(0.1, 3.0, 1.0, 1, Parametrization::Eta);
        assert!((r.exponent - 0.25).abs() < 1e-12);
    }
}
