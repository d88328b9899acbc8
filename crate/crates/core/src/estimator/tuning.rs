use crate::construction::Parametrization;
use crate::hellinger::{minimax_exponent, RegimeLabel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub h: f64,
    /// Unrounded basis size.
    pub k_real: f64,
    pub k: usize,
    pub regime_label: RegimeLabel,
    pub exponent: f64,
    pub effective_s: f64,
}

/// Bandwidth and basis size balancing smoothing bias, projection bias and variance.
#[allow(clippy::too_many_arguments)]
pub fn tuning_rule(
    n: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    d: usize,
    param: Parametrization,
    c_h: f64,
    c_k: f64,
) -> Tuning {
    let df = d as f64;
    let reg = minimax_exponent(alpha, beta, gamma, d, param);
    let se = reg.effective_s;
    let (h, k_real) = match reg.regime_label {
        RegimeLabel::LowSmoothness => {
            let den = 1.0 + df / (2.0 * gamma) + df / (4.0 * se);
            let h = c_h * n.powf(-(1.0 / gamma) / den);
            let k = c_k * n.powf((df / (2.0 * se) - df / gamma) / den);
            (h, k)
        }
        RegimeLabel::HighSmoothness => {
            let h = c_h * n.powf(-1.0 / (2.0 * gamma + df));
            (h, c_k * n * h.powi(d as i32))
        }
    };
    Tuning {
        h,
        k_real,
        k: (k_real.round() as usize).max(1),
        regime_label: reg.regime_label,
        exponent: reg.exponent,
        effective_s: se,
    }
}

/// Cubes per axis for a grid with about `k` cells.
pub fn cubes_per_axis(k: f64, d: usize) -> usize {
    (k.max(1.0).powf(1.0 / d as f64).round() as usize).max(1)
}
