use super::{guarded_solve, moment, tau_from_theta};
use crate::basis::{LocalizedFrame, TensorBasis};
use crate::error::Result;
use crate::nuisance::CovariateDensity;
use crate::quadrature::{tensor_for_each, Rule};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Weighted least-squares projection of the true CATE onto `rho` over the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub tau_h: f64,
    pub theta: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    /// `R - Q theta`; zero up to round-off.
    pub s: Vec<f64>,
}

/// `Q = int rho rho^T pi(1-pi) f`, `R = int rho tau pi(1-pi) f` over `v in [0,1]^d`,
/// with `panels` Gauss panels of `order` points per axis plus the density jumps.
pub fn projection_oracle(
    pi: &dyn Fn(&[f64]) -> f64,
    tau: &dyn Fn(&[f64]) -> f64,
    density: &dyn CovariateDensity,
    frame: &LocalizedFrame,
    gamma: f64,
    order: usize,
    panels: usize,
) -> Result<Projection> {
    let d = frame.d();
    let rho = TensorBasis::for_smoothness(d, gamma)?;
    let q = rho.q();
    let axes: Vec<Rule> = (0..d)
        .map(|ax| {
            let jumps: Vec<f64> = density
                .breakpoints(ax)
                .into_iter()
                .chain([0.0, 1.0])
                .map(|x| 0.5 + (x - frame.x0[ax]) / frame.h)
                .collect();
            Rule::panels(order, 0.0, 1.0, panels.max(2), &jumps)
        })
        .collect();
    let mut qm = DMatrix::<f64>::zeros(q, q);
    let mut rv = DVector::<f64>::zeros(q);
    let mut x = vec![0.0; d];
    let mut e = vec![0.0; q];
    tensor_for_each(&axes, |v, w| {
        frame.unstretch(v, &mut x);
        let p = pi(&x);
        let wt = w * p * (1.0 - p) * density.density(&x);
        if wt == 0.0 {
            return;
        }
        rho.eval_into(v, &mut e);
        let t = tau(&x);
        for a in 0..q {
            rv[a] += wt * t * e[a];
            for b in 0..q {
                qm[(a, b)] += wt * e[a] * e[b];
            }
        }
    });
    let (theta, _, _) = guarded_solve(&qm, &rv, 1e-12)?;
    let th: Vec<f64> = theta.iter().copied().collect();
    Ok(Projection {
        tau_h: tau_from_theta(&rho, &th),
        s: moment(&qm, &rv, &th),
        q: super::rows(&qm),
        r: rv.iter().copied().collect(),
        theta: th,
    })
}
