//! Synthetic data-generating processes with certified smoothness.

use crate::construction::{bump1, Hypothesis, LowerBoundConfig, Parametrization, SignVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{CovariateDensity, FnDensity, NuisanceFit, UniformDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed` one word at a time.
pub fn child_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// `g(x) = sum_l 2^{-l s} sigma(l, c) B(2^l x - c - 1/2) / Z` with hashed signs
/// `sigma`, cell `c = floor(2^l x)` and `Z = sum_l 2^{-l s}`. Holder-`s`, `|g| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiScale {
    pub s: f64,
    pub levels: u32,
    pub salt: u64,
}

impl MultiScale {
    pub fn new(s: f64, salt: u64) -> Self {
        MultiScale { s, levels: 40, salt }
    }

    fn sign(&self, level: u32, cell: &[u64]) -> f64 {
        let mut h = child_seed(self.salt, &[level as u64]);
        for &c in cell {
            h = mix64(h ^ c);
        }
        if h & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut norm = 0.0;
        let mut cell = vec![0u64; x.len()];
        let mut u = vec![0.0; x.len()];
        for l in 0..self.levels {
            let w = 2f64.powf(-(l as f64) * self.s);
            norm += w;
            let scale = 2f64.powi(l as i32);
            for (i, &xi) in x.iter().enumerate() {
                let z = (xi.clamp(0.0, 1.0) * scale).min(scale - 0.5);
                let c = z.floor();
                cell[i] = c as u64;
                u[i] = z - c - 0.5;
            }
            let b: f64 = u.iter().map(|&t| bump1(t)).product();
            if b != 0.0 {
                acc += w * self.sign(l, &cell) * b;
            }
        }
        acc / norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothDgp {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub x0: Vec<f64>,
    #[serde(default = "d_pi_amp")]
    pub pi_amplitude: f64,
    #[serde(default = "d_mu_amp")]
    pub mu0_amplitude: f64,
    #[serde(default = "d_tau0")]
    pub tau0: f64,
    #[serde(default = "d_tau_amp")]
    pub tau_amplitude: f64,
    #[serde(default = "d_noise")]
    pub noise_sd: f64,
    /// Shared by the propensity and control-outcome sign patterns.
    #[serde(default)]
    pub salt: u64,
}

fn d_pi_amp() -> f64 {
    0.3
}
fn d_mu_amp() -> f64 {
    0.5
}
fn d_tau0() -> f64 {
    1.0
}
fn d_tau_amp() -> f64 {
    1.0
}
fn d_noise() -> f64 {
    0.5
}

impl SmoothDgp {
    pub fn new(d: usize, alpha: f64, beta: f64, gamma: f64, x0: Vec<f64>) -> Self {
        SmoothDgp {
            d,
            alpha,
            beta,
            gamma,
            x0,
            pi_amplitude: d_pi_amp(),
            mu0_amplitude: d_mu_amp(),
            tau0: d_tau0(),
            tau_amplitude: d_tau_amp(),
            noise_sd: d_noise(),
            salt: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.x0.len() != self.d {
            return Err(Error::config("smooth scenario: x0 must have d coordinates"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma > 0.0) {
            return Err(Error::config("smooth scenario: smoothness must be positive"));
        }
        if !(self.pi_amplitude >= 0.0 && self.pi_amplitude < 0.5) {
            return Err(Error::config("smooth scenario: pi_amplitude must be in [0, 1/2)"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::config("smooth scenario: noise_sd must be non-negative"));
        }
        Ok(())
    }

    pub fn pi(&self, x: &[f64]) -> f64 {
        0.5 + self.pi_amplitude * MultiScale::new(self.alpha, self.salt).eval(x)
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        self.mu0_amplitude * MultiScale::new(self.beta, self.salt).eval(x)
    }

    /// `tau0 + c sum_j |x_j - x0_j|^gamma`: exactly `gamma`-smooth at `x0`.
    pub fn tau(&self, x: &[f64]) -> f64 {
        let kink: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b).abs().powf(self.gamma)).sum();
        self.tau0 + self.tau_amplitude * kink
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        self.mu0(x) + self.pi(x) * self.tau(x)
    }

    pub fn tau_x0(&self) -> f64 {
        self.tau(&self.x0)
    }

    pub fn covariate(&self) -> Arc<dyn CovariateDensity> {
        Arc::new(UniformDensity { d: self.d })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).expect("finite sd");
        let mut ds = Dataset::with_capacity(self.d, n);
        let mut x = vec![0.0; self.d];
        for _ in 0..n {
            for xi in x.iter_mut() {
                *xi = rng.random();
            }
            let a = u8::from(rng.random::<f64>() < self.pi(&x));
            let eps = if self.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let y = self.mu0(&x) + a as f64 * self.tau(&x) + eps;
            ds.push(&x, a, y);
        }
        ds
    }

    /// True nuisances, optionally shifted by `amplitude * B((x - x0)/width)`.
    pub fn nuisances(&self, param: Parametrization, amplitude: f64, width: f64) -> NuisanceFit {
        let shift = {
            let x0 = self.x0.clone();
            move |x: &[f64]| -> f64 {
                if amplitude == 0.0 {
                    return 0.0;
                }
                let u: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| (a - b) / width).collect();
                amplitude * crate::construction::flat_top_bump(&u)
            }
        };
        let me = self.clone();
        let sh = shift.clone();
        let pi = move |x: &[f64]| me.pi(x) + sh(x);
        let me = self.clone();
        let outcome = move |x: &[f64]| {
            let base = match param {
                Parametrization::Mu0 => me.mu0(x),
                Parametrization::Eta => me.eta(x),
            };
            base + shift(x)
        };
        NuisanceFit::known(pi, outcome, param, self.covariate())
    }
}

/// Draws from one member of a lower-bound mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionDgp {
    pub config: LowerBoundConfig,
    pub hypothesis: Hypothesis,
}

impl ConstructionDgp {
    /// Returns the data and the CATE at `x0` for the drawn sign vector.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Dataset, f64, SignVector)> {
        let (ds, lam) = self.config.sample(None, self.hypothesis, n, seed)?;
        let tau = self.config.conditionals(&lam, self.hypothesis, &self.config.x0).tau;
        Ok((ds, tau, lam))
    }

    /// Exact nuisances for a given sign vector.
    pub fn nuisances(&self, lam: &SignVector, param: Parametrization) -> NuisanceFit {
        let (c1, l1, hyp) = (self.config.clone(), lam.clone(), self.hypothesis);
        let pi = move |x: &[f64]| c1.conditionals(&l1, hyp, x).pi;
        let (c2, l2) = (self.config.clone(), lam.clone());
        let out = move |x: &[f64]| {
            let c = c2.conditionals(&l2, hyp, x);
            match param {
                Parametrization::Mu0 => c.mu0,
                Parametrization::Eta => c.eta(),
            }
        };
        NuisanceFit::known(pi, out, param, self.covariate())
    }

    /// Piecewise-constant density of the covariates.
    pub fn covariate(&self) -> Arc<dyn CovariateDensity> {
        let cfg = self.config.clone();
        let f = cfg.f_value();
        let mut breaks: Vec<Vec<f64>> = vec![Vec::new(); cfg.d];
        for (lo, hi) in cfg.far_boxes() {
            for ax in 0..cfg.d {
                breaks[ax].push(lo[ax]);
                breaks[ax].push(hi[ax]);
            }
        }
        if cfg.k <= 4096 {
            for j in 0..cfg.k {
                let (lo, hi) = cfg.inner_box(j);
                for ax in 0..cfg.d {
                    breaks[ax].push(lo[ax]);
                    breaks[ax].push(hi[ax]);
                }
            }
        }
        for b in breaks.iter_mut() {
            b.sort_by(f64::total_cmp);
            b.dedup();
        }
        let d = cfg.d;
        Arc::new(FnDensity {
            d,
            f: move |x: &[f64]| if cfg.in_support(x) { f } else { 0.0 },
            breaks,
        })
    }
}
