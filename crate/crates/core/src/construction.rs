//! Two-hypothesis mixtures used for the pointwise lower bound: a CATE bump
//! at `x0` against sign-randomized nuisance bumps on `k` sub-cubes.

use crate::data::Dataset;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Scalar flat-top bump: 1 on `[-1/4, 1/4]`, 0 outside `(-1/2, 1/2)`, smooth between.
pub fn bump1(t: f64) -> f64 {
    let u = (4.0 * t) * (4.0 * t);
    if u <= 1.0 {
        return 1.0;
    }
    if u >= 2.0 {
        return 0.0;
    }
    // g(u-1)/g(2-u) = exp(1/(2-u) - 1/(u-1))
    let e = 1.0 / (2.0 - u) - 1.0 / (u - 1.0);
    if e > 700.0 {
        return 0.0;
    }
    1.0 / (1.0 + e.exp())
}

/// Product of scalar bumps over the coordinates of `x`.
pub fn flat_top_bump(x: &[f64]) -> f64 {
    let mut acc = 1.0;
    for &t in x {
        acc *= bump1(t);
        if acc == 0.0 {
            break;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// Components `(pi, mu0, tau)`.
    Mu0,
    /// Components `(pi, eta, tau)` with `eta = mu0 + pi tau`.
    Eta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Mu0AlphaGeBeta,
    Mu0BetaGeAlpha,
    EtaAlphaGeBeta,
    EtaBetaGeAlpha,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Mu0AlphaGeBeta,
        Regime::Mu0BetaGeAlpha,
        Regime::EtaAlphaGeBeta,
        Regime::EtaBetaGeAlpha,
    ];

    pub fn parametrization(self) -> Parametrization {
        match self {
            Regime::Mu0AlphaGeBeta | Regime::Mu0BetaGeAlpha => Parametrization::Mu0,
            _ => Parametrization::Eta,
        }
    }

    fn alpha_ge_beta(self) -> bool {
        matches!(self, Regime::Mu0AlphaGeBeta | Regime::EtaAlphaGeBeta)
    }

    /// Exponent `e` in the coupling `h^gamma = 4 t^{2e}`.
    pub fn coupling_exponent(self, alpha: f64, beta: f64) -> f64 {
        match self {
            Regime::EtaBetaGeAlpha => alpha,
            _ => 0.5 * (alpha + beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    P,
    Q,
}

/// Which conditional function an envelope query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Pi,
    Mu0,
    Eta,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundConfig {
    pub regime: Regime,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d: usize,
    pub h: f64,
    pub k: usize,
    pub x0: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    0.05
}

/// Conditional functions at one covariate value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditionals {
    pub pi: f64,
    pub mu0: f64,
    pub tau: f64,
}

impl Conditionals {
    pub fn eta(&self) -> f64 {
        self.mu0 + self.pi * self.tau
    }

    pub fn mu1(&self) -> f64 {
        self.mu0 + self.tau
    }
}

impl LowerBoundConfig {
    pub fn s(&self) -> f64 {
        0.5 * (self.alpha + self.beta)
    }

    /// Sub-cubes per axis; `k = j^d`.
    pub fn j(&self) -> usize {
        let j = (self.k as f64).powf(1.0 / self.d as f64).round() as usize;
        j.max(1)
    }

    /// Sub-cube side `h / k^{1/d}`.
    pub fn t(&self) -> f64 {
        self.h / self.j() as f64
    }

    /// Constant covariate density on the support.
    pub fn f_value(&self) -> f64 {
        let d = self.d as i32;
        1.0 / (1.0 - (4f64.powi(d) - 1.0) / 2f64.powi(d) * self.h.powi(d))
    }

    pub fn support_measure(&self) -> f64 {
        1.0 / self.f_value()
    }

    /// Structural checks plus the full validity constraint.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        self.check_validity()
    }

    fn validate_structure(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.x0.len() != self.d {
            return bad(format!("x0 has {} coordinates for d = {}", self.x0.len(), self.d));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.eps > 0.0 && self.eps < 0.25) {
            return bad(format!("eps {} outside (0, 1/4)", self.eps));
        }
        if !(self.h > 0.0 && self.h <= 0.25) {
            return bad(format!("h {} outside (0, 1/4]", self.h));
        }
        let j = self.j();
        if j.checked_pow(self.d as u32) != Some(self.k) {
            return bad(format!("k = {} is not an integer to the power d = {}", self.k, self.d));
        }
        if self.x0.iter().any(|&c| c < self.h - 1e-12 || c > 1.0 - self.h + 1e-12) {
            return bad("x0 must lie in [h, 1-h]^d so the 2h-cube fits".into());
        }
        let ok = if self.regime.alpha_ge_beta() {
            self.alpha >= self.beta
        } else {
            self.beta >= self.alpha
        };
        if !ok {
            return bad(format!(
                "regime {:?} does not match alpha = {}, beta = {}",
                self.regime, self.alpha, self.beta
            ));
        }
        Ok(())
    }

    /// `h <= 1/4`, `h^gamma + 2 t^{min(alpha,beta)} <= 1 - 4 eps`, every joint
    /// density at least `eps f` on the support and all conditional means in `[0,1]`.
    pub fn check_validity(&self) -> Result<()> {
        let t = self.t();
        let lhs = self.h.powf(self.gamma) + 2.0 * t.powf(self.alpha.min(self.beta));
        if lhs > 1.0 - 4.0 * self.eps {
            return Err(Error::config(format!(
                "validity constraint violated: h^gamma + 2 t^min(alpha,beta) = {lhs:.4} > 1 - 4 eps"
            )));
        }
        let hg = self.h.powf(self.gamma);
        for hyp in [Hypothesis::P, Hypothesis::Q] {
            for bsum in [-1.0, 0.0, 1.0] {
                for tb in [0.0, 1.0] {
                    let c = self.conditionals_raw(hyp, bsum, tb);
                    for m in [c.pi, c.mu0, c.mu1(), c.eta()] {
                        if !(-1e-12..=1.0 + 1e-12).contains(&m) {
                            return Err(Error::config(format!(
                                "conditional mean {m} outside [0,1] under {hyp:?}"
                            )));
                        }
                    }
                }
            }
            // values attained on the support: far region and sub-cube tops
            let states = [(0.0, 0.0), (1.0, 1.0), (-1.0, 1.0)];
            for (bsum, tb) in states {
                for a in 0..2u8 {
                    for y in 0..2u8 {
                        let r = self.ratio_raw(hyp, bsum, tb, a, y);
                        if r < self.eps {
                            return Err(Error::config(format!(
                                "density ratio {r:.4} below eps under {hyp:?} (h^gamma = {hg:.3e})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Midpoint of sub-cube `idx` (last axis fastest).
    pub fn midpoint(&self, idx: usize) -> Vec<f64> {
        let j = self.j();
        let t = self.t();
        let mut rem = idx;
        let mut m = vec![0.0; self.d];
        for ax in (0..self.d).rev() {
            let i = rem % j;
            rem /= j;
            m[ax] = self.x0[ax] - 0.5 * self.h + t * (i as f64 + 0.5);
        }
        m
    }

    /// Sub-cube of `C_h(x0)` containing `x`.
    pub fn subcube_of(&self, x: &[f64]) -> Option<usize> {
        let j = self.j();
        let t = self.t();
        let mut idx = 0usize;
        for (ax, &xi) in x.iter().enumerate() {
            let rel = xi - (self.x0[ax] - 0.5 * self.h);
            if rel < -1e-15 || rel > self.h + 1e-15 {
                return None;
            }
            let i = ((rel / t).floor().max(0.0) as usize).min(j - 1);
            idx = idx * j + i;
        }
        Some(idx)
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return false;
        }
        let far = x
            .iter()
            .zip(&self.x0)
            .any(|(a, b)| (a - b).abs() >= self.h);
        if far {
            return true;
        }
        match self.subcube_of(x) {
            Some(i) => {
                let m = self.midpoint(i);
                let r = 0.25 * self.t();
                x.iter().zip(&m).all(|(a, b)| (a - b).abs() <= r)
            }
            None => false,
        }
    }

    /// `sum_j lambda_j B((x - m_j)/t)`; at most one term is non-zero.
    pub fn signed_bump(&self, lambda: &SignVector, x: &[f64]) -> f64 {
        let Some(i) = self.subcube_of(x) else {
            return 0.0;
        };
        let m = self.midpoint(i);
        let t = self.t();
        let u: Vec<f64> = x.iter().zip(&m).map(|(a, b)| (a - b) / t).collect();
        lambda.0[i] as f64 * flat_top_bump(&u)
    }

    /// `sum_j B((x - m_j)/t)^2`.
    pub fn squared_bumps(&self, x: &[f64]) -> f64 {
        let Some(i) = self.subcube_of(x) else {
            return 0.0;
        };
        let m = self.midpoint(i);
        let t = self.t();
        let u: Vec<f64> = x.iter().zip(&m).map(|(a, b)| (a - b) / t).collect();
        flat_top_bump(&u).powi(2)
    }

    /// `B((x - x0)/(2h))`.
    pub fn cate_bump(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x
            .iter()
            .zip(&self.x0)
            .map(|(a, b)| (a - b) / (2.0 * self.h))
            .collect();
        flat_top_bump(&u)
    }

    /// Conditionals given the signed nuisance bump value and the CATE bump value.
    pub fn conditionals_raw(&self, hyp: Hypothesis, bsum: f64, cate_bump: f64) -> Conditionals {
        let t = self.t();
        let dpi = t.powf(self.alpha) * bsum;
        let dmu = t.powf(self.beta) * bsum;
        let tau_h = self.h.powf(self.gamma) * cate_bump;
        use Hypothesis::*;
        match (self.regime, hyp) {
            (Regime::Mu0AlphaGeBeta, P) | (Regime::EtaAlphaGeBeta, P) => Conditionals {
                pi: 0.5,
                mu0: 0.5 + dmu - 0.5 * tau_h,
                tau: tau_h,
            },
            (Regime::Mu0AlphaGeBeta, Q) | (Regime::EtaAlphaGeBeta, Q) | (Regime::Mu0BetaGeAlpha, Q) => {
                Conditionals {
                    pi: 0.5 + dpi,
                    mu0: 0.5 + dmu,
                    tau: 0.0,
                }
            }
            (Regime::Mu0BetaGeAlpha, P) => Conditionals {
                pi: 0.5 + dpi,
                mu0: 0.5 - 0.5 * tau_h,
                tau: tau_h,
            },
            (Regime::EtaBetaGeAlpha, P) => {
                let tau = 0.5 * (1.0 - tau_h);
                Conditionals {
                    pi: 0.5,
                    mu0: 0.5 - 0.5 * tau,
                    tau,
                }
            }
            (Regime::EtaBetaGeAlpha, Q) => {
                let pi = 0.5 + dpi;
                Conditionals {
                    pi,
                    mu0: 0.5 - 0.5 * pi,
                    tau: 0.5,
                }
            }
        }
    }

    pub fn conditionals(&self, lambda: &SignVector, hyp: Hypothesis, x: &[f64]) -> Conditionals {
        self.conditionals_raw(hyp, self.signed_bump(lambda, x), self.cate_bump(x))
    }

    /// Joint density divided by `f`, via the bilinear form in the regime's parametrization.
    fn ratio_raw(&self, hyp: Hypothesis, bsum: f64, cate_bump: f64, a: u8, y: u8) -> f64 {
        let c = self.conditionals_raw(hyp, bsum, cate_bump);
        bilinear_ratio(self.regime.parametrization(), &c, a, y)
    }

    /// Exact density of `(x, a, y)` under `P_lambda` or `Q_lambda`.
    pub fn density(&self, lambda: &SignVector, hyp: Hypothesis, x: &[f64], a: u8, y: u8) -> Result<f64> {
        self.check_args(lambda, x)?;
        if a > 1 || y > 1 {
            return Err(Error::config("construction densities need binary a and y"));
        }
        if !self.in_support(x) {
            return Ok(0.0);
        }
        let c = self.conditionals(lambda, hyp, x);
        Ok(self.f_value() * bilinear_ratio(self.regime.parametrization(), &c, a, y))
    }

    /// Prior-averaged density in closed form.
    pub fn marginal_density(&self, hyp: Hypothesis, x: &[f64], a: u8, y: u8) -> f64 {
        if !self.in_support(x) {
            return 0.0;
        }
        let sgn = (2.0 * a as f64 - 1.0) * (2.0 * y as f64 - 1.0);
        let hg = self.h.powf(self.gamma);
        let t = self.t();
        let inner = match (self.regime, hyp) {
            (Regime::EtaBetaGeAlpha, Hypothesis::P) => {
                0.25 + sgn * 0.125 * (1.0 - hg * self.cate_bump(x))
            }
            (Regime::EtaBetaGeAlpha, Hypothesis::Q) => {
                0.25 + sgn * (0.125 - 0.5 * t.powf(2.0 * self.alpha) * self.squared_bumps(x))
            }
            (_, Hypothesis::P) => 0.25 + sgn * 0.25 * hg * self.cate_bump(x),
            (_, Hypothesis::Q) => 0.25 + sgn * t.powf(2.0 * self.s()) * self.squared_bumps(x),
        };
        self.f_value() * inner
    }

    /// Prior-averaged density by enumerating every sign vector (small `k` only).
    pub fn marginal_density_enumerated(&self, hyp: Hypothesis, x: &[f64], a: u8, y: u8) -> Result<f64> {
        if self.k > 20 {
            return Err(Error::config("enumeration limited to k <= 20"));
        }
        let mut acc = 0.0;
        let total = 1usize << self.k;
        for bits in 0..total {
            let lambda = SignVector::from_bits(self.k, bits);
            acc += self.density(&lambda, hyp, x, a, y)?;
        }
        Ok(acc / total as f64)
    }

    fn check_args(&self, lambda: &SignVector, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if lambda.len() != self.k {
            return Err(Error::config(format!(
                "sign vector has length {} but k = {}",
                lambda.len(),
                self.k
            )));
        }
        Ok(())
    }

    /// Disjoint boxes `(lo, hi)` covering the part of the support away from `x0`.
    pub fn far_boxes(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = self.d;
        let mut out = Vec::new();
        for i in 0..d {
            // coordinates before i inside the 2h-interval, coordinate i outside, rest free
            let pieces = [(0.0, self.x0[i] - self.h), (self.x0[i] + self.h, 1.0)];
            for (plo, phi) in pieces {
                if phi - plo <= 0.0 {
                    continue;
                }
                let mut lo = vec![0.0; d];
                let mut hi = vec![1.0; d];
                for l in 0..i {
                    lo[l] = self.x0[l] - self.h;
                    hi[l] = self.x0[l] + self.h;
                }
                lo[i] = plo;
                hi[i] = phi;
                out.push((lo, hi));
            }
        }
        out
    }

    /// Inner top cube `C_{t/2}(m_j)` as `(lo, hi)`.
    pub fn inner_box(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.midpoint(idx);
        let r = 0.25 * self.t();
        (
            m.iter().map(|c| c - r).collect(),
            m.iter().map(|c| c + r).collect(),
        )
    }

    /// Sup of `|g - g_far|` over a grid on `C_{2h}(x0)` plus every sub-cube midpoint,
    /// where `g_far` is the component's value away from `x0`.
    pub fn smoothness_envelope(
        &self,
        lambda: &SignVector,
        hyp: Hypothesis,
        comp: Component,
        grid: usize,
    ) -> Result<f64> {
        if lambda.len() != self.k {
            return Err(Error::config("sign vector length does not match k"));
        }
        let pick = |c: &Conditionals| match comp {
            Component::Pi => c.pi,
            Component::Mu0 => c.mu0,
            Component::Eta => c.eta(),
            Component::Tau => c.tau,
        };
        let base = pick(&self.conditionals_raw(hyp, 0.0, 0.0));
        let mut best: f64 = 0.0;
        let mut probe = |x: &[f64]| {
            let v = pick(&self.conditionals(lambda, hyp, x));
            best = best.max((v - base).abs());
        };
        if self.k <= 1 << 16 {
            for i in 0..self.k {
                probe(&self.midpoint(i));
            }
        }
        let g = grid.max(2);
        let total = g.pow(self.d as u32);
        let mut x = vec![0.0; self.d];
        for idx in 0..total {
            let mut rem = idx;
            for ax in (0..self.d).rev() {
                let i = rem % g;
                rem /= g;
                let lo = (self.x0[ax] - self.h).max(0.0);
                let hi = (self.x0[ax] + self.h).min(1.0);
                x[ax] = lo + (hi - lo) * i as f64 / (g - 1) as f64;
            }
            probe(&x);
        }
        Ok(best)
    }

    /// Draws `n` observations; with `lambda = None` a fresh Rademacher vector is drawn first.
    pub fn sample(
        &self,
        lambda: Option<&SignVector>,
        hyp: Hypothesis,
        n: usize,
        seed: u64,
    ) -> Result<(Dataset, SignVector)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = match lambda {
            Some(l) => {
                self.check_args(l, &self.x0)?;
                l.clone()
            }
            None => SignVector::rademacher(self.k, &mut rng),
        };
        let far = self.far_boxes();
        let inner_mass = (0.5 * self.h).powi(self.d as i32);
        let mut weights: Vec<f64> = vec![inner_mass];
        for (lo, hi) in &far {
            weights.push(lo.iter().zip(hi).map(|(a, b)| b - a).product());
        }
        let total: f64 = weights.iter().sum();
        let mut cum = Vec::with_capacity(weights.len());
        let mut run = 0.0;
        for w in &weights {
            run += w / total;
            cum.push(run);
        }
        let mut ds = Dataset::with_capacity(self.d, n);
        let mut x = vec![0.0; self.d];
        for _ in 0..n {
            let u: f64 = rng.random();
            let which = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let (lo, hi) = if which == 0 {
                self.inner_box(rng.random_range(0..self.k))
            } else {
                far[which - 1].clone()
            };
            for ax in 0..self.d {
                x[ax] = lo[ax] + (hi[ax] - lo[ax]) * rng.random::<f64>();
            }
            let c = self.conditionals(&lambda, hyp, &x);
            let a = u8::from(rng.random::<f64>() < c.pi);
            let mean = if a == 1 { c.mu1() } else { c.mu0 };
            let y = u8::from(rng.random::<f64>() < mean);
            ds.push(&x, a, y as f64);
        }
        Ok((ds, lambda))
    }
}

/// Joint probability of `(a, y)` given `x`, divided by `f(x)`.
pub fn bilinear_ratio(param: Parametrization, c: &Conditionals, a: u8, y: u8) -> f64 {
    let af = a as f64;
    let yf = y as f64;
    let sgn = (2.0 * af - 1.0) * (2.0 * yf - 1.0);
    let dpi = c.pi - 0.5;
    match param {
        Parametrization::Mu0 => {
            let dmu = c.mu0 - 0.5;
            0.25 + (af - 0.5) * dpi
                + (yf - 0.5) * dmu
                + sgn * (dpi * dmu + af * c.tau * (0.5 + dpi))
        }
        Parametrization::Eta => {
            let deta = c.eta() - 0.5;
            0.25 + (af - 0.5) * dpi
                + (yf - 0.5) * deta
                + sgn * (dpi * deta + c.tau * (0.25 - dpi * dpi))
        }
    }
}

/// Signs `lambda_j` in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignVector(pub Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::config("signs must be +1 or -1"));
        }
        Ok(SignVector(signs))
    }

    pub fn ones(k: usize) -> Self {
        SignVector(vec![1; k])
    }

    /// Bit `j` of `bits` set means `lambda_j = +1`.
    pub fn from_bits(k: usize, bits: usize) -> Self {
        SignVector((0..k).map(|j| if bits >> j & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn rademacher<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        SignVector((0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Output of [`couple_parameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Bandwidth after rounding.
    pub h: f64,
    /// Sub-cube side `h / k^{1/d}` after rounding.
    pub t: f64,
    /// Sub-cubes per axis.
    pub j: u64,
    /// `j^d` as a float (may exceed `usize`).
    pub k: f64,
    pub h_real: f64,
    pub t_real: f64,
    /// CATE separation `h^gamma / 4`.
    pub separation: f64,
}

/// Chooses `(h, k)` with `t = (1/(C* n^2))^{1/(d + 4e + 2ed/gamma)}` and
/// `h^gamma = 4 t^{2e}`, where `e = (alpha+beta)/2`.
pub fn couple_parameters(n: f64, alpha: f64, beta: f64, gamma: f64, d: usize, c_star: f64) -> Result<Coupling> {
    couple_with_exponent(n, 0.5 * (alpha + beta), gamma, d, c_star)
}

/// As [`couple_parameters`] with the exponent appropriate to `regime`.
pub fn couple_for_regime(
    regime: Regime,
    n: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    d: usize,
    c_star: f64,
) -> Result<Coupling> {
    couple_with_exponent(n, regime.coupling_exponent(alpha, beta), gamma, d, c_star)
}

/// Rounds the cube count per axis up, then re-solves `h^gamma = 4 t^{2e}` with
/// `h = j t`, so the identity survives rounding and `t` never grows.
pub fn couple_with_exponent(n: f64, e: f64, gamma: f64, d: usize, c_star: f64) -> Result<Coupling> {
    if !(n >= 1.0 && c_star > 0.0 && e > 0.0 && gamma > 0.0 && d > 0) {
        return Err(Error::config("coupling needs n >= 1 and positive exponents"));
    }
    if gamma <= 2.0 * e {
        return Err(Error::config(format!(
            "coupling needs gamma > 2e (gamma = {gamma}, e = {e})"
        )));
    }
    let df = d as f64;
    let expo = 1.0 / (df + 4.0 * e + 2.0 * e * df / gamma);
    let t_real = (1.0 / (c_star * n * n)).powf(expo);
    let h_real = (4.0 * t_real.powf(2.0 * e)).powf(1.0 / gamma);
    let ratio = h_real / t_real;
    let snapped = ratio.round();
    let j = if (ratio - snapped).abs() <= 1e-9 * ratio.max(1.0) {
        snapped
    } else {
        ratio.ceil()
    }
    .max(1.0);
    let t = (4.0 * j.powf(-gamma)).powf(1.0 / (gamma - 2.0 * e));
    let h = j * t;
    if h > 0.25 {
        return Err(Error::config(format!(
            "n = {n} too small for this regime: coupled h = {h:.4} exceeds 1/4"
        )));
    }
    Ok(Coupling {
        h,
        t,
        j: j as u64,
        k: j.powi(d as i32),
        h_real,
        t_real,
        separation: 0.25 * h.powf(gamma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row1() -> LowerBoundConfig {
        LowerBoundConfig {
            regime: Regime::Mu0AlphaGeBeta,
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
            d: 1,
            h: 0.25,
            k: 4,
            x0: vec![0.5],
            eps: 0.05,
        }
    }

    #[test]
    fn bump_values() {
        assert_eq!(flat_top_bump(&[0.0]), 1.0);
        assert_eq!(flat_top_bump(&[0.75]), 0.0);
        assert!((bump1(0.3) - 0.6194025164).abs() < 1e-10);
        assert_eq!(bump1(0.25), 1.0);
        assert_eq!(bump1(-0.5), 0.0);
    }

    #[test]
    fn density_example() {
        let c = row1();
        c.validate().unwrap();
        assert!((c.f_value() - 1.6).abs() < 1e-12);
        let m = c.midpoint(0);
        let p = c.density(&SignVector::ones(4), Hypothesis::P, &m, 1, 1).unwrap();
        assert!((p - 0.7).abs() < 1e-12, "{p}");
    }

    #[test]
    fn far_density_is_quarter_f() {
        let c = row1();
        let lam = SignVector::ones(4);
        for (a, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for hyp in [Hypothesis::P, Hypothesis::Q] {
                let v = c.density(&lam, hyp, &[0.1], a, y).unwrap();
                assert!((v - 0.4).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coupling_example() {
        let cp = couple_parameters(1e8, 0.1, 0.1, 1.0, 1, 1.0).unwrap();
        assert!((cp.t - 1e-10).abs() < 1e-19);
        assert!((cp.h - 0.04).abs() < 1e-12);
        assert!((cp.separation - 0.01).abs() < 1e-12);
    }
}
