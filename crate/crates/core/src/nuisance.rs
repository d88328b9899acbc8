//! Training-split nuisance estimates: propensity, outcome regressions and
//! the covariate distribution near `x0`.

use crate::basis::{LocalizedFrame, TensorBasis};
use crate::construction::Parametrization;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quadrature::{tensor_integrate, Rule};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A fitted or known regression function on `[0,1]^d`.
pub trait Regression: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// Wraps a closure as a [`Regression`].
pub struct FnRegression<F>(pub F);

impl<F> Regression for FnRegression<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// A covariate density on `[0,1]^d`.
pub trait CovariateDensity: Send + Sync {
    fn d(&self) -> usize;
    fn density(&self, x: &[f64]) -> f64;
    /// Coordinates along `axis` where the density may jump.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformDensity {
    pub d: usize,
}

impl CovariateDensity for UniformDensity {
    fn d(&self) -> usize {
        self.d
    }
    fn density(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            1.0
        } else {
            0.0
        }
    }
}

/// Closure density with optional jump locations.
pub struct FnDensity<F> {
    pub d: usize,
    pub f: F,
    pub breaks: Vec<Vec<f64>>,
}

impl<F> CovariateDensity for FnDensity<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn d(&self) -> usize {
        self.d
    }
    fn density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.breaks.get(axis).cloned().unwrap_or_default()
    }
}

/// Disjoint training and estimation index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub estimation: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle-split; `fraction` of the points go to training.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::config("need at least two observations to split"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut estimation = idx[n_train..].to_vec();
    train.sort_unstable();
    estimation.sort_unstable();
    Ok(SplitPlan {
        train,
        estimation,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `A ~ X`.
    Propensity,
    /// `Y ~ X` among controls.
    ControlOutcome,
    /// `Y ~ X` over everyone.
    Outcome,
}

/// Bucket grid for sup-norm range queries.
#[derive(Debug, Clone)]
struct GridIndex {
    d: usize,
    cells: usize,
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    fn build(pts: &[f64], d: usize, cell: f64) -> Self {
        let n = pts.len() / d.max(1);
        let max_total = (4 * n).max(1);
        let mut cells = ((1.0 / cell).ceil() as usize).max(1);
        while cells > 1 && cells.checked_pow(d as u32).is_none_or(|t| t > max_total) {
            cells = (cells / 2).max(1);
        }
        let total = cells.pow(d as u32);
        let mut buckets = vec![Vec::new(); total];
        for i in 0..n {
            let x = &pts[i * d..(i + 1) * d];
            let mut id = 0;
            for &v in x {
                id = id * cells + Self::coord(v, cells);
            }
            buckets[id].push(i as u32);
        }
        GridIndex { d, cells, buckets }
    }

    fn coord(v: f64, cells: usize) -> usize {
        ((v * cells as f64).floor().max(0.0) as usize).min(cells - 1)
    }

    fn query(&self, pts: &[f64], x: &[f64], r: f64, out: &mut Vec<u32>) {
        out.clear();
        let d = self.d;
        let lo: Vec<usize> = x.iter().map(|&v| Self::coord(v - r, self.cells)).collect();
        let hi: Vec<usize> = x.iter().map(|&v| Self::coord(v + r, self.cells)).collect();
        let mut cur = lo.clone();
        loop {
            let id = cur.iter().fold(0, |acc, &c| acc * self.cells + c);
            for &i in &self.buckets[id] {
                let p = &pts[i as usize * d..(i as usize + 1) * d];
                if p.iter().zip(x).all(|(a, b)| (a - b).abs() <= r) {
                    out.push(i);
                }
            }
            let mut ax = d;
            loop {
                if ax == 0 {
                    return;
                }
                ax -= 1;
                if cur[ax] < hi[ax] {
                    cur[ax] += 1;
                    break;
                }
                cur[ax] = lo[ax];
            }
        }
    }
}

/// Local polynomial least squares with a uniform sup-norm window of half-width
/// `bandwidth`, evaluated lazily at query points.
#[derive(Debug, Clone)]
pub struct LocalPolyFit {
    d: usize,
    pts: Vec<f64>,
    vals: Vec<f64>,
    degree: usize,
    bandwidth: f64,
    index: GridIndex,
}

const WIDEN: f64 = 1.5;
const MAX_WIDEN: usize = 3;

pub fn fit_local_polynomial(train: &Dataset, target: Target, degree: usize, bandwidth: f64) -> Result<LocalPolyFit> {
    if !(bandwidth > 0.0) {
        return Err(Error::config("bandwidth must be positive"));
    }
    let d = train.d;
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for i in 0..train.len() {
        let (keep, v) = match target {
            Target::Propensity => (true, train.a[i] as f64),
            Target::ControlOutcome => (train.a[i] == 0, train.y[i]),
            Target::Outcome => (true, train.y[i]),
        };
        if keep {
            pts.extend_from_slice(train.x(i));
            vals.push(v);
        }
    }
    let index = GridIndex::build(&pts, d, bandwidth);
    Ok(LocalPolyFit {
        d,
        pts,
        vals,
        degree,
        bandwidth,
        index,
    })
}

impl LocalPolyFit {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_points(&self) -> usize {
        self.vals.len()
    }

    fn try_fit(&self, x: &[f64], degree: usize, r: f64, scratch: &mut Vec<u32>) -> Option<f64> {
        self.index.query(&self.pts, x, r, scratch);
        let basis = TensorBasis::new(self.d, degree).ok()?;
        let q = basis.q();
        if scratch.len() < q {
            return None;
        }
        let mut g = DMatrix::<f64>::zeros(q, q);
        let mut rhs = DVector::<f64>::zeros(q);
        let mut phi = vec![0.0; q];
        let mut v = vec![0.0; self.d];
        for &i in scratch.iter() {
            let p = &self.pts[i as usize * self.d..(i as usize + 1) * self.d];
            for ((vj, pj), xj) in v.iter_mut().zip(p).zip(x) {
                *vj = (0.5 + (pj - xj) / (2.0 * r)).clamp(0.0, 1.0);
            }
            basis.eval_into(&v, &mut phi);
            let y = self.vals[i as usize];
            for a in 0..q {
                rhs[a] += phi[a] * y;
                for b in 0..=a {
                    g[(a, b)] += phi[a] * phi[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                g[(b, a)] = g[(a, b)];
            }
        }
        let m = scratch.len() as f64;
        let eig = g.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lmin > 1e-10 * m) {
            return None;
        }
        let beta = g.cholesky()?.solve(&rhs);
        let mid = vec![0.5; self.d];
        basis.eval_into(&mid, &mut phi);
        Some(phi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
    }
}

impl Regression for LocalPolyFit {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut scratch = Vec::new();
        let reduced = self.degree.saturating_sub(1);
        if let Some(v) = self.try_fit(x, self.degree, self.bandwidth, &mut scratch) {
            return Ok(v);
        }
        let mut r = self.bandwidth;
        if reduced != self.degree {
            if let Some(v) = self.try_fit(x, reduced, r, &mut scratch) {
                return Ok(v);
            }
        }
        for _ in 0..MAX_WIDEN {
            r *= WIDEN;
            if let Some(v) = self.try_fit(x, reduced, r, &mut scratch) {
                return Ok(v);
            }
        }
        Err(Error::Degenerate(format!(
            "local design singular at x = {x:?} after widening to {r:.4}"
        )))
    }
}

/// Piecewise-constant density: `j^d` equal cells on the window plus one
/// constant value on the rest of `[0,1]^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramDensity {
    pub frame: LocalizedFrame,
    pub cells_per_axis: usize,
    pub cell_density: Vec<f64>,
    pub outside_density: f64,
}

impl HistogramDensity {
    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if !self.frame.contains(x) {
            return None;
        }
        let j = self.cells_per_axis;
        let mut v = vec![0.0; x.len()];
        self.frame.stretch(x, &mut v);
        let mut id = 0;
        for vi in v {
            id = id * j + ((vi * j as f64).floor() as usize).min(j - 1);
        }
        Some(id)
    }
}

impl CovariateDensity for HistogramDensity {
    fn d(&self) -> usize {
        self.frame.d()
    }
    fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        match self.cell_of(x) {
            Some(c) => self.cell_density[c],
            None => self.outside_density,
        }
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let j = self.cells_per_axis;
        let lo = self.frame.x0[axis] - 0.5 * self.frame.h;
        (0..=j)
            .map(|i| lo + self.frame.h * i as f64 / j as f64)
            .collect()
    }
}

#[derive(Clone)]
pub enum CovariateMode {
    Known(Arc<dyn CovariateDensity>),
    Histogram { cells_per_axis: usize },
}

/// Known density, or a Laplace-smoothed histogram on the window cells.
pub fn fit_covariate_distribution(
    train: &Dataset,
    mode: &CovariateMode,
    frame: &LocalizedFrame,
) -> Result<Arc<dyn CovariateDensity>> {
    match mode {
        CovariateMode::Known(f) => Ok(f.clone()),
        CovariateMode::Histogram { cells_per_axis } => {
            let j = *cells_per_axis;
            if j == 0 {
                return Err(Error::config("histogram needs at least one cell per axis"));
            }
            let d = frame.d();
            let total = j.pow(d as u32);
            let proto = HistogramDensity {
                frame: frame.clone(),
                cells_per_axis: j,
                cell_density: vec![0.0; total],
                outside_density: 0.0,
            };
            let mut counts = vec![0usize; total];
            let mut outside = 0usize;
            for i in 0..train.len() {
                match proto.cell_of(train.x(i)) {
                    Some(c) => counts[c] += 1,
                    None => outside += 1,
                }
            }
            let inside: usize = counts.iter().sum();
            if inside == 0 {
                return Err(Error::Degenerate("no training points in the window".into()));
            }
            // cell volumes clipped to the unit cube
            let side = frame.h / j as f64;
            let mut vols = vec![0.0; total];
            let mut window_vol = 0.0;
            for (c, vol) in vols.iter_mut().enumerate() {
                let mut rem = c;
                let mut v = 1.0;
                for ax in (0..d).rev() {
                    let i = rem % j;
                    rem /= j;
                    let lo = frame.x0[ax] - 0.5 * frame.h + side * i as f64;
                    let hi = lo + side;
                    v *= (hi.min(1.0) - lo.max(0.0)).max(0.0);
                }
                *vol = v;
                window_vol += v;
            }
            let outside_vol = (1.0 - window_vol).max(0.0);
            let live_cells = vols.iter().filter(|&&v| v > 0.0).count();
            let has_out = outside_vol > 1e-12;
            let denom = train.len() as f64 + live_cells as f64 + if has_out { 1.0 } else { 0.0 };
            let mut dens = proto;
            for c in 0..total {
                if vols[c] > 0.0 {
                    dens.cell_density[c] = (counts[c] as f64 + 1.0) / denom / vols[c];
                }
            }
            let mut mass: f64 = (0..total)
                .filter(|&c| vols[c] > 0.0)
                .map(|c| dens.cell_density[c] * vols[c])
                .sum();
            if has_out {
                dens.outside_density = (outside as f64 + 1.0) / denom / outside_vol;
                mass += dens.outside_density * outside_vol;
            }
            // points outside the window with no outside region fold into the cells
            for v in dens.cell_density.iter_mut() {
                *v /= mass;
            }
            dens.outside_density /= mass;
            Ok(Arc::new(dens))
        }
    }
}

/// Fitted nuisance functions, tagged by which outcome regression is held.
#[derive(Clone)]
pub struct NuisanceFit {
    pub propensity: Arc<dyn Regression>,
    /// `mu0` or `eta`, per `parametrization`.
    pub outcome: Arc<dyn Regression>,
    pub parametrization: Parametrization,
    pub covariate: Arc<dyn CovariateDensity>,
    pub clip: f64,
    pub meta: NuisanceMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NuisanceMeta {
    pub pi_degree: Option<usize>,
    pub pi_bandwidth: Option<f64>,
    pub outcome_degree: Option<usize>,
    pub outcome_bandwidth: Option<f64>,
    pub covariate: String,
}

pub const DEFAULT_CLIP: f64 = 0.01;

impl NuisanceFit {
    /// Plug-in nuisances from closed-form functions. No clipping.
    pub fn known<P, O>(pi: P, outcome: O, parametrization: Parametrization, covariate: Arc<dyn CovariateDensity>) -> Self
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        O: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        NuisanceFit {
            propensity: Arc::new(FnRegression(pi)),
            outcome: Arc::new(FnRegression(outcome)),
            parametrization,
            covariate,
            clip: 0.0,
            meta: NuisanceMeta {
                covariate: "known".into(),
                ..Default::default()
            },
        }
    }

    /// Propensity clipped into `[clip, 1 - clip]`.
    pub fn pi(&self, x: &[f64]) -> Result<f64> {
        Ok(self.propensity.predict(x)?.clamp(self.clip, 1.0 - self.clip))
    }

    pub fn outcome(&self, x: &[f64]) -> Result<f64> {
        self.outcome.predict(x)
    }
}

/// How nuisances are estimated from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSpec {
    /// Declared smoothness of the propensity score.
    pub pi_smoothness: f64,
    /// Declared smoothness of the outcome regression.
    pub outcome_smoothness: f64,
    #[serde(default)]
    pub pi_degree: Option<usize>,
    #[serde(default)]
    pub pi_bandwidth: Option<f64>,
    #[serde(default)]
    pub outcome_degree: Option<usize>,
    #[serde(default)]
    pub outcome_bandwidth: Option<f64>,
    #[serde(default)]
    pub covariate: CovariateSpec,
    #[serde(default = "default_clip")]
    pub clip: f64,
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    #[default]
    Uniform,
    Histogram { cells_per_axis: usize },
}

/// `n^{-1/(2 s + d)}`.
pub fn default_bandwidth(n: usize, smoothness: f64, d: usize) -> f64 {
    (n.max(1) as f64).powf(-1.0 / (2.0 * smoothness + d as f64))
}

/// Fits both regressions and the covariate distribution on `train`.
pub fn fit_nuisances(
    train: &Dataset,
    spec: &NuisanceSpec,
    param: Parametrization,
    frame: &LocalizedFrame,
) -> Result<NuisanceFit> {
    let d = train.d;
    let n = train.len();
    let pi_deg = spec.pi_degree.unwrap_or_else(|| crate::basis::strict_floor(spec.pi_smoothness));
    let pi_bw = spec
        .pi_bandwidth
        .unwrap_or_else(|| default_bandwidth(n, spec.pi_smoothness, d));
    let target = match param {
        Parametrization::Mu0 => Target::ControlOutcome,
        Parametrization::Eta => Target::Outcome,
    };
    let n_out = match target {
        Target::ControlOutcome => train.a.iter().filter(|&&a| a == 0).count(),
        _ => n,
    };
    let out_deg = spec
        .outcome_degree
        .unwrap_or_else(|| crate::basis::strict_floor(spec.outcome_smoothness));
    let out_bw = spec
        .outcome_bandwidth
        .unwrap_or_else(|| default_bandwidth(n_out, spec.outcome_smoothness, d));
    let propensity = fit_local_polynomial(train, Target::Propensity, pi_deg, pi_bw)?;
    let outcome = fit_local_polynomial(train, target, out_deg, out_bw)?;
    let mode = match spec.covariate {
        CovariateSpec::Uniform => CovariateMode::Known(Arc::new(UniformDensity { d })),
        CovariateSpec::Histogram { cells_per_axis } => CovariateMode::Histogram { cells_per_axis },
    };
    let covariate = fit_covariate_distribution(train, &mode, frame)?;
    Ok(NuisanceFit {
        propensity: Arc::new(propensity),
        outcome: Arc::new(outcome),
        parametrization: param,
        covariate,
        clip: spec.clip,
        meta: NuisanceMeta {
            pi_degree: Some(pi_deg),
            pi_bandwidth: Some(pi_bw),
            outcome_degree: Some(out_deg),
            outcome_bandwidth: Some(out_bw),
            covariate: format!("{:?}", spec.covariate),
        },
    })
}

/// Error norms under the stretched window distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbe {
    pub pi_l2: f64,
    pub outcome_l2: f64,
    /// `sup |f_hat / f - 1|` over the window grid.
    pub density_ratio_sup: f64,
}

/// `||pi_hat - pi||`, `||outcome_hat - outcome||` in `L2(F*)` and the density-ratio error.
pub fn nuisance_error_probe(
    fit: &NuisanceFit,
    true_pi: &dyn Fn(&[f64]) -> f64,
    true_outcome: &dyn Fn(&[f64]) -> f64,
    true_density: &dyn CovariateDensity,
    frame: &LocalizedFrame,
    order: usize,
) -> Result<ErrorProbe> {
    let d = frame.d();
    let axes: Vec<Rule> = (0..d).map(|_| Rule::panels(order.max(2), 0.0, 1.0, 8, &[])).collect();
    let mut x = vec![0.0; d];
    let mut err = None;
    let mut sq = |v: &[f64], which: u8| -> f64 {
        frame.unstretch(v, &mut x);
        let w = true_density.density(&x);
        if w == 0.0 {
            return 0.0;
        }
        let diff = if which == 0 {
            fit.pi(&x).map(|p| p - true_pi(&x))
        } else {
            fit.outcome(&x).map(|p| p - true_outcome(&x))
        };
        match diff {
            Ok(e) => e * e * w,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    let pi_l2 = tensor_integrate(&axes, |v| sq(v, 0)).sqrt();
    let outcome_l2 = tensor_integrate(&axes, |v| sq(v, 1)).sqrt();
    if let Some(e) = err {
        return Err(e);
    }
    let mut sup: f64 = 0.0;
    let mut xx = vec![0.0; d];
    crate::quadrature::tensor_for_each(&axes, |v, _| {
        frame.unstretch(v, &mut xx);
        let f = true_density.density(&xx);
        if f > 0.0 {
            sup = sup.max((fit.covariate.density(&xx) / f - 1.0).abs());
        }
    });
    Ok(ErrorProbe {
        pi_l2,
        outcome_l2,
        density_ratio_sup: sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_seeded() {
        let a = split(10, 0.5, 3).unwrap();
        assert_eq!(a.train.len(), 5);
        assert_eq!(a.estimation.len(), 5);
        assert!(a.train.iter().all(|i| !a.estimation.contains(i)));
        assert_eq!(a, split(10, 0.5, 3).unwrap());
        assert!(split(1, 0.5, 0).is_err());
    }
}
