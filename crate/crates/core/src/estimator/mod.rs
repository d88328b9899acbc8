//! Second-order local polynomial R-learner.

pub mod omega;
pub mod projection;
pub mod tuning;
pub mod ustat;

pub use omega::{omega_hat, OmegaDiagnostics, OmegaFactor};
pub use projection::{projection_oracle, Projection};
pub use tuning::{tuning_rule, Tuning};
pub use ustat::{QSlot, WindowTerms};

use crate::basis::{Basis, LocalizedFrame, PiecewiseCubeBasis, TensorBasis};
use crate::construction::Parametrization;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{fit_nuisances, split, NuisanceFit, NuisanceSpec};
use crate::par;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Basis used for the second-order projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SecondBasis {
    /// Tensor Legendre polynomials of total degree `degree` on the window.
    Legendre { degree: usize },
    /// `per_axis^d` equal cubes, each carrying Legendre terms up to `degree`.
    Cubes {
        per_axis: usize,
        #[serde(default)]
        degree: usize,
    },
}

impl SecondBasis {
    /// Degree-0 cubes with about `k` cells in total.
    pub fn cubes_for_k(k: f64, d: usize) -> Self {
        SecondBasis::Cubes {
            per_axis: tuning::cubes_per_axis(k, d),
            degree: 0,
        }
    }

    pub fn build(&self, d: usize) -> Result<Box<dyn Basis>> {
        Ok(match *self {
            SecondBasis::Legendre { degree } => Box::new(TensorBasis::new(d, degree)?),
            SecondBasis::Cubes { per_axis, degree } => {
                Box::new(PiecewiseCubeBasis::grid(d, per_axis, degree)?)
            }
        })
    }
}

fn default_eigen_floor() -> f64 {
    1e-8
}

fn default_extra_order() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub parametrization: Parametrization,
    pub x0: Vec<f64>,
    pub h: f64,
    /// CATE smoothness; `rho` has total degree `strict_floor(gamma)`.
    pub gamma: f64,
    pub second_basis: SecondBasis,
    #[serde(default = "default_eigen_floor")]
    pub eigen_floor: f64,
    #[serde(default)]
    pub q_slot: QSlot,
    /// Extra Gauss points per panel when integrating `Omega_hat`.
    #[serde(default = "default_extra_order")]
    pub omega_extra_order: usize,
    /// Optional post-hoc clipping of `tau_hat`.
    #[serde(default)]
    pub clip_range: Option<(f64, f64)>,
}

impl EstimatorConfig {
    pub fn new(parametrization: Parametrization, x0: Vec<f64>, h: f64, gamma: f64, second_basis: SecondBasis) -> Self {
        EstimatorConfig {
            parametrization,
            x0,
            h,
            gamma,
            second_basis,
            eigen_floor: default_eigen_floor(),
            q_slot: QSlot::default(),
            omega_extra_order: default_extra_order(),
            clip_range: None,
        }
    }

    pub fn frame(&self) -> Result<LocalizedFrame> {
        LocalizedFrame::new(self.x0.clone(), self.h)
    }

    pub fn rho_basis(&self) -> Result<TensorBasis> {
        TensorBasis::for_smoothness(self.x0.len(), self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame()?;
        self.rho_basis()?;
        if !(self.eigen_floor >= 0.0) {
            return Err(Error::config("eigen_floor must be non-negative"));
        }
        if let Some((lo, hi)) = self.clip_range {
            if !(lo < hi) {
                return Err(Error::config("clip_range must have lo < hi"));
            }
        }
        Ok(())
    }
}

/// Output of one fit. Matrices are stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub tau_hat: f64,
    /// Before optional clipping.
    pub tau_hat_raw: f64,
    /// Same data with the second-order terms dropped; `None` if that system is singular.
    pub tau_hat_first_order: Option<f64>,
    pub theta: Vec<f64>,
    pub q_hat: Vec<Vec<f64>>,
    pub r_hat: Vec<f64>,
    pub q1: Vec<Vec<f64>>,
    pub r1: Vec<f64>,
    pub q2: Vec<Vec<f64>>,
    pub r2: Vec<f64>,
    pub q_sigma_min: f64,
    pub q_sigma_floor: f64,
    pub omega: OmegaDiagnostics,
    pub window_count: usize,
    pub pair_count: u64,
    pub n_estimation: usize,
    pub q: usize,
    pub config: EstimatorConfig,
}

impl FitResult {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.q_hat)
    }

    /// `rho(1/2)^T Q^{-1} R` from the stored matrices.
    pub fn recompute_tau(&self) -> Result<f64> {
        let (theta, _, _) = guarded_solve(&self.q_matrix(), &DVector::from_vec(self.r_hat.clone()), 0.0)?;
        Ok(tau_from_theta(&self.config.rho_basis()?, theta.as_slice()))
    }

    /// `R_hat - Q_hat theta`.
    pub fn moment(&self, theta: &[f64]) -> Vec<f64> {
        moment(&self.q_matrix(), &DVector::from_vec(self.r_hat.clone()), theta)
    }
}

/// `R_hat - Q_hat theta` for an assembly.
pub fn moment_of(asm: &Assembly, theta: &[f64]) -> Vec<f64> {
    moment(&asm.q_hat(), &asm.r_hat(), theta)
}

pub(crate) fn moment(q: &DMatrix<f64>, r: &DVector<f64>, theta: &[f64]) -> Vec<f64> {
    let th = DVector::from_column_slice(theta);
    (r - q * th).iter().copied().collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> DMatrix<f64> {
    let n = r.len();
    DMatrix::from_fn(n, n, |i, j| r[i][j])
}

fn tau_from_theta(rho: &TensorBasis, theta: &[f64]) -> f64 {
    let mut e = vec![0.0; rho.q()];
    rho.eval_into(&vec![0.5; rho.d()], &mut e);
    e.iter().zip(theta).map(|(a, b)| a * b).sum()
}

/// LU solve, refused when the smallest singular value is below
/// `floor_rel * sum|Q_ii| / q`.
pub fn guarded_solve(q: &DMatrix<f64>, r: &DVector<f64>, floor_rel: f64) -> Result<(DVector<f64>, f64, f64)> {
    let n = q.nrows();
    let scale = q.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64;
    let floor = floor_rel * scale;
    let sv = q.clone().singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > floor) || !(scale > 0.0) || !smin.is_finite() {
        return Err(Error::Singular {
            what: "Q",
            value: smin,
            floor,
        });
    }
    let sol = q.clone().lu().solve(r).ok_or(Error::Singular {
        what: "Q",
        value: smin,
        floor,
    })?;
    Ok((sol, smin, floor))
}

/// Evaluates nuisances and basis quantities at every estimation point in the window.
pub fn prepare_window(est: &Dataset, nuis: &NuisanceFit, cfg: &EstimatorConfig) -> Result<WindowTerms> {
    let frame = cfg.frame()?;
    let rho = cfg.rho_basis()?;
    let d = frame.d();
    if est.d != d {
        return Err(Error::DimensionMismatch { expected: d, got: est.d });
    }
    let q = rho.q();
    let kw = frame.h.powi(-(d as i32));
    let param = cfg.parametrization;
    let rows: Vec<Result<Option<[f64; 6]>>> = par::map_range(est.len(), |i| {
        let x = est.x(i);
        if !frame.contains(x) {
            return Ok(None);
        }
        let a = est.a[i] as f64;
        let y = est.y[i];
        let pi = nuis.pi(x)?;
        let out = nuis.outcome(x)?;
        let ra = a - pi;
        let (phi_a1, w) = match param {
            Parametrization::Mu0 => (a * ra, a),
            Parametrization::Eta => (ra * ra, ra),
        };
        let r = y - out;
        Ok(Some([ra, phi_a1, r * ra, w, r, i as f64]))
    });
    let mut t = WindowTerms {
        n: est.len(),
        d,
        q,
        ..Default::default()
    };
    let mut v = vec![0.0; d];
    let mut rv = vec![0.0; q];
    for row in rows {
        let Some([ra, pa, py, w, r, i]) = row? else {
            continue;
        };
        frame.stretch(est.x(i as usize), &mut v);
        rho.eval_into(&v, &mut rv);
        t.v.extend_from_slice(&v);
        t.rho.extend_from_slice(&rv);
        t.kw.push(kw);
        t.ra.push(ra);
        t.phi_a1.push(pa);
        t.phi_y1.push(py);
        t.w.push(w);
        t.r.push(r);
    }
    Ok(t)
}

/// `P_n[rho K phi_a1 rho^T]` and `P_n[rho K phi_y1]`.
pub fn assemble_first_order(t: &WindowTerms) -> (DMatrix<f64>, DVector<f64>) {
    let q = t.q;
    let mut qm = DMatrix::zeros(q, q);
    let mut rv = DVector::zeros(q);
    for i in 0..t.m() {
        let rho = &t.rho[i * q..(i + 1) * q];
        let ga = t.kw[i] * t.phi_a1[i];
        let gy = t.kw[i] * t.phi_y1[i];
        for a in 0..q {
            rv[a] += gy * rho[a];
            for b in 0..q {
                qm[(a, b)] += ga * rho[a] * rho[b];
            }
        }
    }
    let n = t.n.max(1) as f64;
    (qm / n, rv / n)
}

/// Blocked second-order terms; needs at least two estimation points.
pub fn assemble_second_order(
    t: &WindowTerms,
    basis: &dyn Basis,
    omega: &OmegaFactor,
    slot: QSlot,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if t.n < 2 {
        return Err(Error::config("second-order terms need at least two estimation points"));
    }
    Ok(ustat::second_order_blocked(t, basis, omega, slot))
}

/// Direct double loop over all ordered pairs with a dense `Omega^{-1}`.
/// Quadratic in `n`; meant as a reference for small samples.
pub fn assemble_second_order_naive(
    est: &Dataset,
    nuis: &NuisanceFit,
    cfg: &EstimatorConfig,
    basis: &dyn Basis,
    omega_inv: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let frame = cfg.frame()?;
    let rho = cfg.rho_basis()?;
    let n = est.len();
    if n < 2 {
        return Err(Error::config("second-order terms need at least two estimation points"));
    }
    let q = rho.q();
    let mut rho_all = Vec::with_capacity(n);
    let mut b_all = Vec::with_capacity(n);
    let mut k_all = Vec::with_capacity(n);
    let mut pi_all = Vec::with_capacity(n);
    let mut out_all = Vec::with_capacity(n);
    for i in 0..n {
        let x = est.x(i);
        rho_all.push(DVector::from_vec(frame.eval_localized(&rho, x)?));
        b_all.push(DVector::from_vec(frame.eval_localized(basis, x)?));
        k_all.push(frame.kernel_weight(x));
        pi_all.push(nuis.pi(x)?);
        out_all.push(nuis.outcome(x)?);
    }
    let mut q2 = DMatrix::zeros(q, q);
    let mut r2 = DVector::zeros(q);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let kern = (b_all[i].transpose() * omega_inv * &b_all[j])[(0, 0)];
            let left = (est.a[i] as f64 - pi_all[i]) * k_all[i] * k_all[j] * kern;
            let aj = est.a[j] as f64;
            let phi_a2 = match cfg.parametrization {
                Parametrization::Mu0 => -left * aj,
                Parametrization::Eta => -left * (aj - pi_all[j]),
            };
            let phi_y2 = -left * (est.y[j] - out_all[j]);
            let right = match cfg.q_slot {
                QSlot::Partner => &rho_all[j],
                QSlot::Anchor => &rho_all[i],
            };
            q2 += &rho_all[i] * right.transpose() * phi_a2;
            r2 += &rho_all[i] * phi_y2;
        }
    }
    let norm = 1.0 / (n as f64 * (n as f64 - 1.0));
    Ok((q2 * norm, r2 * norm))
}

/// All pieces of `Q_hat` and `R_hat` before the solve.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub terms: WindowTerms,
    pub omega: OmegaFactor,
    pub q1: DMatrix<f64>,
    pub r1: DVector<f64>,
    pub q2: DMatrix<f64>,
    pub r2: DVector<f64>,
}

impl Assembly {
    pub fn q_hat(&self) -> DMatrix<f64> {
        &self.q1 + &self.q2
    }

    pub fn r_hat(&self) -> DVector<f64> {
        &self.r1 + &self.r2
    }
}

pub fn assemble(est: &Dataset, nuis: &NuisanceFit, cfg: &EstimatorConfig) -> Result<Assembly> {
    cfg.validate()?;
    let frame = cfg.frame()?;
    let basis = cfg.second_basis.build(frame.d())?;
    let omega = omega_hat(
        basis.as_ref(),
        nuis.covariate.as_ref(),
        &frame,
        cfg.omega_extra_order,
        cfg.eigen_floor,
    )?;
    let terms = prepare_window(est, nuis, cfg)?;
    let (q1, r1) = assemble_first_order(&terms);
    let (q2, r2) = assemble_second_order(&terms, basis.as_ref(), &omega, cfg.q_slot)?;
    Ok(Assembly {
        terms,
        omega,
        q1,
        r1,
        q2,
        r2,
    })
}

/// Fits on `est` with nuisances already estimated elsewhere.
pub fn estimate_with_nuisance(est: &Dataset, nuis: &NuisanceFit, cfg: &EstimatorConfig) -> Result<FitResult> {
    let asm = assemble(est, nuis, cfg)?;
    let m = asm.terms.m();
    if m == 0 {
        return Err(Error::Degenerate("no estimation points in the window".into()));
    }
    let rho = cfg.rho_basis()?;
    let q_hat = asm.q_hat();
    let r_hat = asm.r_hat();
    let (theta, smin, floor) = guarded_solve(&q_hat, &r_hat, cfg.eigen_floor)?;
    if m < rho.q() {
        return Err(Error::Singular {
            what: "Q",
            value: smin,
            floor,
        });
    }
    let raw = tau_from_theta(&rho, theta.as_slice());
    let tau_hat = match cfg.clip_range {
        Some((lo, hi)) => raw.clamp(lo, hi),
        None => raw,
    };
    let first = guarded_solve(&asm.q1, &asm.r1, cfg.eigen_floor)
        .ok()
        .map(|(th, _, _)| tau_from_theta(&rho, th.as_slice()));
    Ok(FitResult {
        tau_hat,
        tau_hat_raw: raw,
        tau_hat_first_order: first,
        theta: theta.iter().copied().collect(),
        q_hat: rows(&q_hat),
        r_hat: r_hat.iter().copied().collect(),
        q1: rows(&asm.q1),
        r1: asm.r1.iter().copied().collect(),
        q2: rows(&asm.q2),
        r2: asm.r2.iter().copied().collect(),
        q_sigma_min: smin,
        q_sigma_floor: floor,
        omega: asm.omega.diagnostics.clone(),
        window_count: m,
        pair_count: (m as u64) * (m as u64).saturating_sub(1),
        n_estimation: est.len(),
        q: rho.q(),
        config: cfg.clone(),
    })
}

/// Splits `data`, fits nuisances on the training part and estimates on the rest.
pub fn estimate_cate(
    data: &Dataset,
    spec: &NuisanceSpec,
    cfg: &EstimatorConfig,
    train_fraction: f64,
    seed: u64,
) -> Result<FitResult> {
    cfg.validate()?;
    let plan = split(data.len(), train_fraction, seed)?;
    let train = data.subset(&plan.train);
    let est = data.subset(&plan.estimation);
    let nuis = fit_nuisances(&train, spec, cfg.parametrization, &cfg.frame()?)?;
    estimate_with_nuisance(&est, &nuis, cfg)
}
