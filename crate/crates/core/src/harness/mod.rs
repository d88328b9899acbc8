//! Seeded Monte Carlo sweeps over sample sizes.

pub mod dgp;
pub mod report;
pub mod svg;

pub use dgp::{child_seed, mix64, ConstructionDgp, MultiScale, SmoothDgp};
pub use report::{emit, Format};

use crate::construction::Parametrization;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_with_nuisance, tuning::cubes_per_axis, tuning_rule, EstimatorConfig, QSlot, SecondBasis,
};
use crate::hellinger::{minimax_exponent, RegimeLabel};
use crate::nuisance::{fit_nuisances, split, CovariateSpec, NuisanceFit, NuisanceSpec, DEFAULT_CLIP};
use crate::par;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpSpec {
    Smooth(SmoothDgp),
    Construction(ConstructionDgp),
}

impl DgpSpec {
    fn smoothness(&self) -> (f64, f64, f64, usize) {
        match self {
            DgpSpec::Smooth(s) => (s.alpha, s.beta, s.gamma, s.d),
            DgpSpec::Construction(c) => (c.config.alpha, c.config.beta, c.config.gamma, c.config.d),
        }
    }

    fn x0(&self) -> &[f64] {
        match self {
            DgpSpec::Smooth(s) => &s.x0,
            DgpSpec::Construction(c) => &c.config.x0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TuningSpec {
    /// Rate-balancing `(h, k)` from the sample size, with cube-grid `b`.
    Rule {
        #[serde(default = "one")]
        c_h: f64,
        #[serde(default = "one")]
        c_k: f64,
        #[serde(default)]
        cube_degree: usize,
    },
    Fixed { h: f64, second_basis: SecondBasis },
}

fn one() -> f64 {
    1.0
}

impl Default for TuningSpec {
    fn default() -> Self {
        TuningSpec::Rule {
            c_h: 1.0,
            c_k: 1.0,
            cube_degree: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorTemplate {
    #[serde(default = "default_param")]
    pub parametrization: Parametrization,
    /// Defaults to the scenario's `gamma`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub tuning: TuningSpec,
    #[serde(default = "default_floor")]
    pub eigen_floor: f64,
    #[serde(default)]
    pub q_slot: QSlot,
    #[serde(default)]
    pub clip_range: Option<(f64, f64)>,
}

fn default_param() -> Parametrization {
    Parametrization::Mu0
}

fn default_floor() -> f64 {
    1e-8
}

impl Default for EstimatorTemplate {
    fn default() -> Self {
        EstimatorTemplate {
            parametrization: default_param(),
            gamma: None,
            tuning: TuningSpec::default(),
            eigen_floor: default_floor(),
            q_slot: QSlot::default(),
            clip_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuisanceMode {
    /// True functions plugged in.
    Known,
    /// True functions shifted by `amplitude * B((x - x0)/(width * h))`.
    Perturbed {
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// Fitted on the training split. With `known_covariate` the true covariate
    /// density replaces whatever `spec` would estimate.
    Estimated {
        #[serde(default)]
        spec: Option<NuisanceSpec>,
        #[serde(default = "yes")]
        known_covariate: bool,
    },
}

fn yes() -> bool {
    true
}

impl Default for NuisanceMode {
    fn default() -> Self {
        NuisanceMode::Estimated {
            spec: None,
            known_covariate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dgp: DgpSpec,
    #[serde(default)]
    pub estimator: EstimatorTemplate,
    #[serde(default)]
    pub nuisance: NuisanceMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    #[serde(default = "half")]
    pub train_fraction: f64,
    /// Half-width of the pass band around the theoretical slope.
    #[serde(default = "default_band")]
    pub band: f64,
    pub scenarios: Vec<Scenario>,
}

fn half() -> f64 {
    0.5
}

fn default_band() -> f64 {
    0.15
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_grid must be non-empty and strictly increasing"));
        }
        if self.n_grid[0] < 4 {
            return Err(Error::config("n_grid entries must be at least 4"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must be in (0, 1)"));
        }
        if !(self.band > 0.0) {
            return Err(Error::config("band must be positive"));
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("scenario names must be unique"));
        }
        for s in &self.scenarios {
            match &s.dgp {
                DgpSpec::Smooth(d) => d.validate()?,
                DgpSpec::Construction(c) => c.config.validate()?,
            }
        }
        Ok(())
    }

    /// Estimator settings for scenario `idx` at sample size `n`.
    pub fn estimator_for(&self, idx: usize, n: usize) -> Result<EstimatorConfig> {
        let sc = &self.scenarios[idx];
        let (alpha, beta, gamma, d) = sc.dgp.smoothness();
        let t = &sc.estimator;
        let gamma_est = t.gamma.unwrap_or(gamma);
        let x0 = sc.dgp.x0().to_vec();
        let (h, second_basis) = match &t.tuning {
            TuningSpec::Rule { c_h, c_k, cube_degree } => {
                let tu = tuning_rule(n as f64, alpha, beta, gamma, d, t.parametrization, *c_h, *c_k);
                // keep the window inside the unit cube
                let room = x0.iter().map(|c| 2.0 * c.min(1.0 - c)).fold(1.0, f64::min);
                let h = tu.h.min(room);
                (
                    h,
                    SecondBasis::Cubes {
                        per_axis: cubes_per_axis(tu.k_real, d),
                        degree: *cube_degree,
                    },
                )
            }
            TuningSpec::Fixed { h, second_basis } => (*h, second_basis.clone()),
        };
        let mut cfg = EstimatorConfig::new(t.parametrization, x0, h, gamma_est, second_basis);
        cfg.eigen_floor = t.eigen_floor;
        cfg.q_slot = t.q_slot;
        cfg.clip_range = t.clip_range;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cell_seed(&self, idx: usize, n: usize, rep: usize) -> u64 {
        let tag = self.scenarios[idx]
            .name
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        child_seed(self.seed, &[tag, n as u64, rep as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// A numerical guard fired; no estimate recorded.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: String,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub h: f64,
    pub k: usize,
    pub status: Status,
    pub tau_true: f64,
    pub tau_hat: Option<f64>,
    pub tau_hat_first_order: Option<f64>,
    pub abs_error: Option<f64>,
    pub abs_error_first_order: Option<f64>,
    pub message: Option<String>,
}

fn default_spec(sc: &Scenario, param: Parametrization) -> NuisanceSpec {
    let (alpha, beta, _, _) = sc.dgp.smoothness();
    NuisanceSpec {
        pi_smoothness: alpha,
        outcome_smoothness: match param {
            Parametrization::Mu0 => beta,
            Parametrization::Eta => alpha.min(beta),
        },
        pi_degree: None,
        pi_bandwidth: None,
        outcome_degree: None,
        outcome_bandwidth: None,
        covariate: CovariateSpec::Uniform,
        clip: DEFAULT_CLIP,
    }
}

/// One Monte Carlo cell. Numerical failures come back as flagged records.
pub fn run_replication(cfg: &ExperimentConfig, idx: usize, n: usize, rep: usize) -> Result<ReplicationRecord> {
    let sc = cfg
        .scenarios
        .get(idx)
        .ok_or_else(|| Error::config(format!("no scenario with index {idx}")))?;
    let est_cfg = cfg.estimator_for(idx, n)?;
    let seed = cfg.cell_seed(idx, n, rep);
    let param = est_cfg.parametrization;
    let frame = est_cfg.frame()?;
    let k = est_cfg.second_basis.build(frame.d())?.dim();

    let (data, tau_true, known): (Dataset, f64, Box<dyn Fn(f64) -> NuisanceFit>) = match &sc.dgp {
        DgpSpec::Smooth(s) => {
            let ds = s.sample(n, seed);
            let s2 = s.clone();
            (ds, s.tau_x0(), Box::new(move |amp| s2.nuisances(param, amp, 1.0)))
        }
        DgpSpec::Construction(c) => {
            let (ds, tau, lam) = c.sample(n, seed)?;
            let c2 = c.clone();
            (ds, tau, Box::new(move |_| c2.nuisances(&lam, param)))
        }
    };
    let covariate = known(0.0).covariate;

    let plan = split(data.len(), cfg.train_fraction, child_seed(seed, &[1]))?;
    let est = data.subset(&plan.estimation);
    let nuis: Result<NuisanceFit> = match &sc.nuisance {
        NuisanceMode::Known => Ok(known(0.0)),
        NuisanceMode::Perturbed { amplitude, width } => match &sc.dgp {
            DgpSpec::Smooth(s) => Ok(s.nuisances(param, *amplitude, width * est_cfg.h)),
            DgpSpec::Construction(_) => {
                return Err(Error::config("perturbed nuisances need a smooth scenario"));
            }
        },
        NuisanceMode::Estimated { spec, known_covariate } => {
            let spec = spec.clone().unwrap_or_else(|| default_spec(sc, param));
            let train = data.subset(&plan.train);
            fit_nuisances(&train, &spec, param, &frame).map(|mut f| {
                if *known_covariate {
                    f.covariate = covariate.clone();
                }
                f
            })
        }
    };
    let fit = nuis.and_then(|nf| estimate_with_nuisance(&est, &nf, &est_cfg));
    let mut rec = ReplicationRecord {
        scenario: sc.name.clone(),
        n,
        rep,
        seed,
        h: est_cfg.h,
        k,
        status: Status::Ok,
        tau_true,
        tau_hat: None,
        tau_hat_first_order: None,
        abs_error: None,
        abs_error_first_order: None,
        message: None,
    };
    match fit {
        Ok(f) => {
            rec.tau_hat = Some(f.tau_hat);
            rec.abs_error = Some((f.tau_hat - tau_true).abs());
            rec.tau_hat_first_order = f.tau_hat_first_order;
            rec.abs_error_first_order = f.tau_hat_first_order.map(|t| (t - tau_true).abs());
        }
        Err(e) if e.is_numerical() => {
            rec.status = Status::Degenerate;
            rec.message = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub n: usize,
    pub n_ok: usize,
    pub n_degenerate: usize,
    pub mae: Option<f64>,
    pub se: Option<f64>,
    pub bias: Option<f64>,
    pub mae_first_order: Option<f64>,
    pub se_first_order: Option<f64>,
    pub bias_first_order: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Error scales as `n^slope`.
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
    /// Too few usable grid points.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    /// Lower-bound rate exponent; the reference slope is its negative.
    pub theoretical_exponent: f64,
    pub regime_label: RegimeLabel,
    pub slope: Option<SlopeFit>,
    pub slope_first_order: Option<SlopeFit>,
    pub band: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    /// The grid, replication count and band are run settings, not derived values.
    pub note: String,
    pub rows: Vec<ReplicationRecord>,
    pub aggregates: Vec<Aggregate>,
    pub summaries: Vec<ScenarioSummary>,
}

/// Least squares of `ln mae` on `ln n`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, e)| *n > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::config(format!(
            "slope fit needs at least 3 positive points, got {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope fit needs distinct sample sizes"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_se = if pts.len() > 2 {
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        points: pts.len(),
    })
}

fn mean_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let se = if v.len() > 1 {
        Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt())
    } else {
        None
    };
    (Some(mean), se)
}

pub fn aggregate(rows: &[ReplicationRecord], scenario: &str, n: usize) -> Aggregate {
    let cell: Vec<&ReplicationRecord> = rows.iter().filter(|r| r.scenario == scenario && r.n == n).collect();
    let err: Vec<f64> = cell.iter().filter_map(|r| r.abs_error).collect();
    let err1: Vec<f64> = cell.iter().filter_map(|r| r.abs_error_first_order).collect();
    let sig: Vec<f64> = cell.iter().filter_map(|r| r.tau_hat.map(|t| t - r.tau_true)).collect();
    let sig1: Vec<f64> = cell
        .iter()
        .filter_map(|r| r.tau_hat_first_order.map(|t| t - r.tau_true))
        .collect();
    let (mae, se) = mean_se(&err);
    let (mae1, se1) = mean_se(&err1);
    Aggregate {
        scenario: scenario.to_string(),
        n,
        n_ok: err.len(),
        n_degenerate: cell.iter().filter(|r| r.status == Status::Degenerate).count(),
        mae,
        se,
        bias: mean_se(&sig).0,
        mae_first_order: mae1,
        se_first_order: se1,
        bias_first_order: mean_se(&sig1).0,
    }
}

/// Summary for one scenario from its aggregates only.
pub fn summarize(cfg: &ExperimentConfig, idx: usize, aggs: &[Aggregate]) -> ScenarioSummary {
    let sc = &cfg.scenarios[idx];
    let (alpha, beta, gamma, d) = sc.dgp.smoothness();
    let reg = minimax_exponent(alpha, beta, gamma, d, sc.estimator.parametrization);
    let mine: Vec<&Aggregate> = aggs.iter().filter(|a| a.scenario == sc.name).collect();
    let pts = |f: fn(&Aggregate) -> Option<f64>| -> Vec<(f64, f64)> {
        mine.iter().filter_map(|a| f(a).map(|e| (a.n as f64, e))).collect()
    };
    let slope = fit_slope(&pts(|a| a.mae)).ok();
    let slope_first_order = fit_slope(&pts(|a| a.mae_first_order)).ok();
    let verdict = match slope {
        None => Verdict::Unavailable,
        Some(s) => {
            let gap = (s.slope + reg.exponent).abs();
            if gap <= cfg.band {
                Verdict::Pass
            } else if gap <= 2.0 * cfg.band {
                Verdict::Warn
            } else {
                Verdict::Fail
            }
        }
    };
    ScenarioSummary {
        scenario: sc.name.clone(),
        theoretical_exponent: reg.exponent,
        regime_label: reg.regime_label,
        slope,
        slope_first_order,
        band: cfg.band,
        verdict,
    }
}

/// Runs every `(scenario, n, rep)` cell on `workers` threads (0 = default pool).
pub fn run_rate_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<RateReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for idx in 0..cfg.scenarios.len() {
        for &n in &cfg.n_grid {
            for rep in 0..cfg.replications {
                cells.push((idx, n, rep));
            }
        }
    }
    let results = par::with_workers(workers, || {
        par::map(&cells, |&(idx, n, rep)| run_replication(cfg, idx, n, rep))
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut aggregates = Vec::new();
    for sc in &cfg.scenarios {
        for &n in &cfg.n_grid {
            aggregates.push(aggregate(&rows, &sc.name, n));
        }
    }
    let summaries = (0..cfg.scenarios.len())
        .map(|i| summarize(cfg, i, &aggregates))
        .collect();
    Ok(RateReport {
        config: cfg.clone(),
        note: "n_grid, replications and band are experiment settings".into(),
        rows,
        aggregates,
        summaries,
    })
}
