//! One line per acceptance criterion; exits non-zero if any fails.
//! `ACCEPTANCE_ONLY=8,11` restricts the run to the listed criteria.

use cate_rates::checks::{self, CheckOutcome};
use cate_rates::construction::Parametrization;
use cate_rates::harness::{
    run_rate_sweep, DgpSpec, EstimatorTemplate, ExperimentConfig, NuisanceMode, Scenario, SmoothDgp, Verdict,
};
use std::time::Instant;

const SEED: u64 = 20240917;

fn slope_scenarios() -> ExperimentConfig {
    let high = SmoothDgp::new(1, 2.0, 2.0, 1.0, vec![0.5]);
    let mut low = SmoothDgp::new(1, 0.1, 0.1, 1.0, vec![0.5]);
    low.salt = 3;
    ExperimentConfig {
        name: "slopes".into(),
        seed: SEED,
        n_grid: vec![1000, 2000, 4000, 8000, 16000, 32000],
        replications: 200,
        train_fraction: 0.5,
        band: 0.15,
        scenarios: vec![
            Scenario {
                name: "high_smoothness".into(),
                dgp: DgpSpec::Smooth(high),
                estimator: EstimatorTemplate::default(),
                nuisance: NuisanceMode::default(),
            },
            Scenario {
                name: "low_smoothness".into(),
                dgp: DgpSpec::Smooth(low),
                estimator: EstimatorTemplate {
                    parametrization: Parametrization::Mu0,
                    ..Default::default()
                },
                nuisance: NuisanceMode::default(),
            },
        ],
    }
}

fn slope_check() -> CheckOutcome {
    let cfg = slope_scenarios();
    let rep = match run_rate_sweep(&cfg, 0) {
        Ok(r) => r,
        Err(e) => {
            return CheckOutcome {
                name: "slope".into(),
                passed: false,
                detail: format!("error: {e}"),
            }
        }
    };
    let hi = &rep.summaries[0];
    let lo = &rep.summaries[1];
    let fmt = |s: Option<cate_rates::harness::SlopeFit>| {
        s.map(|f| format!("{:.3}+-{:.3}", f.slope, f.slope_se)).unwrap_or_else(|| "n/a".into())
    };
    let hi_ok = hi.verdict == Verdict::Pass;
    let lo_ok = match (lo.slope, lo.slope_first_order) {
        (Some(a), Some(b)) => a.slope < b.slope,
        _ => false,
    };
    let maes: Vec<String> = rep
        .aggregates
        .iter()
        .map(|a| {
            format!(
                "{}@{}: {:.4}/{:.4}",
                a.scenario,
                a.n,
                a.mae.unwrap_or(f64::NAN),
                a.mae_first_order.unwrap_or(f64::NAN)
            )
        })
        .collect();
    CheckOutcome {
        name: "slope".into(),
        passed: hi_ok && lo_ok,
        detail: format!(
            "high: slope {} vs reference {:.3} ({:?}); low: slope {} vs first-order {}; mae second/first {}",
            fmt(hi.slope),
            -hi.theoretical_exponent,
            hi.verdict,
            fmt(lo.slope),
            fmt(lo.slope_first_order),
            maes.join(", ")
        ),
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> CheckOutcome>)> = vec![
        (1, "basis orthonormality", Box::new(|| checks::orthonormality(3, 4))),
        (2, "polynomial reproduction", Box::new(|| checks::polynomial_reproduction(20, SEED))),
        (3, "construction validity", Box::new(|| checks::construction_validity(SEED))),
        (4, "delta3 identity", Box::new(|| checks::delta3_identity(1000))),
        (5, "hellinger arithmetic", Box::new(checks::hellinger_arithmetic)),
        (6, "rate exponent table", Box::new(|| checks::exponent_table(100))),
        (7, "u-statistic oracle equivalence", Box::new(|| checks::ustat_equivalence(50, SEED))),
        (8, "known-nuisance unbiasedness", Box::new(|| checks::known_nuisance_unbiasedness(2000, 2000, SEED))),
        (9, "exact recovery", Box::new(|| checks::exact_recovery(SEED))),
        (10, "debiasing direction", Box::new(|| checks::debiasing_direction(5000, 1000, 64, 0.2, SEED).0)),
        (11, "slope check", Box::new(slope_check)),
        (12, "determinism", Box::new(|| checks::determinism(5, SEED))),
    ];
    let mut failed = 0;
    for (id, label, run) in criteria {
        if let Some(o) = &only {
            if !o.contains(&id) {
                continue;
            }
        }
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        if !out.passed {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {label} [{secs:.1}s]: {}",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
