use cate_rates::checks;
use cate_rates::construction::{couple_for_regime, Coupling, LowerBoundConfig, Regime};
use cate_rates::data::Dataset;
use cate_rates::estimator::{estimate_cate, EstimatorConfig, FitResult};
use cate_rates::harness::{self, report, ExperimentConfig, Format, RateReport, SmoothDgp};
use cate_rates::hellinger::{self, DeltaComponents, HellingerBound, RateRegime};
use cate_rates::nuisance::NuisanceSpec;
use cate_rates::par::with_workers;
use cate_rates::Error;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cate-rates", version, about = "Local CATE estimation, lower-bound constructions and rate sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one dataset and print the estimate.
    Estimate,
    /// Run a Monte Carlo rate sweep.
    Sweep,
    /// Distances, Hellinger bound and coupled tuning for a construction.
    Lowerbound,
    /// Run the quick property suite.
    Check,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Simulate {
    n: usize,
    dgp: SmoothDgp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateFile {
    /// CSV with columns `x_1..x_d,a,y`; relative to the config file.
    data: Option<PathBuf>,
    simulate: Option<Simulate>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "half")]
    train_fraction: f64,
    estimator: EstimatorConfig,
    nuisance: NuisanceSpec,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LowerBoundFile {
    regime: Regime,
    alpha: f64,
    beta: f64,
    gamma: f64,
    d: usize,
    x0: Vec<f64>,
    #[serde(default = "default_eps")]
    eps: f64,
    /// Required unless `couple = true`.
    h: Option<f64>,
    k: Option<usize>,
    /// Sample size for the Hellinger bound; with `couple = true` it also picks `(h, k)`.
    n: f64,
    #[serde(default)]
    couple: bool,
    /// Constant of the general mixture bound.
    #[serde(default = "one")]
    c: f64,
    /// Overrides the coupling constant derived from `c`.
    c_star: Option<f64>,
    #[serde(default = "one")]
    b_hyp: f64,
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    0.05
}

#[derive(Debug, Serialize)]
struct LowerBoundOut {
    config: LowerBoundConfig,
    coupling: Option<Coupling>,
    deltas: DeltaComponents,
    hellinger: HellingerBound,
    rate: RateRegime,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn read_toml<T: for<'de> Deserialize<'de>>(path: Option<&Path>) -> Run<T> {
    let path = path.ok_or_else(|| Failure::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn formats(cli: &Cli, default: &[Format]) -> Run<Vec<Format>> {
    if cli.format.is_empty() {
        return Ok(default.to_vec());
    }
    cli.format.iter().map(|s| s.parse::<Format>().map_err(Failure::from)).collect()
}

fn write_out(cli: &Cli, name: &str, body: &str) -> Run<()> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Config(e.to_string()))?;
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Failure::Config(e.to_string()))?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Run<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Config(e.to_string()))
}

fn estimate(cli: &Cli) -> Run<()> {
    let cfg_path = cli.config.as_deref();
    let file: EstimateFile = read_toml(cfg_path)?;
    let seed = cli.seed.unwrap_or(file.seed);
    let data = match (&file.data, &file.simulate) {
        (Some(p), None) => {
            let base = cfg_path.and_then(Path::parent).unwrap_or(Path::new("."));
            let p = if p.is_absolute() { p.clone() } else { base.join(p) };
            let f = std::fs::File::open(&p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            Dataset::read_csv(std::io::BufReader::new(f))?
        }
        (None, Some(sim)) => {
            sim.dgp.validate()?;
            sim.dgp.sample(sim.n, harness::child_seed(seed, &[0]))
        }
        _ => return Err(Failure::Config("give exactly one of `data` and `[simulate]`".into())),
    };
    let fmts = formats(cli, &[Format::Json])?;
    let fit: FitResult = with_workers(cli.workers, || {
        estimate_cate(&data, &file.nuisance, &file.estimator, file.train_fraction, seed)
    })?;
    for f in fmts {
        match f {
            Format::Json => write_out(cli, "estimate.json", &json(&fit)?)?,
            Format::Csv => {
                let mut s = String::from("key,value\n");
                s += &format!("tau_hat,{}\n", fit.tau_hat);
                s += &format!(
                    "tau_hat_first_order,{}\n",
                    fit.tau_hat_first_order.map(|v| v.to_string()).unwrap_or_default()
                );
                s += &format!("q_sigma_min,{}\n", fit.q_sigma_min);
                s += &format!("omega_lambda_min,{}\n", fit.omega.lambda_min);
                s += &format!("window_count,{}\n", fit.window_count);
                s += &format!("pair_count,{}\n", fit.pair_count);
                write_out(cli, "estimate.csv", &s)?;
            }
            Format::Svg => return Err(Failure::Config("estimate has no svg output".into())),
        }
    }
    Ok(())
}

fn load_experiment(path: Option<&Path>) -> Run<ExperimentConfig> {
    let p = path.ok_or_else(|| Failure::Config("--config is required".into()))?;
    if p.extension().is_some_and(|e| e == "json") {
        // replay from an emitted report
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        let rep: RateReport = report::from_json(&text)?;
        return Ok(rep.config);
    }
    read_toml(Some(p))
}

fn sweep(cli: &Cli) -> Run<()> {
    let mut cfg = load_experiment(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let fmts = formats(cli, &[Format::Csv, Format::Json, Format::Svg])?;
    let rep = harness::run_rate_sweep(&cfg, cli.workers)?;
    for s in &rep.summaries {
        let slope = s.slope.map(|f| format!("{:.3}", f.slope)).unwrap_or_else(|| "n/a".into());
        eprintln!(
            "{}: slope {} reference {:.3} {:?}",
            s.scenario, slope, -s.theoretical_exponent, s.verdict
        );
    }
    match &cli.out {
        Some(dir) => {
            let stem = if cfg.name.is_empty() { "sweep" } else { cfg.name.as_str() };
            for p in report::emit(&rep, dir, stem, &fmts)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", json(&rep)?),
    }
    Ok(())
}

fn lowerbound(cli: &Cli) -> Run<()> {
    let file: LowerBoundFile = read_toml(cli.config.as_deref())?;
    let mut cfg = LowerBoundConfig {
        regime: file.regime,
        alpha: file.alpha,
        beta: file.beta,
        gamma: file.gamma,
        d: file.d,
        h: file.h.unwrap_or(0.0),
        k: file.k.unwrap_or(0),
        x0: file.x0.clone(),
        eps: file.eps,
    };
    let coupling = if file.couple {
        let cs = file
            .c_star
            .unwrap_or_else(|| hellinger::c_star(cfg.d, cfg.gamma, file.c, cfg.eps));
        let c = couple_for_regime(cfg.regime, file.n, cfg.alpha, cfg.beta, cfg.gamma, cfg.d, cs)?;
        if c.k > usize::MAX as f64 {
            return Err(Failure::Config("coupled k does not fit in memory".into()));
        }
        cfg.h = c.h;
        cfg.k = c.k as usize;
        Some(c)
    } else {
        if file.h.is_none() || file.k.is_none() {
            return Err(Failure::Config("set `h` and `k`, or `couple = true`".into()));
        }
        None
    };
    cfg.validate()?;
    let deltas = hellinger::delta_bounds(&cfg)?;
    let bound = hellinger::mixture_hellinger_bound(file.n, &cfg, file.c, file.b_hyp)?;
    let rate = hellinger::minimax_exponent(cfg.alpha, cfg.beta, cfg.gamma, cfg.d, cfg.regime.parametrization());
    let out = LowerBoundOut {
        config: cfg,
        coupling,
        deltas,
        hellinger: bound,
        rate,
    };
    for f in formats(cli, &[Format::Json])? {
        match f {
            Format::Json => write_out(cli, "lowerbound.json", &json(&out)?)?,
            Format::Csv => {
                let mut s = String::from("key,value\n");
                s += &format!("h,{}\nk,{}\n", out.config.h, out.config.k);
                s += &format!("delta1_bound,{}\n", out.deltas.delta1_bound);
                s += &format!("delta2_bound,{}\n", out.deltas.delta2_bound);
                s += &format!("delta3,{}\n", out.deltas.delta3);
                s += &format!("hellinger_bound,{}\n", out.hellinger.value);
                s += &format!("hypothesis_ok,{}\n", out.hellinger.hypothesis_ok);
                s += &format!("exponent,{}\n", out.rate.exponent);
                write_out(cli, "lowerbound.csv", &s)?;
            }
            Format::Svg => return Err(Failure::Config("lowerbound has no svg output".into())),
        }
    }
    Ok(())
}

fn check(cli: &Cli) -> Run<()> {
    let seed = cli.seed.unwrap_or(1);
    let results = with_workers(cli.workers, || checks::quick_suite(seed));
    let mut failed = 0;
    for c in &results {
        println!("{:<4} {:<28} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Config(e.to_string()))?;
        std::fs::write(dir.join("check.json"), json(&results)?).map_err(|e| Failure::Config(e.to_string()))?;
    }
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Estimate => estimate(&cli),
        Cmd::Sweep => sweep(&cli),
        Cmd::Lowerbound => lowerbound(&cli),
        Cmd::Check => check(&cli),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical guard: {m}");
            ExitCode::from(2)
        }
    }
}
