//! Command implementations behind the `kpw` binary.
//!
//! Subcommands: `distance`, `test`, `tune`, `convergence`, `power`,
//! `project`. Every command resolves its configuration with the precedence
//! flags > config file > built-in defaults, embeds the fully resolved
//! configuration in a run manifest, and emits newline-terminated JSON on
//! stdout. Experiment tables go to `--csv-out` with the manifest in a
//! leading comment line.
//!
//! Exit codes: 0 success (and "accept the null" for `test`), 1 input or
//! runtime error, 2 solver did not converge (`distance` only), 3 null
//! hypothesis rejected (`test` only).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::inference::{analytic_test, permutation_test};
use crate::kernel::{median_heuristic, KernelParams, SampleSet};
use crate::rng::derive_seed;
use crate::solver::{kpw_distance, SolverConfig, StepRule};
use crate::synthdata::{self, DatasetSpec, Family};
use crate::tuning::{tune, Sigma2Init, TuningConfig};
use crate::{Error, Result};

const DEFAULT_SEED: u64 = 0;
const TRIAL_TAG: u64 = 0x5452_4941;

#[derive(Debug, Parser)]
#[command(
    name = "kpw",
    version,
    about = "Kernel projected Wasserstein distance and two-sample testing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two CSV samples.
    Distance(DistanceArgs),
    /// Two-sample test (analytic or permutation calibration).
    Test(TestArgs),
    /// Kernel hyperparameter tuning by simulated annealing.
    Tune(TuneArgs),
    /// Sample-size convergence table on synthetic data.
    Convergence(ConvergenceArgs),
    /// Test-power table across ambient dimensions.
    Power(PowerArgs),
    /// Export the projected point clouds of the trained discriminator.
    Project(ProjectArgs),
}

/// Flags shared by every subcommand. Unset values fall back to the config
/// file and then to built-in defaults.
#[derive(Debug, Clone, Args, Default)]
pub struct CommonOpts {
    /// Gaussian bandwidth sigma^2 (default: median heuristic).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Output mixing weight rho in [0, 1].
    #[arg(long)]
    pub rho: Option<f64>,
    /// Projected dimension d.
    #[arg(long = "proj-dim")]
    pub proj_dim: Option<usize>,
    /// Entropic regularization weight.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Norm smoothing parameter.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Riemannian gradient tolerance.
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Dual suboptimality tolerance.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Iteration cap for the solver.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Master seed (falls back to KPW_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for trial-parallel commands (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write the JSON document here as well as to stdout.
    #[arg(long = "json-out")]
    pub json_out: Option<PathBuf>,
    /// Write tabular output here (experiment commands).
    #[arg(long = "csv-out")]
    pub csv_out: Option<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// First sample, headerless CSV.
    #[arg(long)]
    pub x: PathBuf,
    /// Second sample, headerless CSV.
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Calibration: "analytic" or "permutation".
    #[arg(long)]
    pub method: Option<String>,
    /// Test level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Permutation count.
    #[arg(long)]
    pub perms: Option<usize>,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Simulated-annealing proposals.
    #[arg(long = "sa-iters")]
    pub sa_iters: Option<usize>,
    /// Bootstrap resamples per objective evaluation.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Dataset family (uniform_cube).
    #[arg(long, default_value = "uniform_cube")]
    pub family: String,
    /// Ambient dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![30usize, 40, 60])]
    pub dims: Vec<usize>,
    /// Projected dimensions, comma separated.
    #[arg(long = "proj-dims", value_delimiter = ',', default_values_t = vec![1usize, 2, 5])]
    pub proj_dims: Vec<usize>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 20, 50, 125, 250, 625])]
    pub ns: Vec<usize>,
    /// Independent trials per cell.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// "mean_shift" or "cov_shift".
    #[arg(long)]
    pub family: String,
    /// Ambient dimensions to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 10, 20, 50])]
    pub dims: Vec<usize>,
    /// Trials per dimension.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Per-sample size (n = m).
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Coordinates carrying the covariance shift.
    #[arg(long = "intrinsic-dim", default_value_t = 1)]
    pub intrinsic_dim: usize,
    /// Draw the y sample from the null instead of the alternative
    /// (calibration runs).
    #[arg(long, default_value_t = false)]
    pub null: bool,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub perms: Option<usize>,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

/// Optional fields accepted in a `--config` JSON file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    sigma2: Option<f64>,
    rho: Option<f64>,
    proj_dim: Option<usize>,
    eta: Option<f64>,
    kappa: Option<f64>,
    tau: Option<StepRule>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
    alpha: Option<f64>,
    method: Option<String>,
    perms: Option<usize>,
    jobs: Option<usize>,
}

/// Fully resolved run settings; this is what the manifest records.
#[derive(Debug, Clone)]
struct Resolved {
    /// None means "median heuristic of the pooled data".
    sigma2: Option<f64>,
    rho: f64,
    proj_dim: usize,
    solver: SolverConfig,
    alpha: f64,
    method: String,
    perms: usize,
    jobs: usize,
}

impl Resolved {
    fn kernel_params(&self, pooled: &SampleSet) -> Result<KernelParams> {
        let sigma2 = match self.sigma2 {
            Some(v) => v,
            None => median_heuristic(pooled)?,
        };
        KernelParams::new(sigma2, self.rho, self.proj_dim)
    }

    fn config_json(&self) -> Value {
        json!({
            "sigma2": match self.sigma2 {
                Some(v) => json!(v),
                None => json!("median"),
            },
            "rho": self.rho,
            "proj_dim": self.proj_dim,
            "eta": self.solver.eta,
            "kappa": self.solver.kappa,
            "tau": serde_json::to_value(self.solver.tau).expect("step rule serializes"),
            "eps1": self.solver.eps1,
            "eps2": self.solver.eps2,
            "max_iters": self.solver.max_iters,
            "seed": self.solver.seed,
            "restarts": self.solver.restarts,
            "alpha": self.alpha,
            "method": self.method,
            "perms": self.perms,
            "jobs": self.jobs,
        })
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("KPW_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve(
    common: &CommonOpts,
    method: Option<&String>,
    alpha: Option<f64>,
    perms: Option<usize>,
) -> Result<Resolved> {
    let file = load_file_config(common.config.as_deref())?;
    let defaults = SolverConfig::default();
    let seed = common
        .seed
        .or(file.seed)
        .or_else(env_seed)
        .unwrap_or(DEFAULT_SEED);
    let solver = SolverConfig {
        eta: common.eta.or(file.eta).unwrap_or(defaults.eta),
        kappa: common.kappa.or(file.kappa).unwrap_or(defaults.kappa),
        tau: file.tau.unwrap_or(defaults.tau),
        eps1: common.eps1.or(file.eps1).unwrap_or(defaults.eps1),
        eps2: common.eps2.or(file.eps2).unwrap_or(defaults.eps2),
        max_iters: common
            .max_iters
            .or(file.max_iters)
            .unwrap_or(defaults.max_iters),
        seed,
        restarts: file.restarts.unwrap_or(defaults.restarts),
    };
    solver.validate()?;
    let method = method
        .cloned()
        .or(file.method)
        .unwrap_or_else(|| "permutation".to_string());
    if method != "analytic" && method != "permutation" {
        return Err(Error::InvalidParameter(format!(
            "method must be \"analytic\" or \"permutation\", got {method:?}"
        )));
    }
    Ok(Resolved {
        sigma2: common.sigma2.or(file.sigma2),
        rho: common.rho.or(file.rho).unwrap_or(0.5),
        proj_dim: common.proj_dim.or(file.proj_dim).unwrap_or(1),
        solver,
        alpha: alpha.or(file.alpha).unwrap_or(0.05),
        method,
        perms: perms.or(file.perms).unwrap_or(99),
        jobs: common.jobs.or(file.jobs).unwrap_or(0),
    })
}

/// Run manifest embedded in every emitted result.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub versions: String,
    pub timestamp: String,
}

impl RunManifest {
    fn new(command: &str, config: Value, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            versions: format!("kpw {}", env!("CARGO_PKG_VERSION")),
            timestamp: iso8601_utc(),
        }
    }
}

/// Current UTC time in ISO-8601. Honors SOURCE_DATE_EPOCH so runs can be
/// made byte-reproducible.
fn iso8601_utc() -> String {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    let days = secs.div_euclid(86_400);
    let sod = secs.rem_euclid(86_400);
    // civil-from-days
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let mut y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    if m <= 2 {
        y += 1;
    }
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
        y,
        m,
        d,
        sod / 3600,
        (sod % 3600) / 60,
        sod % 60
    )
}

fn emit_document(manifest: &RunManifest, result: Value, json_out: Option<&Path>) -> Result<()> {
    let doc = json!({
        "manifest": manifest,
        "result": result,
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&doc)?);
    print!("{text}");
    if let Some(path) = json_out {
        std::fs::write(path, &text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

fn write_table(path: &Path, manifest: &RunManifest, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# manifest: {}\n",
        serde_json::to_string(manifest)?
    ));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn in_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

/// Entry point used by the binary; maps outcomes onto the exit-code
/// contract.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Distance(args) => cmd_distance(&args),
        Command::Test(args) => cmd_test(&args),
        Command::Tune(args) => cmd_tune(&args),
        Command::Convergence(args) => cmd_convergence(&args),
        Command::Power(args) => cmd_power(&args),
        Command::Project(args) => cmd_project(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn cmd_distance(args: &DistanceArgs) -> Result<i32> {
    let resolved = resolve(&args.common, None, None, None)?;
    let xs = synthdata::load_csv(&args.x)?;
    let ys = synthdata::load_csv(&args.y)?;
    let pooled = SampleSet::concat(&xs, &ys)?;
    let params = resolved.kernel_params(&pooled)?;
    let result = kpw_distance(&xs, &ys, &params, &resolved.solver)?;

    let mut config = resolved.config_json();
    config["sigma2"] = json!(params.sigma2);
    let manifest = RunManifest::new("distance", config, resolved.solver.seed);
    emit_document(
        &manifest,
        serde_json::to_value(&result)?,
        args.common.json_out.as_deref(),
    )?;
    Ok(if result.converged { 0 } else { 2 })
}

fn cmd_test(args: &TestArgs) -> Result<i32> {
    let resolved = resolve(&args.common, args.method.as_ref(), args.alpha, args.perms)?;
    let xs = synthdata::load_csv(&args.x)?;
    let ys = synthdata::load_csv(&args.y)?;
    let pooled = SampleSet::concat(&xs, &ys)?;
    let params = resolved.kernel_params(&pooled)?;
    let outcome = match resolved.method.as_str() {
        "analytic" => analytic_test(&xs, &ys, &params, &resolved.solver, resolved.alpha)?,
        _ => in_pool(resolved.jobs, || {
            permutation_test(
                &xs,
                &ys,
                &params,
                &resolved.solver,
                resolved.perms,
                resolved.alpha,
                derive_seed(resolved.solver.seed, &[TRIAL_TAG]),
            )
        })?,
    };
    let mut config = resolved.config_json();
    config["sigma2"] = json!(params.sigma2);
    let manifest = RunManifest::new("test", config, resolved.solver.seed);
    emit_document(
        &manifest,
        serde_json::to_value(&outcome)?,
        args.common.json_out.as_deref(),
    )?;
    Ok(if outcome.reject_null { 3 } else { 0 })
}

fn cmd_tune(args: &TuneArgs) -> Result<i32> {
    let resolved = resolve(&args.common, None, None, None)?;
    let xs = synthdata::load_csv(&args.x)?;
    let ys = synthdata::load_csv(&args.y)?;
    let tuning = TuningConfig {
        num_bootstrap: args.bootstrap.unwrap_or(20),
        max_sa_iters: args.sa_iters.unwrap_or(100),
        sigma2_init: match resolved.sigma2 {
            Some(v) => Sigma2Init::Fixed(v),
            None => Sigma2Init::Median,
        },
        seed: resolved.solver.seed,
        ..TuningConfig::default()
    };
    let result = in_pool(resolved.jobs, || {
        tune(&xs, &ys, resolved.proj_dim, &tuning, &resolved.solver)
    })?;

    let mut config = resolved.config_json();
    config["sa_iters"] = json!(tuning.max_sa_iters);
    config["bootstrap"] = json!(tuning.num_bootstrap);
    let manifest = RunManifest::new("tune", config, resolved.solver.seed);

    if let Some(csv) = args.common.csv_out.as_deref() {
        let rows: Vec<String> = result
            .objective_trace
            .iter()
            .map(|(s2, rho, obj)| format!("{s2},{rho},{obj}"))
            .collect();
        write_table(csv, &manifest, "sigma2,rho,objective", &rows)?;
    }
    emit_document(
        &manifest,
        serde_json::to_value(&result)?,
        args.common.json_out.as_deref(),
    )?;
    Ok(0)
}

fn parse_family(name: &str) -> Result<Family> {
    match name {
        "uniform_cube" => Ok(Family::UniformCube),
        "mean_shift" | "gauss_mean_shift" => Ok(Family::GaussMeanShift),
        "cov_shift" | "gauss_cov_shift" => Ok(Family::GaussCovShift),
        "hdgm" => Ok(Family::Hdgm),
        other => Err(Error::InvalidParameter(format!("unknown family {other:?}"))),
    }
}

fn cmd_convergence(args: &ConvergenceArgs) -> Result<i32> {
    let mut resolved = resolve(&args.common, None, None, None)?;
    // protocol default for this benchmark (flags and config file still win)
    if resolved.sigma2.is_none() {
        resolved.sigma2 = Some(3.0);
    }
    let family = parse_family(&args.family)?;
    if args.dims.is_empty() || args.proj_dims.is_empty() || args.ns.is_empty() || args.trials == 0 {
        return Err(Error::InvalidParameter("empty experiment grid".into()));
    }

    #[derive(Clone, Copy)]
    struct Cell {
        dim: usize,
        proj: usize,
        n: usize,
        trial: usize,
    }
    let mut cells = Vec::new();
    for &dim in &args.dims {
        for &proj in &args.proj_dims {
            for &n in &args.ns {
                for trial in 0..args.trials {
                    cells.push(Cell {
                        dim,
                        proj,
                        n,
                        trial,
                    });
                }
            }
        }
    }

    let seed = resolved.solver.seed;
    let stats: Vec<Result<f64>> = in_pool(resolved.jobs, || {
        cells
            .par_iter()
            .map(|cell| {
                let trial_seed = derive_seed(
                    seed,
                    &[
                        TRIAL_TAG,
                        cell.dim as u64,
                        cell.proj as u64,
                        cell.n as u64,
                        cell.trial as u64,
                    ],
                );
                let spec = DatasetSpec {
                    family,
                    dim: cell.dim,
                    n: cell.n,
                    m: cell.n,
                    intrinsic_dim: None,
                    seed: trial_seed,
                };
                let (xs, ys) = synthdata::generate_pair(&spec, false)?;
                let params = KernelParams::new(
                    resolved.sigma2.expect("defaulted above"),
                    resolved.rho,
                    cell.proj,
                )?;
                let solver = SolverConfig {
                    seed: trial_seed,
                    ..resolved.solver
                };
                Ok(kpw_distance(&xs, &ys, &params, &solver)?.statistic)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(cells.len());
    for (cell, stat) in cells.iter().zip(stats) {
        let stat = stat?;
        rows.push(format!(
            "{},{},{},{},{stat}",
            cell.dim, cell.proj, cell.n, cell.trial
        ));
    }

    let manifest = RunManifest::new("convergence", resolved.config_json(), seed);
    let csv = args
        .common
        .csv_out
        .clone()
        .unwrap_or_else(|| PathBuf::from("convergence.csv"));
    write_table(&csv, &manifest, "D,d,n,trial,statistic", &rows)?;
    emit_document(
        &manifest,
        json!({"rows": rows.len(), "csv": csv.display().to_string()}),
        args.common.json_out.as_deref(),
    )?;
    Ok(0)
}

fn cmd_power(args: &PowerArgs) -> Result<i32> {
    let resolved = resolve(&args.common, args.method.as_ref(), args.alpha, args.perms)?;
    let family = parse_family(&args.family)?;
    if matches!(family, Family::UniformCube | Family::Hdgm) {
        return Err(Error::InvalidParameter(
            "power sweeps need a shift family (mean_shift or cov_shift)".into(),
        ));
    }
    if args.dims.is_empty() || args.trials == 0 {
        return Err(Error::InvalidParameter("empty experiment grid".into()));
    }
    let seed = resolved.solver.seed;
    let alternative = !args.null;

    let mut jobs_list = Vec::new();
    for &dim in &args.dims {
        for trial in 0..args.trials {
            jobs_list.push((dim, trial));
        }
    }

    let rejects: Vec<Result<bool>> = in_pool(resolved.jobs, || {
        jobs_list
            .par_iter()
            .map(|&(dim, trial)| {
                let trial_seed = derive_seed(seed, &[TRIAL_TAG, dim as u64, trial as u64]);
                let spec = DatasetSpec {
                    family,
                    dim,
                    n: args.n,
                    m: args.n,
                    intrinsic_dim: match family {
                        Family::GaussCovShift => Some(args.intrinsic_dim),
                        _ => None,
                    },
                    seed: trial_seed,
                };
                let (xs, ys) = synthdata::generate_pair(&spec, alternative)?;
                let pooled = SampleSet::concat(&xs, &ys)?;
                let params = resolved.kernel_params(&pooled)?;
                let solver = SolverConfig {
                    seed: trial_seed,
                    ..resolved.solver
                };
                let outcome = match resolved.method.as_str() {
                    "analytic" => analytic_test(&xs, &ys, &params, &solver, resolved.alpha)?,
                    _ => permutation_test(
                        &xs,
                        &ys,
                        &params,
                        &solver,
                        resolved.perms,
                        resolved.alpha,
                        trial_seed,
                    )?,
                };
                Ok(outcome.reject_null)
            })
            .collect()
    });

    let mut by_dim: std::collections::BTreeMap<usize, Vec<bool>> = Default::default();
    let mut flat = Vec::with_capacity(jobs_list.len());
    for (&(dim, trial), reject) in jobs_list.iter().zip(rejects) {
        let reject = reject?;
        by_dim.entry(dim).or_default().push(reject);
        flat.push((dim, trial, reject));
    }
    let power: std::collections::BTreeMap<usize, f64> = by_dim
        .iter()
        .map(|(&dim, marks)| {
            (
                dim,
                marks.iter().filter(|&&r| r).count() as f64 / marks.len() as f64,
            )
        })
        .collect();

    let rows: Vec<String> = flat
        .iter()
        .map(|&(dim, trial, reject)| format!("{dim},{trial},{},{}", u8::from(reject), power[&dim]))
        .collect();

    let mut config = resolved.config_json();
    config["family"] = json!(args.family);
    config["n"] = json!(args.n);
    config["trials"] = json!(args.trials);
    config["null"] = json!(args.null);
    if matches!(family, Family::GaussCovShift) {
        config["intrinsic_dim"] = json!(args.intrinsic_dim);
    }
    let manifest = RunManifest::new("power", config, seed);
    let csv = args
        .common
        .csv_out
        .clone()
        .unwrap_or_else(|| PathBuf::from("power.csv"));
    write_table(&csv, &manifest, "D,trial,reject,power", &rows)?;
    let power_json: serde_json::Map<String, Value> = power
        .iter()
        .map(|(dim, p)| (dim.to_string(), json!(p)))
        .collect();
    emit_document(
        &manifest,
        json!({"power": power_json, "csv": csv.display().to_string()}),
        args.common.json_out.as_deref(),
    )?;
    Ok(0)
}

fn cmd_project(args: &ProjectArgs) -> Result<i32> {
    let resolved = resolve(&args.common, None, None, None)?;
    let xs = synthdata::load_csv(&args.x)?;
    let ys = synthdata::load_csv(&args.y)?;
    let pooled = SampleSet::concat(&xs, &ys)?;
    let params = resolved.kernel_params(&pooled)?;
    let result = kpw_distance(&xs, &ys, &params, &resolved.solver)?;

    let base = args
        .common
        .csv_out
        .clone()
        .unwrap_or_else(|| PathBuf::from("projected.csv"));
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "projected".into());
    let dir = base.parent().map(Path::to_path_buf).unwrap_or_default();
    let x_path = dir.join(format!("{stem}_x.csv"));
    let y_path = dir.join(format!("{stem}_y.csv"));
    synthdata::save_csv(&SampleSet::new(result.projected_x.clone())?, &x_path)?;
    synthdata::save_csv(&SampleSet::new(result.projected_y.clone())?, &y_path)?;

    let mut config = resolved.config_json();
    config["sigma2"] = json!(params.sigma2);
    let manifest = RunManifest::new("project", config, resolved.solver.seed);
    emit_document(
        &manifest,
        json!({
            "statistic": result.statistic,
            "converged": result.converged,
            "x_csv": x_path.display().to_string(),
            "y_csv": y_path.display().to_string(),
        }),
        args.common.json_out.as_deref(),
    )?;
    Ok(0)
}
