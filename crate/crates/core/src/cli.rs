//! Batch command-line front end.
//!
//! Tables go to stdout, logs to stderr. Exit codes: 0 converged, 1 configuration
//! error, 2 iteration limit reached, 3 subproblem failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bench::{self, BenchmarkProblem, EigencontrolParams};
use crate::diagnostics::{coercivity_margin, degeneracy_report, error_estimate_ratio, sample_ball};
use crate::error::{Error, Result};
use crate::solver::{self, order_column, RhoRule, SolveReport, SolveStatus, SolverOptions, ORDER_FLOOR};
use crate::spaces::{Functional, PrimalVec};

pub const CSV_HEADER: &str =
    "k,rho,kkt_stationarity,kkt_feasibility,kkt_polar,kkt_total,err_z,dist_lambda,total_err,order";
pub const SWEEP_HEADER: &str = "parameter,value,status,iterations,final_kkt_total,min_order_last3";

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_SUBPROBLEM: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ssqp", version, about = "Stabilized SQP solver and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a benchmark and print the iterate history.
    Solve(RunArgs),
    /// Repeat a solve over a grid of one parameter.
    Sweep(RunArgs),
    /// Print structural diagnostics at a benchmark point as JSON.
    Diagnose(RunArgs),
    /// List registered benchmarks.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoRuleName {
    Proportional,
    Fixed,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    Theta,
    RhoFixed,
    Sigma1,
    StartRadius,
    N,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Theta => "theta",
            SweepParam::RhoFixed => "rho_fixed",
            SweepParam::Sigma1 => "sigma1",
            SweepParam::StartRadius => "start_radius",
            SweepParam::N => "n",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Configuration file (TOML); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long, value_enum)]
    pub rho_rule: Option<RhoRuleName>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub rho_min: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Comma-separated offset from the reference, or `default`, `zero`, `random`.
    #[arg(long, allow_hyphen_values = true)]
    pub start_offset: Option<String>,
    /// Comma-separated multiplier, or `default`, `auto`.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda0: Option<String>,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepParam>,
    /// Comma-separated grid values for `--sweep`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Diagnose at `reference` (default), a named reference, or `start`.
    #[arg(long)]
    pub point: Option<String>,
    /// Sample radius for the error-estimate ratio (default: half the certified radius).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q_d: Option<f64>,
    #[arg(long)]
    pub u_d_mode: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub u_d_amp: Option<f64>,
    #[arg(long)]
    pub branch_mode: Option<usize>,
}

/// A vector given either literally or by preset name.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VecSpec {
    Values(Vec<f64>),
    Preset(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    run: FileRun,
    #[serde(default)]
    options: FileOptions,
    #[serde(default)]
    eigencontrol: FileEigen,
    #[serde(default)]
    sweep: FileSweep,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRun {
    benchmark: Option<String>,
    start_offset: Option<VecSpec>,
    lambda0: Option<VecSpec>,
    output: Option<OutputFormat>,
    seed: Option<u64>,
    point: Option<String>,
    radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOptions {
    tol: Option<f64>,
    max_iter: Option<usize>,
    rho_rule: Option<RhoRuleName>,
    theta: Option<f64>,
    rho: Option<f64>,
    sigma0: Option<f64>,
    sigma1: Option<f64>,
    rho_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEigen {
    n: Option<usize>,
    alpha: Option<f64>,
    q_d: Option<f64>,
    u_d_mode: Option<usize>,
    u_d_amp: Option<f64>,
    branch_mode: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSweep {
    parameter: Option<SweepParam>,
    grid: Option<Vec<f64>>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: String,
    pub start_offset: VecSpec,
    pub lambda0: VecSpec,
    pub options: SolverOptions,
    pub output: OutputFormat,
    pub seed: u64,
    pub eigen: Option<EigencontrolParams>,
    pub sweep: Option<(SweepParam, Vec<f64>)>,
    pub point: String,
    pub radius: Option<f64>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("cannot parse '{t}': {e}"))))
        .collect()
}

fn parse_vec_spec(s: &str) -> Result<VecSpec> {
    let t = s.trim();
    if t.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
        Ok(VecSpec::Preset(t.to_string()))
    } else {
        parse_list(t).map(VecSpec::Values)
    }
}

impl RunConfig {
    /// Merges flags over the optional configuration file over defaults.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("invalid config: {e}")))?
            }
            None => FileConfig::default(),
        };
        let benchmark = args.benchmark.clone().or(file.run.benchmark).unwrap_or_else(|| "degenerate-line".into());
        let start_offset = match &args.start_offset {
            Some(s) => parse_vec_spec(s)?,
            None => file.run.start_offset.unwrap_or(VecSpec::Preset("default".into())),
        };
        let lambda0 = match &args.lambda0 {
            Some(s) => parse_vec_spec(s)?,
            None => file.run.lambda0.unwrap_or(VecSpec::Preset("default".into())),
        };
        let d = SolverOptions::default();
        let o = &file.options;
        let rule = args.rho_rule.or(o.rho_rule).unwrap_or(RhoRuleName::Proportional);
        let rho_rule = match rule {
            RhoRuleName::Proportional => RhoRule::ErrorProportional { theta: args.theta.or(o.theta).unwrap_or(1.0) },
            RhoRuleName::Fixed => RhoRule::Fixed {
                rho: args.rho.or(o.rho).ok_or_else(|| Error::InvalidArgument("--rho-rule fixed needs --rho".into()))?,
            },
            RhoRuleName::Oracle => RhoRule::TrueErrorOracle { sigma0: args.sigma0.or(o.sigma0).unwrap_or(1.0) },
        };
        let options = SolverOptions {
            tol: args.tol.or(o.tol).unwrap_or(d.tol),
            max_iter: args.max_iter.or(o.max_iter).unwrap_or(d.max_iter),
            rho_rule,
            sigma1: args.sigma1.or(o.sigma1).unwrap_or(d.sigma1),
            rho_min: args.rho_min.or(o.rho_min).unwrap_or(d.rho_min),
        };
        options.validate()?;
        let e = &file.eigencontrol;
        let r = EigencontrolParams::registered();
        let eigen_given = [
            args.n.is_some(),
            args.alpha.is_some(),
            args.q_d.is_some(),
            args.u_d_mode.is_some(),
            args.u_d_amp.is_some(),
            args.branch_mode.is_some(),
        ]
        .iter()
        .any(|&b| b)
            || e.n.is_some()
            || e.alpha.is_some()
            || e.q_d.is_some()
            || e.u_d_mode.is_some()
            || e.u_d_amp.is_some()
            || e.branch_mode.is_some();
        let eigen = if benchmark.starts_with("eigencontrol") {
            let n = args.n.or(e.n).unwrap_or(r.n);
            Some(EigencontrolParams {
                n,
                alpha: args.alpha.or(e.alpha).unwrap_or(r.alpha),
                q_d: args.q_d.or(e.q_d).unwrap_or(-bench::discrete_eigenvalue(n, 1)),
                u_d_mode: args.u_d_mode.or(e.u_d_mode).unwrap_or(r.u_d_mode),
                u_d_amp: args.u_d_amp.or(e.u_d_amp).unwrap_or(r.u_d_amp),
                branch_mode: args.branch_mode.or(e.branch_mode).unwrap_or(r.branch_mode),
            })
        } else if eigen_given {
            return Err(Error::InvalidArgument("eigencontrol parameters given for another benchmark".into()));
        } else {
            None
        };
        let sweep_param = args.sweep.or(file.sweep.parameter);
        let grid = match &args.grid {
            Some(g) => Some(parse_list(g)?),
            None => file.sweep.grid,
        };
        let sweep = match (sweep_param, grid) {
            (Some(p), Some(g)) => Some((p, g)),
            (Some(p), None) => Some((p, Vec::new())),
            (None, Some(_)) => return Err(Error::InvalidArgument("--grid needs --sweep".into())),
            (None, None) => None,
        };
        Ok(Self {
            benchmark,
            start_offset,
            lambda0,
            options,
            output: args.output.or(file.run.output).unwrap_or(OutputFormat::Csv),
            seed: args.seed.or(file.run.seed).unwrap_or(0),
            eigen,
            sweep,
            point: args.point.clone().or(file.run.point).unwrap_or_else(|| "reference".into()),
            radius: args.radius.or(file.run.radius),
        })
    }

    pub fn load_benchmark(&self) -> Result<BenchmarkProblem> {
        match (&self.eigen, self.benchmark.starts_with("eigencontrol")) {
            (Some(p), true) => {
                let b = bench::make_eigencontrol(*p)?;
                if self.benchmark != "eigencontrol-n49" && self.benchmark != "eigencontrol" && self.benchmark != b.name
                {
                    return Err(Error::InvalidArgument(format!("unknown benchmark '{}'", self.benchmark)));
                }
                Ok(b)
            }
            _ => bench::load_benchmark(&self.benchmark),
        }
    }

    /// Initial pair for `b`.
    pub fn start(&self, b: &BenchmarkProblem) -> Result<(PrimalVec, Functional)> {
        let p = &b.problem;
        let random = |radius: f64| -> Result<(PrimalVec, Functional)> {
            let r = b.reference().ok_or_else(|| Error::InvalidArgument("random start needs a reference".into()))?;
            b.seeded_start(r, radius, radius, self.seed)
        };
        let (z0, seeded_lambda) = match &self.start_offset {
            VecSpec::Values(v) => (b.start_from_offset(&PrimalVec::from_slice(v))?, None),
            VecSpec::Preset(s) => match s.as_str() {
                "default" => (b.start_from_offset(&b.default_offset)?, None),
                "zero" => (b.start_from_offset(&PrimalVec::zeros(p.nz()))?, None),
                "random" => {
                    let (z, l) = random(b.certified_radius)?;
                    (z, Some(l))
                }
                other => return Err(Error::InvalidArgument(format!("unknown start preset '{other}'"))),
            },
        };
        let lambda0 = match &self.lambda0 {
            VecSpec::Values(v) => {
                if v.len() != p.ny() {
                    return Err(Error::DimensionMismatch { expected: p.ny(), found: v.len() });
                }
                Functional::from_slice(v)
            }
            VecSpec::Preset(s) => match s.as_str() {
                "default" => seeded_lambda.unwrap_or_else(|| b.default_lambda0.clone()),
                "auto" => p.least_squares_multiplier(&z0)?,
                other => return Err(Error::InvalidArgument(format!("unknown multiplier preset '{other}'"))),
            },
        };
        Ok((z0, lambda0))
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.15e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn order_col(report: &SolveReport) -> Vec<Option<f64>> {
    order_column(&report.error_sequence(), ORDER_FLOOR)
}

/// The iterate history as CSV (header plus one row per iterate).
pub fn history_csv(report: &SolveReport) -> String {
    let orders = order_col(report);
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for (r, o) in report.history.iter().zip(orders) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_num(r.rho),
            fmt_num(r.kkt.stationarity),
            fmt_num(r.kkt.feasibility),
            fmt_num(r.kkt.polar_violation),
            fmt_num(r.kkt.total),
            fmt_opt(r.err_z),
            fmt_opt(r.dist_lambda),
            fmt_opt(r.total_err),
            fmt_opt(o),
        );
    }
    s
}

pub fn history_json(benchmark: &str, report: &SolveReport) -> Value {
    let orders = order_col(report);
    let history: Vec<Value> = report
        .history
        .iter()
        .zip(orders)
        .map(|(r, o)| {
            json!({
                "k": r.k,
                "rho": r.rho,
                "kkt_stationarity": r.kkt.stationarity,
                "kkt_feasibility": r.kkt.feasibility,
                "kkt_polar": r.kkt.polar_violation,
                "kkt_total": r.kkt.total,
                "err_z": r.err_z,
                "dist_lambda": r.dist_lambda,
                "total_err": r.total_err,
                "order": o,
            })
        })
        .collect();
    json!({
        "benchmark": benchmark,
        "status": report.status,
        "iterations": report.iterations(),
        "failed_iteration": report.failed_iteration,
        "observed_orders": report.observed_orders,
        "gamma_hat": report.gamma_hat,
        "z": report.last().z,
        "lambda": report.last().lambda,
        "history": history,
    })
}

pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => EXIT_CONVERGED,
        SolveStatus::MaxIter => EXIT_MAX_ITER,
        SolveStatus::SubproblemFailure => EXIT_SUBPROBLEM,
    }
}

fn solve_once(cfg: &RunConfig) -> Result<(BenchmarkProblem, SolveReport)> {
    let b = cfg.load_benchmark()?;
    let (z0, l0) = cfg.start(&b)?;
    let report = solver::run(&b.problem, &z0, &l0, &cfg.options, b.reference())?;
    Ok((b, report))
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let (b, report) = solve_once(cfg)?;
    match cfg.output {
        OutputFormat::Csv => out.write_all(history_csv(&report).as_bytes()),
        OutputFormat::Json => writeln!(out, "{}", history_json(&b.name, &report)),
    }
    .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(exit_code(report.status))
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub status: std::result::Result<SolveStatus, String>,
    pub iterations: usize,
    pub final_kkt: f64,
    pub min_order_last3: Option<f64>,
}

fn sweep_point(cfg: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    c.sweep = None;
    match param {
        SweepParam::Theta => c.options.rho_rule = RhoRule::ErrorProportional { theta: value },
        SweepParam::RhoFixed => c.options.rho_rule = RhoRule::Fixed { rho: value },
        SweepParam::Sigma1 => c.options.sigma1 = value,
        SweepParam::StartRadius => {}
        SweepParam::N => {
            let e = c
                .eigen
                .as_mut()
                .ok_or_else(|| Error::InvalidArgument("sweeping n needs an eigencontrol benchmark".into()))?;
            if !(value >= 0.0 && value.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!("n must be a nonnegative integer, got {value}")));
            }
            e.n = value as usize;
            e.q_d = -bench::discrete_eigenvalue(e.n, 1);
            c.benchmark = format!("eigencontrol-n{}", e.n);
        }
    }
    c.options.validate()?;
    Ok(c)
}

fn run_sweep_point(cfg: &RunConfig, param: SweepParam, value: f64) -> SweepRow {
    let result = sweep_point(cfg, param, value).and_then(|c| {
        if param == SweepParam::StartRadius {
            let b = c.load_benchmark()?;
            let r =
                b.reference().ok_or_else(|| Error::InvalidArgument("start_radius sweep needs a reference".into()))?;
            let (z0, l0) = b.seeded_start(r, value, value, c.seed)?;
            solver::run(&b.problem, &z0, &l0, &c.options, Some(r))
        } else {
            solve_once(&c).map(|(_, r)| r)
        }
    });
    match result {
        Ok(r) => {
            let tail = &r.observed_orders[r.observed_orders.len().saturating_sub(3)..];
            SweepRow {
                value,
                status: Ok(r.status),
                iterations: r.iterations(),
                final_kkt: r.last().kkt.total,
                min_order_last3: tail.iter().copied().reduce(f64::min),
            }
        }
        Err(e) => {
            SweepRow { value, status: Err(e.to_string()), iterations: 0, final_kkt: f64::NAN, min_order_last3: None }
        }
    }
}

/// Runs every grid point (in parallel); rows keep grid order.
pub fn sweep_rows(cfg: &RunConfig) -> Result<(SweepParam, Vec<SweepRow>)> {
    let (param, grid) =
        cfg.sweep.clone().ok_or_else(|| Error::InvalidArgument("sweep needs --sweep and --grid".into()))?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    cfg.load_benchmark()?;
    let rows = grid.par_iter().map(|&v| run_sweep_point(cfg, param, v)).collect();
    Ok((param, rows))
}

fn status_name(s: &std::result::Result<SolveStatus, String>) -> String {
    match s {
        Ok(SolveStatus::Converged) => "converged".into(),
        Ok(SolveStatus::MaxIter) => "max_iter".into(),
        Ok(SolveStatus::SubproblemFailure) => "subproblem_failure".into(),
        Err(_) => "error".into(),
    }
}

pub fn cmd_sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let (param, rows) = sweep_rows(cfg)?;
    for r in &rows {
        if let Err(e) = &r.status {
            log::warn!("{} = {}: {e}", param.name(), r.value);
        }
    }
    let text = match cfg.output {
        OutputFormat::Csv => {
            let mut s = format!("{SWEEP_HEADER}\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    param.name(),
                    fmt_num(r.value),
                    status_name(&r.status),
                    r.iterations,
                    fmt_num(r.final_kkt),
                    fmt_opt(r.min_order_last3)
                );
            }
            s
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "value": r.value,
                        "status": status_name(&r.status),
                        "error": r.status.as_ref().err(),
                        "iterations": r.iterations,
                        "final_kkt_total": r.final_kkt,
                        "min_order_last3": r.min_order_last3,
                    })
                })
                .collect();
            format!("{}\n", json!({ "benchmark": cfg.benchmark, "parameter": param.name(), "rows": rows }))
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(EXIT_CONVERGED)
}

/// ρ values at which the coercivity margin is reported.
pub const COERCIVITY_GRID: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

pub fn diagnose_json(cfg: &RunConfig) -> Result<Value> {
    let b = cfg.load_benchmark()?;
    let p = &b.problem;
    let (label, z, lambda) = match cfg.point.as_str() {
        "start" => {
            let (z, l) = cfg.start(&b)?;
            ("start".to_string(), z, l)
        }
        "reference" => {
            let r = b.references.first().ok_or_else(|| Error::InvalidArgument("benchmark has no reference".into()))?;
            (r.label.clone(), r.solution.z_star.clone(), r.solution.lambda_star.clone())
        }
        name => {
            let r = b
                .reference_named(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no reference named '{name}'")))?;
            (name.to_string(), r.z_star.clone(), r.lambda_star.clone())
        }
    };
    let degeneracy = degeneracy_report(p, &z)?;
    let h = p.hess_l(&z, &lambda)?;
    let j = p.jac_g(&z)?;
    let coercivity: Vec<Value> = COERCIVITY_GRID
        .iter()
        .map(|&rho| {
            let m = coercivity_margin(&h, &j, p.z_space.mass(), p.y_space.mass(), rho)?;
            Ok(json!({ "rho": rho, "margin": m }))
        })
        .collect::<Result<_>>()?;
    let (ratio, note) = match b.reference() {
        Some(r) => {
            let radius = cfg.radius.unwrap_or(0.5 * b.certified_radius);
            let samples = sample_ball(p, r, radius, 100, cfg.seed)?;
            let e = error_estimate_ratio(r, p, &samples)?;
            (
                json!({ "radius": radius, "samples": samples.len(), "ratio": e.ratio, "worst_sample": e.worst_sample, "skipped": e.skipped }),
                Value::Null,
            )
        }
        None => (Value::Null, json!("no registered reference; error estimate ratio unavailable")),
    };
    Ok(json!({
        "benchmark": b.name,
        "point": label,
        "kkt": p.kkt_residual(&z, &lambda)?,
        "degeneracy_report": degeneracy,
        "coercivity_margin": coercivity,
        "error_estimate_ratio": ratio,
        "note": note,
        "notes": b.notes,
    }))
}

pub fn cmd_diagnose(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let v = diagnose_json(cfg)?;
    writeln!(out, "{v}").map_err(|e| Error::Internal(e.to_string()))?;
    Ok(EXIT_CONVERGED)
}

pub fn cmd_list(out: &mut dyn Write) -> Result<i32> {
    for name in bench::list_benchmarks() {
        writeln!(out, "{name}").map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(EXIT_CONVERGED)
}

/// Parses `args` (including the program name), runs the command and returns the
/// exit code. Errors are reported on stderr.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_CONVERGED
                }
                _ => {
                    let _ = e.print();
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match &cli.command {
        Command::List => cmd_list(out),
        Command::Solve(a) => RunConfig::resolve(a).and_then(|c| cmd_solve(&c, out)),
        Command::Sweep(a) => RunConfig::resolve(a).and_then(|c| cmd_sweep(&c, out)),
        Command::Diagnose(a) => RunConfig::resolve(a).and_then(|c| cmd_diagnose(&c, out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
