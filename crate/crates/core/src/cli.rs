//! Command-line front end: `analyze`, `simulate`, `sweep` and `kernels`.
//!
//! Machine output goes to stdout or to files, messages to stderr. Exit
//! codes: the verdict code (0, 1, 2) for `analyze`, 0 for other successful
//! commands, and the values below on errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{set_param, Config, Criterion};
use crate::delay::build_kernels;
use crate::error::Error;
use crate::linalg::C64;
use crate::lti::LambdaCheck;
use crate::netsim::{
    initial_state, simulate, stability_report, state_rate, sync_error_series, synchronization_report,
    NetworkSpec, RateFit, SimulationTrace, Subsystem,
};

/// Malformed configuration, bad path or bad arguments.
pub const EXIT_USAGE: i32 = 64;
/// The coupling matrix does not have `1_n` as an eigenvector.
pub const EXIT_NOT_CONSENSUS: i32 = 65;
/// Numerical failure.
pub const EXIT_SOFTWARE: i32 = 70;
/// Output could not be written.
pub const EXIT_IO: i32 = 74;

/// Relative width at which bisection stops.
pub const BISECT_RTOL: f64 = 1e-3;
const BISECT_MAX_ITER: usize = 60;

#[derive(Parser, Debug)]
#[command(name = "netsync", version, about = "Stability and synchronization of networks of identical linear subsystems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the network criterion and print a JSON report.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the network and write a CSV trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `simulation.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Start every node from the same state.
        #[arg(long)]
        diagonal_init: bool,
    },
    /// Vary one numeric config entry and tabulate verdicts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dot-separated path into the config, e.g. `system.a_mats.1.0.0`.
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        /// Refine every verdict change to relative width 1e-3.
        #[arg(long)]
        bisect: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the delay kernels p, f, g as CSV files into a directory.
    Kernels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConsensusEigenvector { .. } => EXIT_NOT_CONSENSUS,
            Error::Numeric(_) | Error::SingularShift { .. } | Error::AlgebraicLoop { .. } | Error::Coverage(_) => {
                EXIT_SOFTWARE
            }
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Analyze { config } => analyze(&load(&config)?, stdout),
        Command::Simulate { config, out, seed, diagonal_init } => {
            let cfg = load(&config)?;
            let csv = simulate_csv(&cfg, seed, diagonal_init)?;
            std::fs::write(&out, csv).map_err(|e| io_error(&out, e))?;
            Ok(0)
        }
        Command::Sweep { config, param, from, to, steps, bisect, seed, out } => {
            let text = read(&config)?;
            let base: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", config.display())))?;
            let csv = sweep_csv(&base, &param, from, to, steps, bisect, seed)?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| io_error(&path, e))?,
                None => stdout
                    .write_all(csv.as_bytes())
                    .map_err(|e| io_error(Path::new("<stdout>"), e))?,
            }
            Ok(0)
        }
        Command::Kernels { config, out } => {
            write_kernels(&load(&config)?, &out)?;
            Ok(0)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Config, CliError> {
    Config::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn pair(z: C64) -> Value {
    json!([z.re, z.im])
}

fn lambda_json(checks: &[LambdaCheck]) -> Value {
    checks
        .iter()
        .map(|l| {
            let mut entry = json!({
                "lambda": pair(l.lambda),
                "max_real_part": l.max_real_part,
                "stable": l.stable,
                "multiplicity": l.multiplicity,
            });
            if let Some(rho) = l.spectral_radius {
                entry["spectral_radius"] = json!(rho);
            }
            entry
        })
        .collect()
}

/// JSON report for the configured criterion, and its exit code.
pub fn analyze_json(cfg: &Config) -> Result<(Value, i32), CliError> {
    let net = cfg.network()?;
    let opts = cfg.analysis_options();
    Ok(match cfg.analysis.criterion {
        Criterion::Sync => {
            let r = synchronization_report(&net, &opts)?;
            let v = json!({
                "verdict": r.verdict.as_str(),
                "lambda1": pair(r.lambda1),
                "per_lambda": lambda_json(&r.per_lambda),
                "margin": r.margin,
            });
            (v, r.verdict.code() as i32)
        }
        Criterion::Stability => {
            let r = stability_report(&net, &opts)?;
            let v = json!({
                "verdict": r.verdict.as_str(),
                "per_lambda": lambda_json(&r.per_lambda),
                "margin": r.margin,
            });
            (v, r.verdict.code() as i32)
        }
    })
}

fn analyze(cfg: &Config, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (v, code) = analyze_json(cfg)?;
    let text = serde_json::to_string_pretty(&v).expect("json serializes");
    writeln!(stdout, "{text}").map_err(|e| io_error(Path::new("<stdout>"), e))?;
    Ok(code)
}

fn trace_for(cfg: &Config, net: &NetworkSpec, seed: Option<u64>, diagonal: bool) -> Result<SimulationTrace, CliError> {
    let (opts, cfg_seed) = cfg.sim_options()?;
    let x0 = initial_state(net, seed.unwrap_or(cfg_seed), diagonal)?;
    Ok(simulate(net, &x0, &opts)?)
}

/// CSV trace: `t,sync_error,state_norm,y_<j>_<k>_re,y_<j>_<k>_im,...`.
pub fn simulate_csv(cfg: &Config, seed: Option<u64>, diagonal: bool) -> Result<String, CliError> {
    let net = cfg.network()?;
    let trace = trace_for(cfg, &net, seed, diagonal)?;
    let (n, q) = trace.outputs[0].shape();
    let mut out = String::from("t,sync_error,state_norm");
    for j in 0..n {
        for k in 0..q {
            let _ = write!(out, ",y_{j}_{k}_re,y_{j}_{k}_im");
        }
    }
    out.push('\n');
    for (i, y) in trace.outputs.iter().enumerate() {
        let _ = write!(out, "{:e},{:e},{:e}", trace.times[i], trace.sync_error[i], trace.state_norms[i]);
        for j in 0..n {
            for k in 0..q {
                let _ = write!(out, ",{:e},{:e}", y[(j, k)].re, y[(j, k)].im);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Verdict of a sweep point: criterion and, with a simulation section, the
/// simulated counterpart (0 decays, 1 does not, 2 unresolved).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub param: f64,
    pub verdict: u8,
    /// Largest loop growth rate, or largest one-period spectral radius for delay systems.
    pub indicator: f64,
    pub sim_verdict: Option<u8>,
    pub fitted_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Point = 0,
    CriterionBoundary = 1,
    SimulationBoundary = 2,
}

fn sim_verdict(fit: &RateFit, rate_margin: f64) -> u8 {
    if fit.degenerate {
        2
    } else if fit.rate < -rate_margin {
        0
    } else {
        1
    }
}

struct Evaluate {
    criterion: bool,
    simulation: bool,
}

fn evaluate(base: &Value, path: &str, value: f64, seed: Option<u64>, what: &Evaluate) -> Result<SweepPoint, CliError> {
    let cfg = Config::from_value(set_param(base, path, value)?)?;
    let net = cfg.network()?;
    let opts = cfg.analysis_options();
    let (mut verdict, mut indicator) = (u8::MAX, f64::NAN);
    if what.criterion {
        let (code, checks) = match cfg.analysis.criterion {
            Criterion::Sync => {
                let r = synchronization_report(&net, &opts)?;
                (r.verdict.code(), r.per_lambda)
            }
            Criterion::Stability => {
                let r = stability_report(&net, &opts)?;
                (r.verdict.code(), r.per_lambda)
            }
        };
        verdict = code;
        indicator = match net.subsystem() {
            Subsystem::Delay(_) => checks.iter().filter_map(|l| l.spectral_radius).fold(f64::NEG_INFINITY, f64::max),
            _ => checks.iter().map(|l| l.max_real_part).fold(f64::NEG_INFINITY, f64::max),
        };
    }
    let (mut sim, mut fitted_rate) = (None, f64::NAN);
    if what.simulation && cfg.simulation.is_some() {
        let trace = trace_for(&cfg, &net, seed, false)?;
        let fit = match cfg.analysis.criterion {
            Criterion::Sync => sync_error_series(&trace).2,
            Criterion::Stability => state_rate(&trace),
        };
        sim = Some(sim_verdict(&fit, cfg.analysis.rate_margin));
        fitted_rate = fit.rate;
    }
    Ok(SweepPoint { param: value, verdict, indicator, sim_verdict: sim, fitted_rate })
}

/// Narrows `[lo, hi]` around a change of `key` and returns the point at
/// the upper end of the final bracket together with the bracket midpoint.
fn bisect<K>(base: &Value, path: &str, seed: Option<u64>, lo: SweepPoint, hi: SweepPoint, what: &Evaluate, key: K) -> Result<(f64, SweepPoint), CliError>
where
    K: Fn(&SweepPoint) -> Option<u8>,
{
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..BISECT_MAX_ITER {
        let width = (hi.param - lo.param).abs();
        if width <= BISECT_RTOL * lo.param.abs().max(hi.param.abs()) || width == 0.0 {
            break;
        }
        let mid = evaluate(base, path, 0.5 * (lo.param + hi.param), seed, what)?;
        if key(&mid) == key(&lo) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo.param + hi.param), hi))
}

/// Sweep rows `(kind, point)` ordered by parameter.
pub fn sweep(base: &Value, path: &str, from: f64, to: f64, steps: usize, refine: bool, seed: Option<u64>) -> Result<Vec<(RowKind, SweepPoint)>, CliError> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(usage("sweep needs finite bounds and at least one step"));
    }
    let values: Vec<f64> = (0..steps)
        .map(|k| if steps == 1 { from } else { from + (to - from) * k as f64 / (steps - 1) as f64 })
        .collect();
    let both = Evaluate { criterion: true, simulation: true };
    let points = values
        .par_iter()
        .map(|&v| evaluate(base, path, v, seed, &both))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<(RowKind, SweepPoint)> = points.iter().map(|p| (RowKind::Point, *p)).collect();
    if refine {
        let mut jobs = Vec::new();
        for w in points.windows(2) {
            if w[0].verdict != w[1].verdict {
                jobs.push((RowKind::CriterionBoundary, w[0], w[1]));
            }
            if w[0].sim_verdict.is_some() && w[0].sim_verdict != w[1].sim_verdict {
                jobs.push((RowKind::SimulationBoundary, w[0], w[1]));
            }
        }
        let found = jobs
            .par_iter()
            .map(|&(kind, lo, hi)| {
                let (at, point) = if kind == RowKind::CriterionBoundary {
                    let what = Evaluate { criterion: true, simulation: false };
                    bisect(base, path, seed, lo, hi, &what, |p| Some(p.verdict))?
                } else {
                    let what = Evaluate { criterion: false, simulation: true };
                    bisect(base, path, seed, lo, hi, &what, |p| p.sim_verdict)?
                };
                let mut row = point;
                row.param = at;
                if kind == RowKind::SimulationBoundary {
                    row.verdict = point.sim_verdict.unwrap_or(2);
                }
                Ok((kind, row))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        rows.extend(found);
    }
    rows.sort_by(|a, b| a.1.param.total_cmp(&b.1.param));
    Ok(rows)
}

/// CSV `kind,param,verdict,indicator,fitted_rate`.
pub fn sweep_csv(base: &Value, path: &str, from: f64, to: f64, steps: usize, refine: bool, seed: Option<u64>) -> Result<String, CliError> {
    let mut out = String::from("kind,param,verdict,indicator,fitted_rate\n");
    for (kind, p) in sweep(base, path, from, to, steps, refine, seed)? {
        let verdict = if p.verdict == u8::MAX { 2 } else { p.verdict };
        let _ = writeln!(out, "{},{:e},{},{:e},{:e}", kind as u8, p.param, verdict, p.indicator, p.fitted_rate);
    }
    Ok(out)
}

/// Writes `p.csv`, `f.csv` and `g.csv` into `dir`.
pub fn write_kernels(cfg: &Config, dir: &Path) -> Result<(), CliError> {
    let Subsystem::Delay(spec) = cfg.subsystem()? else {
        return Err(usage("kernels needs a delay system"));
    };
    let ks = build_kernels(&spec, cfg.analysis.delay_cells)?;
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let files = [
        ("p.csv", ks.p_csv()),
        ("f.csv", ks.f_csv()),
        ("g.csv", ks.g_csv().expect("built with g")),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}
