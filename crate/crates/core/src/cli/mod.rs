//! `qbd` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 non-ergodic
//! model, 3 numerical failure.

pub mod config;
mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::asymptotics::{boundedness_check, tail_law, tail_ratio_series};
use crate::error::Error;
use crate::expansion::expansion_table;
use crate::model::ModelParams;
use crate::rate_matrix::{compute_rate_rows_with, stationary_distribution, SolverOptions};

use config::{ExperimentConfig, SweepPoint};
use output::{fmt_num, CsvTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NON_ERGODIC: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_ENV: &str = "QBD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "qbd",
    version,
    about = "Retrial-queue QBD solver and expansion diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Truncation level.
    #[arg(long = "N", global = true)]
    horizon: Option<usize>,

    /// Convergence tolerance for the rate rows.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Expansion orders, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    orders: Option<Vec<usize>>,

    /// Output CSV path; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Idle-server counts for `tail`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    idle: Option<Vec<usize>>,

    /// Boundedness window for `tail`.
    #[arg(long, global = true)]
    window: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Stationary distribution of the truncated chain.
    Solve,
    /// Relative L1 error of truncated expansions against the exact rate row.
    ExpandError,
    /// Compensated tail series and boundedness verdicts.
    Tail,
    /// Expansion coefficient table.
    Coeffs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Model(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Model(Error::NonErgodic { .. } | Error::UndefinedRho) => EXIT_NON_ERGODIC,
            Failure::Model(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Model(_) => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Model(e) => write!(f, "{e}"),
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

/// Configuration after flag overrides have been applied.
struct Settings {
    cfg: ExperimentConfig,
    points: Vec<SweepPoint>,
    opts: SolverOptions,
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<Settings, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(Failure::Usage)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.horizon {
        cfg.solver.horizon = n;
    }
    if let Some(t) = cli.tol {
        cfg.solver.tol = t;
    }
    if let Some(o) = &cli.orders {
        cfg.expansion.orders = o.clone();
    }
    if let Some(k) = &cli.idle {
        cfg.tail.idle = Some(k.clone());
    }
    if let Some(w) = cli.window {
        cfg.tail.window = Some(w);
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.clone());
    }
    cfg.check().map_err(Failure::Usage)?;
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| Failure::Usage("a [model] section is required (use --config)".into()))?;
    let points = model.points().map_err(Failure::Usage)?;
    for pt in &points {
        let report = pt.params.validate();
        if !report.is_ok() {
            return Err(Failure::Model(Error::InvalidParams(report)));
        }
    }
    Ok(Settings {
        opts: SolverOptions {
            tol: cfg.solver.tol,
            max_depth: cfg.solver.max_depth,
        },
        out: cfg.output.path.clone(),
        points,
        cfg,
    })
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let s = load(cli)?;
    let pool = thread_pool()?;
    let table = match cli.command {
        Command::Solve => cmd_solve(&s)?,
        Command::ExpandError => pool.install(|| cmd_expand_error(&s))?,
        Command::Tail => pool.install(|| cmd_tail(&s))?,
        Command::Coeffs => cmd_coeffs(&s)?,
    };
    emit(&table, s.out.as_deref())
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize =
            v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
                Failure::Usage(format!("{THREADS_ENV} must be a positive integer"))
            })?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Failure::Usage(format!("cannot start worker threads: {e}")))
}

fn emit(table: &CsvTable, path: Option<&Path>) -> Result<(), Failure> {
    let text = table.render();
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn single_point(s: &Settings, what: &str) -> Result<ModelParams, Failure> {
    match s.points.as_slice() {
        [pt] => Ok(pt.params.clone()),
        _ => Err(Failure::Usage(format!(
            "{what} takes a single model; give lambda or a one-element traffic list"
        ))),
    }
}

fn cmd_solve(s: &Settings) -> Result<CsvTable, Failure> {
    let params = single_point(s, "solve")?;
    let horizon = s.cfg.solver.horizon;
    let rows = compute_rate_rows_with(&params, horizon, s.opts)?;
    let dist = stationary_distribution(&params, &rows)?;
    eprintln!(
        "levels 0..={horizon}: depth {} after {} doublings, estimated mass captured {}",
        rows.depth,
        rows.iterations,
        fmt_num(dist.mass_captured)
    );
    if dist.tail_warning {
        eprintln!(
            "warning: extrapolated tail mass {} exceeds the truncation threshold",
            fmt_num(dist.tail_estimate)
        );
    }
    let mut t = CsvTable::new(&["n", "i", "pi", "cumulative_mass"]);
    let mut cum = 0.0;
    for (n, level) in dist.levels() {
        for (i, &p) in level.iter().enumerate() {
            cum += p;
            t.push(vec![n.to_string(), i.to_string(), fmt_num(p), fmt_num(cum)]);
        }
    }
    Ok(t)
}

fn expand_errors(
    params: &ModelParams,
    horizon: usize,
    opts: SolverOptions,
    orders: &[usize],
) -> Result<Vec<f64>, Error> {
    let rows = compute_rate_rows_with(params, horizon, opts)?;
    let exact = rows.row(horizon);
    let max_order = orders.iter().copied().max().unwrap_or(1);
    let table = expansion_table(params, max_order)?;
    let norm: f64 = exact.iter().map(|v| v.abs()).sum();
    orders
        .iter()
        .map(|&m| {
            let approx = table.eval(horizon, m)?;
            let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum();
            Ok(diff / norm)
        })
        .collect()
}

fn cmd_expand_error(s: &Settings) -> Result<CsvTable, Failure> {
    let orders = &s.cfg.expansion.orders;
    let horizon = s.cfg.solver.horizon;
    let results: Vec<Result<Vec<f64>, Error>> = s
        .points
        .par_iter()
        .map(|pt| expand_errors(&pt.params, horizon, s.opts, orders))
        .collect();
    let mut header = vec!["rho_star".to_string()];
    header.extend(orders.iter().map(|m| format!("order_{m}")));
    let mut t = CsvTable::with_header(header);
    for (pt, res) in s.points.iter().zip(results) {
        let errs = res?;
        let mut row = vec![fmt_num(pt.rho_star)];
        row.extend(errs.into_iter().map(fmt_num));
        t.push(row);
    }
    Ok(t)
}

struct TailRun {
    series: Vec<(usize, Vec<Option<f64>>)>,
    verdicts: Vec<(usize, crate::asymptotics::Verdict)>,
}

fn tail_run(
    params: &ModelParams,
    horizon: usize,
    opts: SolverOptions,
    idle: &[usize],
    last_level: usize,
    window: usize,
) -> Result<TailRun, Failure> {
    if let Some(&k) = idle.iter().find(|&&k| k > params.capacity) {
        return Err(Failure::Usage(format!(
            "idle count {k} exceeds capacity {}",
            params.capacity
        )));
    }
    let rows = compute_rate_rows_with(params, horizon, opts)?;
    let dist = stationary_distribution(params, &rows)?;
    let law = tail_law(params)?;
    let mut run = TailRun {
        series: Vec::new(),
        verdicts: Vec::new(),
    };
    for &k in idle {
        let mut series = tail_ratio_series(&dist, &law, k)?;
        series.truncate(last_level);
        let verdict = boundedness_check(&series, window)
            .map_err(|e| Failure::Usage(format!("tail window: {e}")))?;
        run.series.push((k, series));
        run.verdicts.push((k, verdict));
    }
    Ok(run)
}

fn cmd_tail(s: &Settings) -> Result<CsvTable, Failure> {
    let horizon = s.cfg.solver.horizon;
    let idle = s.cfg.tail.idle.clone().unwrap_or_else(|| vec![0]);
    let last_level = s.cfg.tail.last_level.unwrap_or(horizon).min(horizon);
    let window = s.cfg.tail.window.unwrap_or(last_level / 2);
    let runs: Vec<Result<TailRun, Failure>> = s
        .points
        .par_iter()
        .map(|pt| tail_run(&pt.params, horizon, s.opts, &idle, last_level, window))
        .collect();

    let mut t = CsvTable::new(&["rho_star", "k", "n", "ratio"]);
    let mut v = CsvTable::new(&["rho_star", "k", "min", "max", "drift", "verdict"]);
    let mut log = String::new();
    for (pt, run) in s.points.iter().zip(runs) {
        let run = run?;
        let rho = fmt_num(pt.rho_star);
        for (k, series) in &run.series {
            for (j, value) in series.iter().enumerate() {
                let cell = value.map(fmt_num).unwrap_or_default();
                t.push(vec![rho.clone(), k.to_string(), (j + 1).to_string(), cell]);
            }
        }
        for (k, verdict) in &run.verdicts {
            let word = if verdict.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                log,
                "rho*={rho} k={k}: {word} (max/min {}, drift {})",
                fmt_num(verdict.spread()),
                fmt_num(verdict.drift)
            );
            v.push(vec![
                rho.clone(),
                k.to_string(),
                fmt_num(verdict.min),
                fmt_num(verdict.max),
                fmt_num(verdict.drift),
                word.to_string(),
            ]);
        }
    }
    eprint!("{log}");
    if let Some(out) = &s.out {
        let mut name = out.clone().into_os_string();
        name.push(".verdict.csv");
        emit(&v, Some(Path::new(&name)))?;
    }
    Ok(t)
}

fn cmd_coeffs(s: &Settings) -> Result<CsvTable, Failure> {
    let params = single_point(s, "coeffs")?;
    let max_order = s.cfg.expansion.orders.iter().copied().max().unwrap_or(1);
    let table = expansion_table(&params, max_order)?;
    let mut t = CsvTable::new(&["k", "m", "value", "saturated"]);
    for (k, m, value, sat) in table.entries() {
        t.push(vec![
            k.to_string(),
            m.to_string(),
            fmt_num(value),
            sat.to_string(),
        ]);
    }
    Ok(t)
}
