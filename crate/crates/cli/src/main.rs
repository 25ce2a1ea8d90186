//! `foliamod` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numerical failure.

mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use foliamod::analysis::mean_curvature_field;
use foliamod::gallery;
use foliamod::optimizer::solve_global;
use foliamod::quadrature::{hat, ScalarField};
use foliamod::verify::{self, Context};

use config::{parse_p_list, Format, RunArgs, RunConfig};
use output::{FieldTable, SweepRow};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FOLIAMOD_THREADS";

/// Number of random test functions in a `compute` report.
const REPORT_TEST_FUNCTIONS: usize = 10;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl From<foliamod::Error> for CliError {
    fn from(e: foliamod::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "foliamod",
    version,
    about = "p-modulus of foliations given by submersions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in examples with their parameters.
    List {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compute the modulus by every route and write a report.
    Compute {
        #[command(flatten)]
        run: RunArgs,
        /// Include wall-clock timings (makes the report run-dependent).
        #[arg(long)]
        timings: bool,
    },
    /// Run a verification suite.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Suite name: all, coarea, extremal, cross-route, integral-formula,
        /// extremality, mean-curvature, harmonic, modulus-properties.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Export a per-node field table.
    Export {
        #[command(flatten)]
        run: RunArgs,
        /// One of f0, jac, hat1, meancurv, f_opt.
        #[arg(long)]
        field: Option<String>,
    },
    /// Compute the modulus for a list of exponents.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated exponents, e.g. `1.5,2,3`.
        #[arg(long = "p-list")]
        p_list: Option<String>,
    },
}

fn emit(text: &str, cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Config(format!("cannot write output: {e}")))
        }
    }
}

fn context(cfg: &RunConfig) -> Result<Context, CliError> {
    Ok(Context::new(
        cfg.chart.clone(),
        &cfg.grid,
        cfg.p,
        cfg.seed,
        cfg.solver,
    )?)
}

fn cmd_compute(run: &RunArgs, timings: bool) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let ctx = context(&cfg)?;
    let report = verify::compute_report(&ctx, REPORT_TEST_FUNCTIONS, timings)?;
    let pass = verify::report_passes(&report);
    emit(
        &output::report(&report, pass, cfg.format_or(Format::Json)),
        &cfg,
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "cross-route gap {:e} or residuals outside tolerance",
            report.cross_route_gap()
        )))
    }
}

fn cmd_verify(run: &RunArgs, suite: Option<&str>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let suite = cfg.suite(suite)?;
    let ctx = context(&cfg)?;
    let report = verify::run_suite(&ctx, suite)?;
    emit(&output::suite(&report, cfg.format_or(Format::Text)), &cfg)?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Verification(format!(
            "failed checks: {}",
            names.join(", ")
        )))
    }
}

const EXPORT_FIELDS: [&str; 5] = ["f0", "jac", "hat1", "meancurv", "f_opt"];

fn cmd_export(run: &RunArgs, field: Option<&str>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let field = field
        .or(cfg.file.field.as_deref())
        .ok_or_else(|| {
            CliError::Config(format!(
                "--field is required ({})",
                EXPORT_FIELDS.join(", ")
            ))
        })?
        .to_string();
    if !EXPORT_FIELDS.contains(&field.as_str()) {
        return Err(CliError::Config(format!(
            "unknown field {field:?}; expected one of {}",
            EXPORT_FIELDS.join(", ")
        )));
    }
    let ctx = context(&cfg)?;
    let n = ctx.chart.dim_total();
    let scalar =
        |f: ScalarField| -> Vec<Vec<f64>> { f.values().iter().map(|&v| vec![v]).collect() };
    let (value_columns, values): (Vec<String>, Vec<Vec<f64>>) = match field.as_str() {
        "f0" => (vec!["f0".into()], scalar(ctx.extremal()?)),
        "jac" => (
            vec!["jac".into()],
            ctx.bundle.jac().iter().map(|&v| vec![v]).collect(),
        ),
        "hat1" => {
            let one = ScalarField::constant(ctx.quad.grid(), 1.0);
            (
                vec!["hat1".into()],
                scalar(hat(&one, &ctx.bundle, &ctx.quad)?),
            )
        }
        "f_opt" => {
            let sol = solve_global(&ctx.bundle, &ctx.quad, ctx.p, &ctx.solver)?;
            (vec!["f_opt".into()], scalar(sol.field))
        }
        "meancurv" => {
            let h = mean_curvature_field(&ctx.chart, &ctx.quad)?;
            let cols = (0..n).map(|i| format!("H{i}")).collect();
            (
                cols,
                (0..ctx.quad.grid().len())
                    .map(|i| h.at(i).to_vec())
                    .collect(),
            )
        }
        _ => unreachable!("field checked above"),
    };
    let mut columns: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
    columns.extend(value_columns);
    let rows = values
        .into_iter()
        .enumerate()
        .map(|(i, vals)| {
            let mut row = ctx.quad.node(i);
            row.extend(vals);
            row
        })
        .collect();
    let table = FieldTable {
        field,
        columns,
        rows,
    };
    emit(
        &output::field_table(&table, cfg.format_or(Format::Csv)),
        &cfg,
    )
}

fn cmd_sweep(run: &RunArgs, p_list: Option<&str>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(run)?;
    let ps = match (p_list, &cfg.file.p_list) {
        (Some(s), _) => parse_p_list(s)?,
        (None, Some(list)) => list.clone(),
        (None, None) => vec![cfg.p],
    };
    for &p in &ps {
        foliamod::modulus::check_exponent(p)?;
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(ps.len());
    if !ps.is_empty() {
        let base = context(&cfg)?;
        for p in ps {
            let start = Instant::now();
            let ctx = base.with_p(p)?;
            let report = verify::compute_report(&ctx, 0, false)?;
            let pass = verify::report_passes(&report);
            let delta_prev = rows.last().map(|r| report.mod_closed - r.mod_closed);
            rows.push(SweepRow {
                p,
                mod_closed: report.mod_closed,
                mod_direct: report.mod_direct,
                mod_opt: report.mod_opt.unwrap_or(f64::NAN),
                cross_route_gap: report.cross_route_gap(),
                pass,
                delta_prev,
                runtime_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    emit(&output::sweep(&rows, cfg.format_or(Format::Csv)), &cfg)?;
    match rows.iter().find(|r| !r.pass) {
        Some(r) => Err(CliError::Verification(format!(
            "cross-route check failed at p = {}",
            r.p
        ))),
        None => Ok(()),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::List { format } => {
            print!("{}", output::catalog(&gallery::catalog(), *format));
            Ok(())
        }
        Command::Compute { run, timings } => cmd_compute(run, *timings),
        Command::Verify { run, suite } => cmd_verify(run, suite.as_deref()),
        Command::Export { run, field } => cmd_export(run, field.as_deref()),
        Command::Sweep { run, p_list } => cmd_sweep(run, p_list.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Config(m) => ("configuration error", m),
                CliError::Numerical(m) => ("numerical failure", m),
                CliError::Verification(m) => ("verification failure", m),
            };
            eprintln!("foliamod: {kind}: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
