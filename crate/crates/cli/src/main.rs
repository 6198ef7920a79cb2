//! `ipv`: verify, diagnose, sweep, compare and generate fixtures.

mod args;
mod input;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use ipv_core::pipeline::{compare, diagnose, verify, VerifyOptions};
use ipv_core::sweep::{csv_string, gen_fixtures, run_sweep, FixtureSpec, Method, SweepSpec};
use ipv_core::{Network, SolverConfig, Status, Variant};

use args::{Cli, Command, Format, Output, Relaxation, Shape, VariantName};
use input::parse_input;

const USAGE_EXIT: u8 = 3;

#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<ipv_core::Error> for CliError {
    fn from(e: ipv_core::Error) -> Self {
        Self(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("IPV_LOG")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_EXIT),
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_EXIT)
        }
    }
}

fn run(cmd: Command) -> CliResult<u8> {
    match cmd {
        Command::Verify(a) => {
            let net = Network::load(&a.instance.net)?;
            let center = parse_input(&a.instance.input)?;
            let mut opts = options(&a.relaxation, &a.output)?;
            opts.target = a.targets.target;
            opts.diagnose = a.diagnose;
            let mut report = verify(&net, &center, a.instance.rho, &opts)?;
            if !a.output.timing {
                report.targets.iter_mut().for_each(|t| t.runtime_ms = None);
            }
            let text = match a.output.format {
                Format::Json => json(&report)?,
                Format::Csv => {
                    let rows: Vec<VerifyRow> = report
                        .targets
                        .iter()
                        .map(|t| VerifyRow {
                            predicted: report.predicted,
                            target: t.target,
                            variant: t.variant.clone(),
                            gamma: t.gamma,
                            status: t.status,
                            gap: t.gap,
                            primal_residual: t.primal_residual,
                            dual_residual: t.dual_residual,
                            iterations: t.iterations,
                            lambda_min: t.lambda_min,
                            runtime_ms: t.runtime_ms,
                            verdict: report.verdict.to_string(),
                        })
                        .collect();
                    csv(&rows)?
                }
            };
            emit(a.output.out.as_deref(), &text)?;
            Ok(report.verdict.exit_code() as u8)
        }
        Command::Diagnose(a) => {
            let net = Network::load(&a.instance.net)?;
            let center = parse_input(&a.instance.input)?;
            let opts = options(&a.relaxation, &a.output)?;
            let d = diagnose(&net, &center, a.instance.rho, &opts)?;
            let report = DiagnoseReport {
                variant: label(&opts),
                lambda_star: d.strict.lambda_star,
                status: d.strict.status,
                vanished: d.strict.vanished,
                min_eig_bound: d.min_eig_bound,
                iterations: d.solution.iterations,
                primal_residual: d.solution.residuals.primal,
                gap: d.solution.residuals.gap,
                runtime_ms: a.output.timing.then_some(d.runtime_ms),
            };
            let text = match a.output.format {
                Format::Json => json(&report)?,
                Format::Csv => csv(std::slice::from_ref(&report))?,
            };
            emit(a.output.out.as_deref(), &text)?;
            Ok(if report.status == Status::Optimal { 0 } else { 2 })
        }
        Command::Sweep(a) => {
            let methods = a.variants.iter().map(|s| s.parse::<Method>()).collect::<Result<Vec<_>, _>>()?;
            let mut spec = SweepSpec {
                depths: a.shape.depths.clone(),
                seeds: seeds(&a.shape),
                width: a.shape.width,
                input_dim: a.shape.input_dim,
                output_dim: a.shape.outputs,
                radius: a.shape.rho,
                methods,
                timing: a.timing,
                ..SweepSpec::default()
            };
            if let Some(tol) = a.gap_tol {
                spec.solver.gap_tol = tol;
            }
            let records = run_sweep(&spec)?;
            let text = match a.format {
                Format::Csv => csv_string(&records)?,
                Format::Json => json(&records.iter().map(|r| r.row()).collect::<Vec<_>>())?,
            };
            emit(a.out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Compare(a) => {
            let net = Network::load(&a.instance.net)?;
            let center = parse_input(&a.instance.input)?;
            let variants = a.variants.iter().map(|s| s.parse::<Variant>()).collect::<Result<Vec<_>, _>>()?;
            let cfg = solver(a.output.gap_tol)?;
            let rows = compare(&net, &center, a.instance.rho, a.targets.target, &variants, &cfg)?;
            let text = match a.output.format {
                Format::Json => json(&rows)?,
                Format::Csv => {
                    let flat: Vec<CompareCsv> = rows
                        .iter()
                        .flat_map(|r| {
                            r.entries.iter().map(|e| CompareCsv {
                                target: r.target,
                                gamma_star: r.gamma_star,
                                variant: e.variant.clone(),
                                gamma: e.gamma,
                                status: e.status,
                                gap_to_exact: e.gap_to_exact,
                            })
                        })
                        .collect();
                    csv(&flat)?
                }
            };
            emit(a.output.out.as_deref(), &text)?;
            Ok(0)
        }
        Command::GenFixtures(a) => {
            let spec = FixtureSpec {
                depths: a.shape.depths.clone(),
                seeds: seeds(&a.shape),
                width: a.shape.width,
                input_dim: a.shape.input_dim,
                output_dim: a.shape.outputs,
                radius: a.shape.rho,
            };
            let manifest = gen_fixtures(&a.out, &spec)?;
            eprintln!("wrote {} networks to {}", manifest.fixtures.len(), a.out.display());
            Ok(0)
        }
    }
}

fn seeds(shape: &Shape) -> Vec<u64> {
    (shape.seed..shape.seed + shape.seeds).collect()
}

fn variant(r: &Relaxation) -> CliResult<Variant> {
    let v = match r.variant {
        VariantName::Base => Variant::Base,
        VariantName::Eps => Variant::Epsilon(r.eps),
        VariantName::Leaky => Variant::Leaky(r.alpha),
        VariantName::Bremove => Variant::BRemove,
        VariantName::ProblemA => Variant::ProblemA,
        VariantName::ProblemB => Variant::ProblemB,
    };
    v.validate()?;
    Ok(v)
}

fn solver(gap_tol: Option<f64>) -> CliResult<SolverConfig> {
    let cfg = gap_tol.map_or_else(SolverConfig::default, |t| SolverConfig::default().with_gap_tol(t));
    cfg.validate()?;
    Ok(cfg)
}

fn options(r: &Relaxation, out: &Output) -> CliResult<VerifyOptions> {
    let mut opts = VerifyOptions {
        variant: variant(r)?,
        dscale: r.dscale,
        wscale: r.wscale,
        prune: !r.no_prune,
        solver: solver(out.gap_tol)?,
        ..VerifyOptions::default()
    };
    if let Some(t) = out.gap_tol {
        opts.diagnose_solver.gap_tol = t;
    }
    Ok(opts)
}

fn label(opts: &VerifyOptions) -> String {
    let mut s = opts.variant.name().to_string();
    if opts.dscale {
        s.push_str("+dscale");
    }
    if opts.wscale {
        s.push_str("+wscale");
    }
    s
}

#[derive(Serialize)]
struct DiagnoseReport {
    variant: String,
    lambda_star: f64,
    status: Status,
    vanished: bool,
    min_eig_bound: f64,
    iterations: usize,
    primal_residual: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_ms: Option<f64>,
}

#[derive(Serialize)]
struct VerifyRow {
    predicted: usize,
    target: usize,
    variant: String,
    gamma: f64,
    status: Status,
    gap: f64,
    primal_residual: f64,
    dual_residual: f64,
    iterations: usize,
    lambda_min: f64,
    runtime_ms: Option<f64>,
    verdict: String,
}

#[derive(Serialize)]
struct CompareCsv {
    target: usize,
    gamma_star: f64,
    variant: String,
    gamma: f64,
    status: Status,
    gap_to_exact: f64,
}

fn json<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError(e.to_string()))
}

fn csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
