use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use qboson::fock::operator_from_json;
use qboson::qcalc::{q_exponential, q_factorials, q_number, QExpVariant, SeriesOptions};
use qboson::representations::{diagonal_representation, normal_order_coeffs, q_poisson_pmf};
use qboson::verify::{run_suite, Report, RunConfig, Suite};
use qboson::{DeformationParam, DensityMatrix, Error, FockTruncation};

/// Exit status for usage and configuration errors.
const EXIT_USAGE: u8 = 2;
/// Exit status for domain errors and failed checks.
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "qboson", version, about = "q-deformed boson calculus and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tables of q-numbers, q-factorials and q-exponentials.
    ///
    /// CSV columns: `n,q_number,q_factorial` for `--n`, `x,variant,value` for `--exp`.
    Qfunc(QfuncArgs),
    /// Run a verification suite and emit the JSON report.
    ///
    /// CSV columns: `check,q,n_max,J,M,mu,residual,tolerance,pass,expected_violation`.
    Verify(VerifyArgs),
    /// q-Poisson distribution `s^n / ([n]! e_q(s))`.
    ///
    /// CSV columns: `n,p`.
    Poisson(PoissonArgs),
    /// Term list of the diagonal representation of a density matrix.
    ///
    /// CSV columns: `n,m,derivative_order,fourier_index,re,im`.
    Diagonal(DiagonalArgs),
    /// Normal-ordering coefficients `C[p][s]` of an operator.
    ///
    /// CSV columns: `p,s,re,im`.
    NormalOrder(NormalOrderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// `e_q(x) = sum x^n / [n]!`
    Small,
    /// `E_q(x) = sum q^{n(n-1)/2} x^n / [n]!`
    Big,
}

#[derive(Args)]
struct QfuncArgs {
    #[arg(long, value_parser = parse_q)]
    q: DeformationParam,
    /// Inclusive range `a..b` of n.
    #[arg(long, value_parser = parse_range)]
    n: Option<(usize, usize)>,
    /// Evaluate the q-exponential at this real argument.
    #[arg(long = "exp", allow_hyphen_values = true)]
    exp: Option<f64>,
    #[arg(long, value_enum, default_value = "small")]
    variant: Variant,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_parser = parse_suite)]
    suite: Suite,
    #[arg(long, value_parser = parse_q, default_value = "0.5")]
    q: DeformationParam,
    #[arg(long, value_parser = parse_trunc, default_value = "12")]
    nmax: FockTruncation,
    /// Quadrature grid `JxM` (radial x angular nodes).
    #[arg(long, value_parser = parse_grid, default_value = "200x64")]
    grid: (usize, usize),
    #[arg(long, value_parser = parse_tol, default_value = "1e-6")]
    tol: f64,
    #[arg(long, default_value = "42")]
    seed: u64,
    /// Also write the JSON report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct PoissonArgs {
    #[arg(long, value_parser = parse_q)]
    q: DeformationParam,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value = "20")]
    nmax: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct DiagonalArgs {
    /// Density matrix as JSON `{n_max, q, re, im}`.
    #[arg(long)]
    rho: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct NormalOrderArgs {
    /// Operator as JSON `{n_max, q, re, im}`.
    #[arg(long)]
    op: PathBuf,
    #[arg(long)]
    cutoff: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn parse_q(s: &str) -> Result<DeformationParam, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    DeformationParam::new(v).map_err(|e| e.to_string())
}

fn parse_trunc(s: &str) -> Result<FockTruncation, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    FockTruncation::new(v).map_err(|e| e.to_string())
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("tolerance must be positive, got {v}"))
    }
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
        .map_err(|_| format!("expected one of {}", Suite::NAMES.join(", ")))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: usize = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (j, m) = s.split_once(['x', 'X']).ok_or("expected JxM, e.g. 200x64")?;
    let j: usize = j.parse().map_err(|e| format!("{e}"))?;
    let m: usize = m.parse().map_err(|e| format!("{e}"))?;
    Ok((j, m))
}

/// Failure carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidDeformation(_)
            | Error::InvalidTruncation(_)
            | Error::GridMismatch(_)
            | Error::CutoffTooLarge { .. }
            | Error::DimensionMismatch { .. }
            | Error::Json(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: String) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Qfunc(a) => cmd_qfunc(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Poisson(a) => cmd_poisson(a),
        Command::Diagonal(a) => cmd_diagonal(a),
        Command::NormalOrder(a) => cmd_normal_order(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    println!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct QNumberRow {
    n: usize,
    q_number: f64,
    q_factorial: f64,
}

#[derive(Serialize)]
struct ExpValue {
    q: f64,
    x: f64,
    variant: &'static str,
    value: f64,
}

fn cmd_qfunc(a: QfuncArgs) -> Result<u8, Failure> {
    let q = a.q;
    if let Some(x) = a.exp {
        let (variant, label) = match a.variant {
            Variant::Small => (QExpVariant::SmallE, "e_q"),
            Variant::Big => (QExpVariant::BigE, "E_q"),
        };
        let v = q_exponential(Complex64::new(x, 0.0), q, variant, SeriesOptions::default())?.re;
        match a.format {
            Format::Table => println!("{label}({x}) = {v}"),
            Format::Csv => println!("x,variant,value\n{x},{label},{v}"),
            Format::Json => emit_json(&ExpValue {
                q: q.value(),
                x,
                variant: label,
                value: v,
            })?,
        }
        if a.n.is_none() {
            return Ok(0);
        }
    }
    let (lo, hi) = a.n.unwrap_or((0, 10));
    let fact = q_factorials(hi, q)?;
    let rows: Vec<QNumberRow> = (lo..=hi)
        .map(|n| QNumberRow {
            n,
            q_number: q_number(n, q),
            q_factorial: fact[n],
        })
        .collect();
    match a.format {
        Format::Table => {
            println!("{:>4}  {:>24}  {:>24}", "n", "[n]", "[n]!");
            for r in &rows {
                println!("{:>4}  {:>24}  {:>24}", r.n, r.q_number, r.q_factorial);
            }
        }
        Format::Csv => {
            println!("n,q_number,q_factorial");
            for r in &rows {
                println!("{},{},{}", r.n, r.q_number, r.q_factorial);
            }
        }
        Format::Json => emit_json(&rows)?,
    }
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, Failure> {
    let cfg = RunConfig {
        q: a.q,
        n_max: a.nmax,
        radial: a.grid.0,
        angular: a.grid.1,
        tol: a.tol,
        seed: a.seed,
    };
    let report = run_suite(a.suite, &cfg)?;
    let json = report.to_json()?;
    if let Some(path) = &a.output {
        fs::write(path, format!("{json}\n")).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    match a.format {
        Format::Json => println!("{json}"),
        Format::Csv => print!("{}", report_csv(&report)),
        Format::Table => print!("{}", report_table(&report)),
    }
    for f in report.failures() {
        eprintln!(
            "FAILED {}: residual {:e} vs tolerance {:e}",
            f.check, f.residual, f.tolerance
        );
    }
    Ok(if report.pass { 0 } else { EXIT_FAILURE })
}

fn report_csv(r: &Report) -> String {
    let mut out = String::from("check,q,n_max,J,M,mu,residual,tolerance,pass,expected_violation\n");
    for c in &r.checks {
        let (j, m, mu) = c
            .grid
            .map_or((String::new(), String::new(), String::new()), |g| {
                (g.radial.to_string(), g.angular.to_string(), g.mu.to_string())
            });
        let _ = writeln!(
            out,
            "{},{},{},{j},{m},{mu},{:e},{:e},{},{}",
            c.check, c.q, c.n_max, c.residual, c.tolerance, c.pass, c.expected_violation
        );
    }
    out
}

fn report_table(r: &Report) -> String {
    let mut out = format!(
        "suite {} q = {} n_max = {} mu = {} weight = {}\n",
        r.suite,
        r.config.q,
        r.config.n_max.n_max(),
        r.measure.mu,
        r.measure.weight_form.label()
    );
    for c in &r.checks {
        let status = match (c.satisfied(), c.expected_violation) {
            (true, true) => "ok (expected violation)",
            (true, false) => "ok",
            (false, _) => "FAIL",
        };
        let _ = writeln!(
            out,
            "{:<44} {:>12.3e} {:>12.3e}  {status}",
            c.check, c.residual, c.tolerance
        );
    }
    let _ = writeln!(out, "overall: {}", if r.pass { "pass" } else { "FAIL" });
    out
}

#[derive(Serialize)]
struct PoissonTable {
    q: f64,
    s: f64,
    n_max: usize,
    pmf: Vec<f64>,
    sum: f64,
    tail: f64,
}

fn cmd_poisson(a: PoissonArgs) -> Result<u8, Failure> {
    let pmf = q_poisson_pmf(a.s, a.q, a.nmax)?;
    let sum: f64 = pmf.iter().sum();
    match a.format {
        Format::Table => {
            println!("{:>4}  {:>24}", "n", "p_n");
            for (n, p) in pmf.iter().enumerate() {
                println!("{n:>4}  {p:>24.16e}");
            }
            println!("sum  {sum}\ntail {:e}", 1.0 - sum);
        }
        Format::Csv => {
            println!("n,p");
            for (n, p) in pmf.iter().enumerate() {
                println!("{n},{p}");
            }
        }
        Format::Json => emit_json(&PoissonTable {
            q: a.q.value(),
            s: a.s,
            n_max: a.nmax,
            tail: 1.0 - sum,
            pmf,
            sum,
        })?,
    }
    Ok(0)
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn cmd_diagonal(a: DiagonalArgs) -> Result<u8, Failure> {
    let rho = DensityMatrix::from_json(&read(&a.rho)?)?;
    let rep = diagonal_representation(&rho)?;
    match a.format {
        Format::Json => emit_json(&rep)?,
        Format::Csv => {
            println!("n,m,derivative_order,fourier_index,re,im");
            for t in &rep.terms {
                println!(
                    "{},{},{},{},{},{}",
                    t.n, t.m, t.derivative_order, t.fourier_index, t.coefficient.re, t.coefficient.im
                );
            }
        }
        Format::Table => {
            println!("{:>3} {:>3} {:>5} {:>5}  {:>24} {:>24}", "n", "m", "p", "l", "re", "im");
            for t in &rep.terms {
                println!(
                    "{:>3} {:>3} {:>5} {:>5}  {:>24} {:>24}",
                    t.n, t.m, t.derivative_order, t.fourier_index, t.coefficient.re, t.coefficient.im
                );
            }
        }
    }
    Ok(0)
}

fn cmd_normal_order(a: NormalOrderArgs) -> Result<u8, Failure> {
    let op = operator_from_json(&read(&a.op)?)?;
    let c = normal_order_coeffs(&op, a.cutoff)?;
    match a.format {
        Format::Json => emit_json(&c)?,
        Format::Csv | Format::Table => {
            let csv = matches!(a.format, Format::Csv);
            if csv {
                println!("p,s,re,im");
            } else {
                println!("{:>3} {:>3}  {:>24} {:>24}", "p", "s", "re", "im");
            }
            for (p, row) in c.table.iter().enumerate() {
                for (s, v) in row.iter().enumerate() {
                    if csv {
                        println!("{p},{s},{},{}", v.re, v.im);
                    } else {
                        println!("{p:>3} {s:>3}  {:>24} {:>24}", v.re, v.im);
                    }
                }
            }
        }
    }
    Ok(0)
}
