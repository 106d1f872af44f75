//! `pjacobi` command line front end.
//!
//! Exit codes: 0 success, 1 bad input, 2 numerical failure or failed check,
//! 3 unreadable input or malformed JSON.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checks::{run_checks, CheckOptions};
use crate::error::Error;
use crate::heights::{estimate_report, height_map, EstimateReport};
use crate::inverse::{invert, SolveOptions, SolveTrace};
use crate::io::{format_f64, parse_heights, parse_point, point_to_json, to_json, InputError, PointJson};
use crate::jacobian::grad_heights;
use crate::model::{random_point, CoefficientPoint};
use crate::quasimomentum::sample;
use crate::spectrum::SpectralData;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Relative size of the edge shift applied by `check --inject-edge-error`.
const INJECTED_EDGE_ERROR: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(name = "pjacobi", version, about = "Spectra and height coordinates of periodic Jacobi matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct InputArg {
    /// Input file, or "-" for standard input.
    #[arg(short, long, default_value = "-")]
    pub input: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectrum, heights and estimates of a coefficient point.
    Forward {
        #[command(flatten)]
        input: InputArg,
        /// Also write the height Jacobian as CSV to this file.
        #[arg(long)]
        jacobian_csv: Option<PathBuf>,
    },
    /// Coefficient point with the given heights.
    Inverse {
        #[command(flatten)]
        input: InputArg,
        /// Period N; inferred from the height vector when omitted.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Use a finite-difference Jacobian in Newton steps.
        #[arg(long)]
        fd_jacobian: bool,
    },
    /// Invariant checks with residuals.
    Check {
        #[command(flatten)]
        input: InputArg,
        #[arg(long, hide = true)]
        inject_edge_error: bool,
    },
    /// Random valid coefficient point.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Quasimomentum on bands and gap slits as CSV.
    Quasimomentum {
        #[command(flatten)]
        input: InputArg,
        /// Points per band and per gap.
        #[arg(long, default_value_t = 50)]
        grid: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Io(String),
    Input(InputError),
    Lib(Error),
    CheckFailed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        match e {
            InputError::Invalid(e) => Failure::Lib(e),
            other => Failure::Input(other),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) | Failure::Input(_) => EXIT_IO,
            Failure::Lib(e) if e.is_domain() => EXIT_DOMAIN,
            Failure::Lib(_) | Failure::CheckFailed(_) => EXIT_NUMERICAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_IO => "io",
            EXIT_DOMAIN => "domain",
            _ => "numerical",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(m) | Failure::CheckFailed(m) => m.clone(),
            Failure::Input(e) => e.to_string(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorOutput<'a> {
    error: String,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    last_good: Option<PointJson<'a>>,
}

#[derive(Serialize)]
struct ForwardOutput<'a> {
    edges: &'a [f64],
    critical: &'a [f64],
    dirichlet: &'a [f64],
    h1: &'a [f64],
    h2: &'a [f64],
    habs: &'a [f64],
    estimates: &'a EstimateReport,
}

#[derive(Serialize)]
struct InverseOutput<'a> {
    n: usize,
    x: &'a [f64],
    b: &'a [f64],
    trace: &'a SolveTrace,
}

fn read_input(path: &str, stdin: &mut dyn Read) -> Result<String, Failure> {
    let mut text = String::new();
    if path == "-" {
        stdin.read_to_string(&mut text).map_err(|e| Failure::Io(format!("reading standard input: {e}")))?;
    } else {
        text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading {path}: {e}")))?;
    }
    Ok(text)
}

fn read_point(input: &InputArg, stdin: &mut dyn Read) -> Result<CoefficientPoint, Failure> {
    Ok(parse_point(&read_input(&input.input, stdin)?)?)
}

fn forward(p: &CoefficientPoint, jacobian_csv: Option<&PathBuf>) -> Result<String, Failure> {
    let spectral = SpectralData::compute(p)?;
    let h = height_map(p)?;
    let estimates = estimate_report(p, &spectral, &h);
    if let Some(path) = jacobian_csv {
        let csv = grad_heights(p)?.to_csv();
        fs::write(path, csv).map_err(|e| Failure::Io(format!("writing {}: {e}", path.display())))?;
    }
    Ok(to_json(&ForwardOutput {
        edges: &spectral.edges,
        critical: &spectral.critical,
        dirichlet: &spectral.dirichlet,
        h1: &h.h1,
        h2: &h.h2,
        habs: &h.habs,
        estimates: &estimates,
    }))
}

fn execute(cli: &Cli, stdin: &mut dyn Read) -> Result<String, Failure> {
    match &cli.command {
        Command::Forward { input, jacobian_csv } => forward(&read_point(input, stdin)?, jacobian_csv.as_ref()),
        Command::Inverse { input, n, tol, fd_jacobian } => {
            let target = parse_heights(&read_input(&input.input, stdin)?)?;
            let n_period = n.unwrap_or(target.gaps() + 1);
            let opts = SolveOptions { tol: *tol, fd_jacobian: *fd_jacobian, ..SolveOptions::default() };
            let (p, trace) = invert(&target, n_period, &opts)?;
            Ok(to_json(&InverseOutput { n: p.period(), x: p.x(), b: p.b(), trace: &trace }))
        }
        Command::Check { input, inject_edge_error } => {
            let p = read_point(input, stdin)?;
            let edge_error = if *inject_edge_error {
                INJECTED_EDGE_ERROR * SpectralData::compute(&p)?.bound
            } else {
                0.0
            };
            let report = run_checks(&p, &CheckOptions { edge_error, skip_jacobian: false })?;
            let text = to_json(&report);
            if report.pass {
                Ok(text)
            } else {
                Err(Failure::CheckFailed(text))
            }
        }
        Command::Random { n, seed, scale } => Ok(point_to_json(&random_point(*n, *scale, *seed)?)),
        Command::Quasimomentum { input, grid } => {
            if *grid == 0 {
                return Err(Error::InvalidArgument("grid must be at least 1".into()).into());
            }
            let p = read_point(input, stdin)?;
            let spectral = SpectralData::compute(&p)?;
            let mut csv = String::from("lambda,re_k,im_k");
            for row in sample(&p, &spectral, *grid)? {
                csv.push('\n');
                csv.push_str(&format!("{},{},{}", format_f64(row.lambda), format_f64(row.re), format_f64(row.im)));
            }
            Ok(csv)
        }
    }
}

fn error_payload(failure: &Failure) -> String {
    let mut out = ErrorOutput { error: failure.message(), kind: failure.kind(), t: None, gap: None, last_good: None };
    let last;
    match failure {
        Failure::Lib(Error::Stall { t, x, b }) => {
            last = CoefficientPoint::new_unchecked(x.clone(), b.clone());
            out.t = Some(*t);
            out.last_good = Some(PointJson::from(&last));
            to_json(&out)
        }
        Failure::Lib(Error::SingularJacobian { gap, x, b, .. }) => {
            last = CoefficientPoint::new_unchecked(x.clone(), b.clone());
            out.gap = Some(*gap);
            out.last_good = Some(PointJson::from(&last));
            to_json(&out)
        }
        _ => to_json(&out),
    }
}

/// Runs one invocation and returns the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_DOMAIN } else { EXIT_OK };
        }
    };
    match execute(&cli, stdin) {
        Ok(text) => {
            let _ = writeln!(stdout, "{text}");
            EXIT_OK
        }
        Err(Failure::CheckFailed(report)) => {
            let _ = writeln!(stdout, "{report}");
            let _ = writeln!(stderr, "pjacobi: one or more checks failed");
            EXIT_NUMERICAL
        }
        Err(failure) => {
            let _ = writeln!(stdout, "{}", error_payload(&failure));
            let _ = writeln!(stderr, "pjacobi: {}", failure.message());
            failure.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str], input: &str) -> (i32, String) {
        let mut stdin = input.as_bytes();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["pjacobi"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut stdin, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn usage_errors_are_domain_errors() {
        assert_eq!(call(&["frobnicate"], "").0, EXIT_DOMAIN);
        assert_eq!(call(&["random"], "").0, EXIT_DOMAIN);
        assert_eq!(call(&["--help"], "").0, EXIT_OK);
    }

    #[test]
    fn random_then_forward() {
        let (code, point) = call(&["random", "--n", "3", "--seed", "4"], "");
        assert_eq!(code, EXIT_OK);
        let (code, out) = call(&["forward"], &point);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["edges"].as_array().unwrap().len(), 6);
        assert!(v["estimates"]["checks"].is_array());
    }

    #[test]
    fn stall_reports_last_good_point() {
        let (code, out) = call(&["inverse", "--tol", "1e-300"], "{\"h1\":[0.5],\"h2\":[0.5]}");
        assert_eq!(code, EXIT_NUMERICAL);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["kind"], "numerical");
        assert!(v["last_good"]["x"].is_array());
    }
}
