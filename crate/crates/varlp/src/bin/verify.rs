//! Runs verification suites and kernel probes.
//!
//! Exit codes: 0 when everything passes, 1 when a scenario fails, 2 on
//! unreadable or invalid input.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varlp::exponent::{ExponentSpec, VariableExponent};
use varlp::grid::{test_cubes, Interval};
use varlp::kernels::{hormander_class_probe, size_condition_probe, Kernel, ProbeOptions, Variant};
use varlp::scenario::{list_scenarios, run_suite_file, RunOptions, Suite};
use varlp::Error;

#[derive(Parser)]
#[command(
    name = "verify",
    version,
    about = "Numerical checks of weighted variable-exponent inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a suite file and write one JSON report each.
    Run {
        suite: PathBuf,
        /// Output directory (default: $VERIFY_OUT_DIR, else ./verify-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the suite seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the scenarios of a suite (the bundled suite by default).
    List { suite: Option<PathBuf> },
    /// Probe a kernel for a Hörmander or size condition and print JSON.
    ///
    /// Kernels: zero, product, tilde, homogeneous, fractional. Keys:
    /// beta (kernel parameter, default 1), alpha, base (product|tilde),
    /// r (default 2), class_beta (default inf), variant (first|second),
    /// condition (hormander|size), window (a,b), coarse, fine, shifts.
    ProbeKernel {
        name: String,
        #[arg(value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

fn input_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Parse { .. } | Error::ScenarioInvalid { .. } | Error::Io(_) | Error::Json(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run { suite, out, jobs, seed } => {
            let out = out
                .or_else(|| std::env::var_os("VERIFY_OUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("verify-out"));
            let outcome = match run_suite_file(&suite, &RunOptions { seed, jobs }) {
                Ok(o) => o,
                Err(e) => return exit_for(&e),
            };
            if let Err(e) = outcome.write_to(&out) {
                return exit_for(&e);
            }
            for r in &outcome.reports {
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!(
                    "{verdict} {} ({}) max ratio {}",
                    r.scenario,
                    r.target.name(),
                    r.max_ratio
                );
                for c in r.checks.iter().filter(|c| !c.passed) {
                    println!("    {}: {}", c.name, c.detail);
                }
                for f in &r.failing_cases {
                    println!("    failing case: {f}");
                }
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Command::List { suite } => {
            let parsed = match suite {
                Some(path) => match std::fs::read_to_string(&path) {
                    Ok(text) => Suite::from_json(&text),
                    Err(e) => return input_error(format!("{}: {e}", path.display())),
                },
                None => Ok(Suite::default_suite()),
            };
            match parsed {
                Ok(s) => {
                    print!("{}", list_scenarios(&s));
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::ProbeKernel { name, params } => match probe_kernel(&name, &params) {
            Ok(json) => {
                println!("{json}");
                ExitCode::SUCCESS
            }
            Err(msg) => input_error(msg),
        },
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| format!("{key}: `{v}` is not a number")),
    }
}

fn exponent(key: &str, v: &str) -> Result<VariableExponent, String> {
    let spec = if v.trim_start().starts_with('{') {
        serde_json::from_str::<ExponentSpec>(v).map_err(|e| format!("{key}: {e}"))?
    } else {
        ExponentSpec::constant(parse_f64(key, v)?)
    };
    VariableExponent::from_spec(&spec).map_err(|e| format!("{key}: {e}"))
}

fn probe_kernel(name: &str, params: &[String]) -> Result<String, String> {
    let mut kv = BTreeMap::new();
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{p}`"))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let num = |k: &str, default: f64| kv.get(k).map_or(Ok(default), |v| parse_f64(k, v));
    let beta = num("beta", 1.0)?;
    let base = |b: &str| match b {
        "product" => Ok(Kernel::product(beta)),
        "tilde" => Ok(Kernel::tilde(beta)),
        _ => Err(format!("unknown base kernel `{b}`")),
    };
    let kernel = match name {
        "zero" => Kernel::Zero,
        "product" | "tilde" => base(name)?,
        "homogeneous" => Kernel::Homogeneous,
        "fractional" => Kernel::fractional(
            num("alpha", 0.5)?,
            base(kv.get("base").map_or("tilde", String::as_str))?,
        ),
        _ => return Err(format!("unknown kernel `{name}`")),
    };
    let r = exponent("r", kv.get("r").map_or("2", String::as_str))?;
    let class_beta = exponent("class_beta", kv.get("class_beta").map_or("inf", String::as_str))?;
    let variant = match kv.get("variant").map_or("first", String::as_str) {
        "first" => Variant::First,
        "second" => Variant::Second,
        v => return Err(format!("variant must be first or second, got `{v}`")),
    };
    let window = match kv.get("window") {
        Some(w) => {
            let (a, b) = w.split_once(',').ok_or("window takes a,b")?;
            Interval::try_new(parse_f64("window", a)?, parse_f64("window", b)?).map_err(|e| e.to_string())?
        }
        None => Interval::new(-16.0, 16.0),
    };
    let depth = |k: &str, d: u32| {
        kv.get(k)
            .map_or(Ok(d), |v| v.parse::<u32>().map_err(|e| format!("{k}: {e}")))
    };
    let shifts = depth("shifts", 1)?;
    let coarse = test_cubes(window, 0..=depth("coarse", 5)?, shifts);
    let fine = test_cubes(window, 0..=depth("fine", 6)?, shifts);
    let json = match kv.get("condition").map_or("hormander", String::as_str) {
        "hormander" => {
            let rep = hormander_class_probe(
                &kernel,
                &class_beta,
                &r,
                variant,
                &coarse,
                &fine,
                &ProbeOptions::default(),
            );
            serde_json::to_string_pretty(&rep)
        }
        "size" => {
            let rep = size_condition_probe(&kernel, &class_beta, &r, variant, &coarse, &fine, 5);
            serde_json::to_string_pretty(&rep)
        }
        c => return Err(format!("condition must be hormander or size, got `{c}`")),
    };
    json.map_err(|e| e.to_string())
}
