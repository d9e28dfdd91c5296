//! `demagkit`: batch runner for the convergence and validation studies.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use demagkit_core::experiments::{
    run_highfreq_convergence, run_periodic_convergence, run_qualitative_compare, run_truncation_decay,
    run_uniform_disk, DiskConfig, HighfreqConfig, PeriodicConfig, QualitativeConfig, TruncationConfig,
};
use demagkit_core::grid::write_field;
use demagkit_core::{Error, ScalarField};

#[derive(Parser)]
#[command(
    name = "demagkit",
    version,
    about = "Heat-regularized demagnetization potential studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exponential decay in R on the periodic test problem.
    PeriodicConvergence(Common),
    /// Decay in R for a source with a low-frequency gap, T = R/ω₀.
    HighfreqConvergence(Common),
    /// Plain truncation against regularization (`dim=2` or `dim=3`).
    TruncationDecay(Common),
    /// Hybrid potential against the direct integral representation.
    QualitativeCompare(Common),
    /// Interior field of a uniformly magnetized disk.
    UniformDisk(Common),
}

#[derive(Args)]
struct Common {
    /// JSON document with configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// `key=value` overrides applied after the config file; values parse as JSON
    /// when possible (`r_values=[2,3]`, `T=null`) and as strings otherwise.
    overrides: Vec<String>,
}

/// Bad input (exit 2) or a failed run (exit 1).
enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::Misaligned(_)
            | Error::GridTooSmall { .. }
            | Error::Format { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Solver(format!("{}: {e}", path.display()))
}

fn parse_override(raw: &str) -> Result<(String, Value), Failure> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Failure::Validation(format!("override `{raw}` is not key=value")))?;
    if key.is_empty() {
        return Err(Failure::Validation(format!("override `{raw}` has an empty key")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

/// Defaults, then the config file, then command-line overrides.
fn load_config<T: Serialize + DeserializeOwned>(base: T, common: &Common) -> Result<T, Failure> {
    let Value::Object(mut merged) =
        serde_json::to_value(&base).map_err(|e| Failure::Solver(e.to_string()))?
    else {
        unreachable!("configs serialize to objects");
    };
    if let Some(path) = &common.config {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        let doc: Map<String, Value> = serde_json::from_str(&text)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        merged.extend(doc);
    }
    for raw in &common.overrides {
        let (k, v) = parse_override(raw)?;
        merged.insert(k, v);
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Failure::Validation(format!("configuration: {e}")))
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(path).map_err(|e| io_failure(path, e))?;
        Ok(Self(path.to_path_buf()))
    }

    fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        let p = self.0.join(name);
        fs::write(&p, body).map_err(|e| io_failure(&p, e))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| Failure::Solver(e.to_string()))?;
        body.push('\n');
        self.text(name, &body)
    }

    fn field(&self, name: &str, f: &ScalarField) -> Result<(), Failure> {
        let p = self.0.join(name);
        let file = fs::File::create(&p).map_err(|e| io_failure(&p, e))?;
        write_field(BufWriter::new(file), f)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary<'a, C, R> {
    config: &'a C,
    result: &'a R,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::PeriodicConvergence(c)
        | Command::HighfreqConvergence(c)
        | Command::TruncationDecay(c)
        | Command::QualitativeCompare(c)
        | Command::UniformDisk(c) => c,
    };
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(Failure::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Solver(e.to_string()))?;
    }

    match &cli.command {
        Command::PeriodicConvergence(c) => {
            let cfg = load_config(PeriodicConfig::default(), c)?;
            let report = run_periodic_convergence(&cfg)?;
            let out = OutDir::create(&c.out)?;
            out.text("periodic_convergence.csv", &report.csv())?;
            out.json(
                "summary.json",
                &Summary {
                    config: &cfg,
                    result: &report,
                },
            )?;
        }
        Command::HighfreqConvergence(c) => {
            let cfg = load_config(HighfreqConfig::default(), c)?;
            let report = run_highfreq_convergence(&cfg)?;
            let out = OutDir::create(&c.out)?;
            out.text("highfreq_convergence.csv", &report.csv())?;
            let mut spectrum = Vec::new();
            report.spectrum.write_csv(&mut spectrum)?;
            out.text("spectrum.csv", &String::from_utf8_lossy(&spectrum))?;
            out.json(
                "summary.json",
                &Summary {
                    config: &cfg,
                    result: &report,
                },
            )?;
        }
        Command::TruncationDecay(c) => {
            // the dimension picks the base defaults
            let planar = load_config(TruncationConfig::planar(), c)?;
            let cfg = if planar.dim == 3 {
                load_config(TruncationConfig::spatial(), c)?
            } else {
                planar
            };
            let report = run_truncation_decay(&cfg)?;
            let out = OutDir::create(&c.out)?;
            out.text("truncation_decay.csv", &report.csv())?;
            out.json(
                "summary.json",
                &Summary {
                    config: &cfg,
                    result: &report,
                },
            )?;
        }
        Command::QualitativeCompare(c) => {
            let cfg = load_config(QualitativeConfig::default(), c)?;
            let report = run_qualitative_compare(&cfg)?;
            let out = OutDir::create(&c.out)?;
            out.text("qualitative_compare.csv", &report.csv())?;
            out.field("hybrid.field", &report.hybrid)?;
            out.field("oracle.field", &report.oracle)?;
            out.json(
                "summary.json",
                &Summary {
                    config: &cfg,
                    result: &report,
                },
            )?;
        }
        Command::UniformDisk(c) => {
            let cfg = load_config(DiskConfig::default(), c)?;
            let report = run_uniform_disk(&cfg)?;
            let out = OutDir::create(&c.out)?;
            out.text("uniform_disk.csv", &report.csv())?;
            out.field("potential.field", &report.potential)?;
            out.json(
                "summary.json",
                &Summary {
                    config: &cfg,
                    result: &report,
                },
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("demagkit: invalid input: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("demagkit: {msg}");
            ExitCode::from(1)
        }
    }
}
