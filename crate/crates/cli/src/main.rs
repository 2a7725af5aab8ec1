//! `ldgeom`: evaluate large-deviation geometry quantities from a JSON spec.

mod commands;
mod failure;
mod render;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use sha2::{Digest, Sha256};
use serde_json::Value;

use commands::{Command, Context};
use failure::Failure;
use render::{num, Obj, Units};
use spec::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "ldgeom", version, about = "Large-deviation rate functions, projections and charts")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON problem spec
    #[arg(long, short)]
    input: PathBuf,
    /// Write the result here instead of stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Master seed for `verify` (overrides the spec)
    #[arg(long)]
    seed: Option<u64>,
    /// Conjugate solver gradient tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Conjugate solver iteration budget
    #[arg(long)]
    max_iter: Option<usize>,
    /// Report information quantities in bits
    #[arg(long)]
    bits: bool,
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&cli.input)
        .map_err(|e| Failure::spec("IO_ERROR", format!("{}: {e}", cli.input.display())))?;
    let spec = ProblemSpec::parse(&text)?;
    let units = Units { bits: cli.bits };
    let ctx = Context { spec: &spec, units, tol: cli.tol, max_iter: cli.max_iter, seed: cli.seed };
    let report = commands::run(cli.command, &ctx)?;

    if cli.format == Format::Csv {
        return render::to_csv(&report.results, report.table);
    }
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let flags = Obj::new()
        .set("seed", cli.seed.map_or(Value::Null, Value::from))
        .set("tol", cli.tol.map_or(Value::Null, num))
        .set("max_iter", cli.max_iter.map_or(Value::Null, Value::from))
        .set("bits", Value::from(cli.bits));
    let doc = Obj::new()
        .set("command", Value::from(cli.command.name()))
        .set("flags", flags)
        .set("input_sha256", Value::from(hex))
        .set("units", Value::from(units.name()))
        .set("results", report.results)
        .set("diagnostics", report.diagnostics)
        .set("wall_time_seconds", num(started.elapsed().as_secs_f64()))
        .build();
    Ok(render::to_json(&doc))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", Failure::spec("USAGE", first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, out)
                    .map_err(|e| Failure::spec("IO_ERROR", format!("{}: {e}", path.display()))),
                None => {
                    print!("{out}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(f) => {
                    eprintln!("{f}");
                    ExitCode::from(f.exit)
                }
            }
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit)
        }
    }
}
