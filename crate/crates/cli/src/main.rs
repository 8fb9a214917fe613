use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

mod commands;
mod config;

use commands::Outcome;
use config::{Command, Format, Params, RunConfig};

/// Numerical laboratory for the rate of convergence of random walks to
/// Brownian motion in Sobolev path space.
#[derive(Debug, Parser)]
#[command(name = "donsker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    params: Params,
    /// JSON config file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads; affects wall time only
    #[arg(long, global = true, env = "DONSKER_THREADS")]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a RunConfig,
    header: &'a [&'static str],
    rows: &'a [Vec<String>],
    checks: &'a [donsker_core::distance::Check],
    passed: bool,
}

fn write_csv(out: &Outcome, w: impl Write) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(&out.header)?;
    for r in &out.rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn emit(cfg: &RunConfig, out: &Outcome, format: Format, path: Option<&PathBuf>) -> Result<(), String> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(out, &mut buf).map_err(|e| e.to_string())?,
        Format::Json => {
            let rep = JsonReport { config: cfg, header: &out.header, rows: &out.rows, checks: &out.checks, passed: out.passed() };
            serde_json::to_writer_pretty(&mut buf, &rep).map_err(|e| e.to_string())?;
            buf.push(b'\n');
        }
    }
    match path {
        Some(p) => std::fs::write(p, &buf).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => std::io::stdout().write_all(&buf).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match cli.config.as_deref().map(Params::from_file).transpose() {
        Ok(p) => p.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match RunConfig::resolve(cli.command, cli.params.or(file)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: invalid value for `threads`: must be >= 1");
        return ExitCode::from(2);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };

    let start = Instant::now();
    let outcome = match pool.install(|| commands::run(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    eprintln!("wall time: {:.3} s on {} threads", start.elapsed().as_secs_f64(), pool.current_num_threads());
    if let Err(e) = emit(&cfg, &outcome, cli.format, cli.out.as_ref()) {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} ({})", c.name, c.detail);
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
