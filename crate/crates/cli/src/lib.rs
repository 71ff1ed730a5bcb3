//! Driver behind the `sbi` binary: runs one configured computation and
//! writes its report.
//!
//! Exit codes: 0 ok, 1 i/o failure, 2 config error, 3 non-convergence,
//! 4 certification failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use sbi_core::config::{parse_config, parse_config_lenient};
use sbi_core::run::{export, run, Status};

#[derive(Debug, Parser)]
#[command(name = "sbi", version, about = "Radial Schrodinger-Born-Infeld solver")]
struct Args {
    /// Configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for all sampled checks (overrides `[run] rng_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Reject unknown keys instead of warning.
    #[arg(long)]
    strict: bool,
}

fn code(status: Status) -> u8 {
    status.exit_code() as u8
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return code(Status::ConfigError);
        }
    };
    let parsed = if args.strict {
        parse_config(&text).map(|c| (c, Vec::new()))
    } else {
        parse_config_lenient(&text)
    };
    let mut cfg = match parsed {
        Ok((cfg, unknown)) => {
            for w in unknown {
                eprintln!("warning: {w}");
            }
            cfg
        }
        Err(e) => {
            eprintln!("error: {e}");
            return code(Status::ConfigError);
        }
    };
    if let Some(seed) = args.seed {
        cfg.run.rng_seed = seed;
    }
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return code(Status::ConfigError);
        }
    }
    let report = run(&cfg);
    if let Some(err) = report.get("error").and_then(|e| e.as_str()) {
        eprintln!("error: {err}");
    }
    match export(&report, &cfg.output.dir, &cfg.output) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return code(Status::IoError);
        }
    }
    eprintln!("status: {:?} ({:.2} s)", report.status, report.elapsed.as_secs_f64());
    code(report.status)
}
