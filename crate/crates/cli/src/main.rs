//! `sbi`: runs one configured computation and writes its report.

use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sbi_cli::run_cli(std::env::args_os()))
}
