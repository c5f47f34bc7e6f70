use std::process::ExitCode;

use ppi_ipw::cli::{parse_args, run};

fn main() -> ExitCode {
    match parse_args(std::env::args_os()) {
        Ok(config) => ExitCode::from(run(&config) as u8),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
    }
}
