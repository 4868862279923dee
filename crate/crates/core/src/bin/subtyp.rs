use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = subset_typicality::cli::run(std::env::args(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
