use std::process::ExitCode;

fn main() -> ExitCode {
    sobfno::cli::main_with(std::env::args_os().collect())
}
