use std::process::ExitCode;

fn main() -> ExitCode {
    overgfm::cli::main_with_args(std::env::args_os())
}
