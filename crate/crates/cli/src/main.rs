use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(drgame_cli::run_from_args(std::env::args_os()))
}
