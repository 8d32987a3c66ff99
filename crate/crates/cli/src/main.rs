use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(grasplab_cli::run(std::env::args_os()))
}
