use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(typegaze_cli::dispatch(std::env::args_os()))
}
