use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(spde_gp::cli::main_with_args(std::env::args_os()))
}
