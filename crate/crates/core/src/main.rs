use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DORMALLOC_LOG", "warn")).init();
    ExitCode::from(dormalloc::cli::main_with_args(std::env::args_os()))
}
