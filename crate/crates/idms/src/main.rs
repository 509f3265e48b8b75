use std::process::ExitCode;

fn main() -> ExitCode {
    let log = idms::log::Logger::stdout();
    ExitCode::from(idms::cli::main_with(std::env::args_os(), &log))
}
