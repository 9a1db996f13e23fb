use std::process::ExitCode;

fn main() -> ExitCode {
    let code =
        std::panic::catch_unwind(|| tpi::cli::main_with_args(std::env::args_os())).unwrap_or(1);
    ExitCode::from(code as u8)
}
