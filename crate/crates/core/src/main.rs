use std::process::ExitCode;

fn main() -> ExitCode {
    dairy_p2p::cli::main_with_args(std::env::args_os())
}
