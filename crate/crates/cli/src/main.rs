use std::process::ExitCode;

fn main() -> ExitCode {
    shiftup::run(std::env::args_os())
}
