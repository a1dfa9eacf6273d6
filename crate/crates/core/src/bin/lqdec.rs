fn main() -> std::process::ExitCode {
    lqdec::cli::main_with_args(std::env::args_os())
}
