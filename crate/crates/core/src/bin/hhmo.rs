fn main() -> std::process::ExitCode {
    hhmo::cli::main_with(std::env::args_os())
}
