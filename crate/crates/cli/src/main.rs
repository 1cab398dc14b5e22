fn main() {
    std::process::exit(phi4_cli::run_from_args(std::env::args_os()));
}
