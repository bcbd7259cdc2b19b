fn main() {
    std::process::exit(fractel_core::cli::run_from_args(std::env::args_os()));
}
