fn main() {
    std::process::exit(cirsim::cli::run_from(std::env::args_os()));
}
