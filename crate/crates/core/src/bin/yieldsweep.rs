fn main() {
    std::process::exit(yieldsweep::cli::run_command(std::env::args_os()));
}
