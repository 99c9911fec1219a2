fn main() {
    std::process::exit(suitability_cli::run(std::env::args_os()));
}
