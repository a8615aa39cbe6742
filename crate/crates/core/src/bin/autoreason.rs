fn main() {
    std::process::exit(autoreason::cli::run(std::env::args_os()));
}
