fn main() {
    std::process::exit(pemuta::cli::run(std::env::args_os()));
}
