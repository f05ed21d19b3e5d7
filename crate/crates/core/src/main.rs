fn main() {
    std::process::exit(salrank::cli::run(std::env::args_os()));
}
