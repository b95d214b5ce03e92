fn main() {
    std::process::exit(embalign::cli::run(std::env::args_os()));
}
