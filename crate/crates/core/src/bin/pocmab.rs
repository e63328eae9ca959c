fn main() {
    std::process::exit(pocmab::cli::run(std::env::args_os()));
}
