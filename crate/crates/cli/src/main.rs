fn main() {
    std::process::exit(reshare::cli::run(std::env::args_os().collect()));
}
