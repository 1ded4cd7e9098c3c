fn main() {
    std::process::exit(blb::cli::run(std::env::args_os()));
}
