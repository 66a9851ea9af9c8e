fn main() {
    std::process::exit(qaprune::cli::run(std::env::args_os()));
}
