fn main() {
    std::process::exit(cagpool::cli::run(std::env::args_os()));
}
