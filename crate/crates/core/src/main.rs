fn main() {
    std::process::exit(otdiff::cli::run(std::env::args_os()));
}
