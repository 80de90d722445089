fn main() {
    std::process::exit(diplomat::cli::run(std::env::args_os()));
}
