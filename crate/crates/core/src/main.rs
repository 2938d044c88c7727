fn main() {
    std::process::exit(dynpen::cli::run(std::env::args_os()));
}
