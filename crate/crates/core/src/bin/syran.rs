fn main() {
    std::process::exit(syran::cli::main_with_args(std::env::args_os()));
}
