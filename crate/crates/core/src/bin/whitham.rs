fn main() {
    std::process::exit(whitham::cli::main_with_args(std::env::args_os()));
}
