fn main() {
    std::process::exit(predictalang::cli::main_with_args(std::env::args_os()));
}
