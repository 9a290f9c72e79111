fn main() {
    std::process::exit(dreamespase::cli::main_with_args(std::env::args_os()));
}
