fn main() {
    std::process::exit(saae::cli::main_with_args(std::env::args_os()));
}
