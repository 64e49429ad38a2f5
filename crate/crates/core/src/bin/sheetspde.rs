fn main() {
    std::process::exit(sheetspde::cli::main_with_args(std::env::args_os()));
}
