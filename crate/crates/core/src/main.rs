fn main() {
    std::process::exit(densgeo::cli::main_with_args(std::env::args_os()));
}
