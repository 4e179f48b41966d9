fn main() {
    std::process::exit(cran_sense::cli::main_with_args(std::env::args_os()));
}
