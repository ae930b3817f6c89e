fn main() {
    std::process::exit(cutfem::study::cli::main_with_args(std::env::args_os()));
}
