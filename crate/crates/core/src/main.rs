fn main() {
    std::process::exit(pllmm::cli::main_with_args(std::env::args_os()));
}
