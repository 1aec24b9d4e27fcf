fn main() {
    std::process::exit(domsplit::cli::main_with_args(std::env::args_os()));
}
