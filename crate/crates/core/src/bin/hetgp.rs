fn main() {
    std::process::exit(hetgp::cli::main_with_args(std::env::args_os()));
}
