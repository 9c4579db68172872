fn main() {
    std::process::exit(turfsim::cli::main_with_args(std::env::args_os()));
}
