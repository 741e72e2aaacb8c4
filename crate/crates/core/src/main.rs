fn main() {
    std::process::exit(turnbench::cli::main_with_args(std::env::args_os()));
}
