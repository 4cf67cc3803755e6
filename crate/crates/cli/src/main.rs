fn main() {
    std::process::exit(csl_cli::main_with_args(std::env::args_os()));
}
