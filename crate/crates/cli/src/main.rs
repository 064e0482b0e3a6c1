fn main() {
    std::process::exit(earkd_cli::main_with_args(std::env::args_os()));
}
