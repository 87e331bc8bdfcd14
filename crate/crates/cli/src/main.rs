fn main() {
    std::process::exit(coda_cli::main_with_args(std::env::args_os()));
}
