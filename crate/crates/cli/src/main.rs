fn main() {
    std::process::exit(monqfi_cli::main_with_args(std::env::args_os()));
}
