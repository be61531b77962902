fn main() {
    std::process::exit(sqhhg_cli::main_with_args(std::env::args_os()));
}
