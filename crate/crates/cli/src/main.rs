fn main() {
    std::process::exit(bicause_cli::main_with_args(std::env::args_os()));
}
