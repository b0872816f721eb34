fn main() {
    std::process::exit(evframe_cli::main_with_args(std::env::args_os()));
}
