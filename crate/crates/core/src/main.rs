fn main() {
    std::process::exit(hookroute::cli::main_with_args(std::env::args_os()));
}
