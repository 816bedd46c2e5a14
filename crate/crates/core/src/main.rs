fn main() {
    std::process::exit(swlab::cli::main_with_args(std::env::args_os()));
}
