fn main() {
    std::process::exit(fracpwc::cli::main_with_args(std::env::args_os()));
}
