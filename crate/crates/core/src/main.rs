fn main() {
    std::process::exit(cuntz_lab::cli::main_with_args(std::env::args_os()));
}
