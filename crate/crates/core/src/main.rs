fn main() {
    std::process::exit(rcavg::cli::main_with_args(std::env::args_os()));
}
