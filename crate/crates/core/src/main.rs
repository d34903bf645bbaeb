fn main() {
    std::process::exit(factmix::cli::main_with_args(std::env::args_os()));
}
