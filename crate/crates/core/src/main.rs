fn main() {
    std::process::exit(energymix::cli::main_with_args(std::env::args_os()));
}
