fn main() {
    std::process::exit(mdiqkd::cli::main_with_args(std::env::args_os()));
}
