fn main() {
    std::process::exit(dift_cli::main_with(std::env::args_os()));
}
