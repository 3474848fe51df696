fn main() {
    std::process::exit(epiloco::cli::main_with(std::env::args_os()));
}
