fn main() {
    std::process::exit(symplectic_cli::run(std::env::args_os()));
}
