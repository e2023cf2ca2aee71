fn main() {
    std::process::exit(memeguard_cli::run(std::env::args_os()));
}
