fn main() {
    std::process::exit(exom::cli::run_cli(std::env::args_os()));
}
