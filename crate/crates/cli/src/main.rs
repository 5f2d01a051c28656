fn main() {
    std::process::exit(srstream_cli::run_cli(std::env::args_os()));
}
