fn main() {
    std::process::exit(vcrank_cli::run(std::env::args_os()));
}
