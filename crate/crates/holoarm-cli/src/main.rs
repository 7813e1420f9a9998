fn main() {
    std::process::exit(holoarm_cli::run(std::env::args().skip(1).collect()));
}
