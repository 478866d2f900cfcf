fn main() {
    std::process::exit(cli_persistence::run(std::env::args_os()));
}
