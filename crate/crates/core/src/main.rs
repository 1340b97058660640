fn main() {
    std::process::exit(swgnss::cli::run(std::env::args_os()));
}
