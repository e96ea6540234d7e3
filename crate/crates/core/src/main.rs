fn main() {
    std::process::exit(epgn::cli::run(std::env::args_os()));
}
