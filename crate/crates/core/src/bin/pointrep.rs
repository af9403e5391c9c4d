fn main() {
    std::process::exit(pointrep::cli::run(std::env::args_os()));
}
