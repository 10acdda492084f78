fn main() {
    std::process::exit(adcrnn::cli::run(std::env::args_os()));
}
