fn main() {
    std::process::exit(mcascade::cli::run(std::env::args_os()));
}
