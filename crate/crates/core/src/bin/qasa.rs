fn main() {
    std::process::exit(qasa::cli::run(std::env::args_os()));
}
