fn main() {
    std::process::exit(temptrec::cli::run(std::env::args_os()));
}
