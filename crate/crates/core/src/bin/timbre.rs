fn main() {
    std::process::exit(timbre::cli::run(std::env::args_os()));
}
