fn main() {
    std::process::exit(oodkit::cli::run(std::env::args_os()));
}
