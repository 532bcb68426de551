fn main() {
    std::process::exit(vulnscape::cli::run(std::env::args_os()));
}
