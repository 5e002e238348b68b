fn main() {
    std::process::exit(genrekit::cli::run(std::env::args_os()));
}
