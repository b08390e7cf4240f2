fn main() {
    std::process::exit(advland::cli::run(std::env::args_os()));
}
