fn main() {
    std::process::exit(star_mcem::cli::run(std::env::args_os()));
}
