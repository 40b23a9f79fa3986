fn main() {
    std::process::exit(xyconv::cli::run(std::env::args_os()));
}
